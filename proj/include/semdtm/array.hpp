#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace semdtm {

using Shape = std::vector<std::size_t>;
using MultiIndex = std::vector<std::size_t>;

/**
 * Multi-dimensional real array, row-major, with an optional nodata mask.
 *
 * Immutable after construction. Masked cells always store 0.0 so that
 * equality and digests never depend on what sat underneath the mask, and a
 * mask with no masked cell is dropped. Equality is bit-exact on unmasked
 * values (any two NaNs compare equal) and ignores the name.
 */
class NdArray {
public:
    NdArray(Shape shape, std::vector<double> data, std::optional<std::vector<bool>> mask = std::nullopt,
            std::string name = {});

    static NdArray filled(Shape shape, double value);
    static NdArray vector(std::vector<double> values);
    static NdArray matrix(const std::vector<std::vector<double>>& rows);
    static NdArray scalar(double value) { return vector({value}); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::span<const double> data() const { return data_; }
    double operator[](std::size_t flat) const { return data_[flat]; }

    bool has_mask() const { return mask_.has_value(); }
    const std::optional<std::vector<bool>>& mask() const { return mask_; }
    bool masked(std::size_t flat) const { return mask_ && (*mask_)[flat]; }
    std::size_t masked_count() const;

    const std::string& name() const { return name_; }
    NdArray with_name(std::string name) const;
    NdArray reshaped(Shape shape) const;

    std::vector<std::size_t> strides() const;
    MultiIndex unravel(std::size_t flat) const;
    std::size_t ravel(std::span<const std::size_t> index) const;

    friend bool operator==(const NdArray& a, const NdArray& b);

private:
    Shape shape_;
    std::vector<double> data_;
    std::optional<std::vector<bool>> mask_;
    std::string name_;
};

using ArrayMap = std::map<std::string, NdArray>;

std::size_t shape_size(const Shape& shape);
std::string format_shape(const Shape& shape);
std::string format_index(const MultiIndex& index);

// Shortest decimal form that parses back to the same double.
std::string format_number(double value);
// Full-token parse; accepts a leading '+', "nan", "inf", "-inf".
std::optional<double> parse_number(std::string_view token);

struct Discrepancy {
    double max_abs_diff = 0.0;
    double max_rel_diff = 0.0;
    MultiIndex worst_cell;
    std::size_t cells_compared = 0;
    std::size_t mask_mismatch_count = 0;
};

inline constexpr double kDefaultRelFloor = 1e-12;

// Cellwise comparison over mutually unmasked cells. A NaN against a non-NaN
// counts as an infinite difference; two NaNs (or equal infinities) as zero.
Discrepancy compare(const NdArray& a, const NdArray& b, double rel_floor = kDefaultRelFloor);

// ESRI-style ASCII grid: "ncols", "nrows", optional "nodata_value" headers,
// then nrows lines of ncols numbers.
NdArray parse_grid(std::string_view text);
std::string render_grid(const NdArray& a);

// Comma-separated rows without header; an empty field is a nodata cell.
NdArray parse_csv(std::string_view text);

// Stable text form for any rank: render_grid for 2-D, a "shape" header plus
// row-major values otherwise. Used for content digests.
std::string canonical_text(const NdArray& a);

// File helpers. load_array dispatches on extension (.csv or grid).
std::string read_text_file(const std::filesystem::path& path);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);
NdArray load_array(const std::filesystem::path& path);

// Stacks equally shaped arrays along a new leading axis.
NdArray stack(std::span<const NdArray> layers);

}  // namespace semdtm
