#include "semdtm/array.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <system_error>

#include "semdtm/error.hpp"

namespace semdtm {

namespace {

bool same_bits(double x, double y) {
    if (std::isnan(x) && std::isnan(y)) return true;
    std::uint64_t bx = 0;
    std::uint64_t by = 0;
    std::memcpy(&bx, &x, sizeof x);
    std::memcpy(&by, &y, sizeof y);
    return bx == by;
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string format_shape(const Shape& shape) { return format_index(shape); }

std::string format_index(const MultiIndex& index) {
    std::string out = "[";
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(index[i]);
    }
    return out + "]";
}

NdArray::NdArray(Shape shape, std::vector<double> data, std::optional<std::vector<bool>> mask, std::string name)
    : shape_(std::move(shape)), data_(std::move(data)), mask_(std::move(mask)), name_(std::move(name)) {
    if (shape_.empty()) throw ShapeError("array must have at least one dimension");
    for (std::size_t extent : shape_) {
        if (extent == 0) throw ShapeError("array extents must be >= 1, got " + format_shape(shape_));
    }
    if (data_.size() != shape_size(shape_)) {
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         format_shape(shape_));
    }
    if (mask_) {
        if (mask_->size() != data_.size()) {
            throw ShapeError("mask length " + std::to_string(mask_->size()) + " does not match data length " +
                             std::to_string(data_.size()));
        }
        bool any = false;
        for (std::size_t i = 0; i < data_.size(); ++i) {
            if ((*mask_)[i]) {
                data_[i] = 0.0;
                any = true;
            }
        }
        if (!any) mask_.reset();
    }
}

NdArray NdArray::filled(Shape shape, double value) {
    std::size_t n = shape_size(shape);
    return NdArray(std::move(shape), std::vector<double>(n, value));
}

NdArray NdArray::vector(std::vector<double> values) {
    Shape shape{values.size()};
    return NdArray(std::move(shape), std::move(values));
}

NdArray NdArray::matrix(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw ShapeError("matrix needs at least one row");
    std::vector<double> data;
    for (const auto& row : rows) {
        if (row.size() != rows.front().size()) throw ShapeError("ragged matrix rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return NdArray({rows.size(), rows.front().size()}, std::move(data));
}

std::size_t NdArray::masked_count() const {
    if (!mask_) return 0;
    return static_cast<std::size_t>(std::count(mask_->begin(), mask_->end(), true));
}

NdArray NdArray::with_name(std::string name) const {
    NdArray copy = *this;
    copy.name_ = std::move(name);
    return copy;
}

NdArray NdArray::reshaped(Shape shape) const {
    return NdArray(std::move(shape), data_, mask_, name_);
}

std::vector<std::size_t> NdArray::strides() const {
    std::vector<std::size_t> s(shape_.size(), 1);
    for (std::size_t d = shape_.size(); d-- > 1;) s[d - 1] = s[d] * shape_[d];
    return s;
}

MultiIndex NdArray::unravel(std::size_t flat) const {
    MultiIndex index(shape_.size(), 0);
    for (std::size_t d = shape_.size(); d-- > 0;) {
        index[d] = flat % shape_[d];
        flat /= shape_[d];
    }
    return index;
}

std::size_t NdArray::ravel(std::span<const std::size_t> index) const {
    if (index.size() != shape_.size()) throw ShapeError("index rank does not match array rank");
    std::size_t flat = 0;
    for (std::size_t d = 0; d < shape_.size(); ++d) {
        if (index[d] >= shape_[d]) throw ShapeError("index out of range");
        flat = flat * shape_[d] + index[d];
    }
    return flat;
}

bool operator==(const NdArray& a, const NdArray& b) {
    if (a.shape_ != b.shape_ || a.mask_ != b.mask_) return false;
    for (std::size_t i = 0; i < a.data_.size(); ++i) {
        if (!same_bits(a.data_[i], b.data_[i])) return false;
    }
    return true;
}

std::string format_number(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, end);
}

std::optional<double> parse_number(std::string_view token) {
    if (!token.empty() && token.front() == '+') token.remove_prefix(1);
    if (token.empty() || token.front() == '+') return std::nullopt;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec == std::errc::result_out_of_range) {
        // from_chars leaves value untouched on overflow; fall back to strtod semantics.
        value = std::strtod(std::string(token).c_str(), nullptr);
    } else if (ec != std::errc()) {
        return std::nullopt;
    }
    if (ptr != token.data() + token.size()) return std::nullopt;
    return value;
}

Discrepancy compare(const NdArray& a, const NdArray& b, double rel_floor) {
    if (a.shape() != b.shape()) {
        throw ShapeError("compare: shape mismatch " + format_shape(a.shape()) + " vs " + format_shape(b.shape()));
    }
    Discrepancy d;
    std::size_t worst = 0;
    bool have_worst = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        bool ma = a.masked(i);
        bool mb = b.masked(i);
        if (ma != mb) {
            ++d.mask_mismatch_count;
            continue;
        }
        if (ma) continue;
        ++d.cells_compared;
        double x = a[i];
        double y = b[i];
        double abs_diff = 0.0;
        double rel_diff = 0.0;
        if (std::isnan(x) != std::isnan(y)) {
            abs_diff = rel_diff = INFINITY;
        } else if (!(std::isnan(x) || x == y)) {
            abs_diff = std::abs(x - y);
            rel_diff = std::isinf(abs_diff) ? INFINITY : abs_diff / std::max({std::abs(x), std::abs(y), rel_floor});
        }
        if (!have_worst || abs_diff > d.max_abs_diff) {
            worst = i;
            d.max_abs_diff = abs_diff;
            have_worst = true;
        }
        d.max_rel_diff = std::max(d.max_rel_diff, rel_diff);
    }
    if (have_worst) d.worst_cell = a.unravel(worst);
    return d;
}

namespace {

struct Token {
    std::string_view text;
    std::size_t column;  // 1-based
};

std::vector<Token> split_ws(std::string_view line) {
    std::vector<Token> tokens;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i >= line.size()) break;
        std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        tokens.push_back({line.substr(start, i - start), start + 1});
    }
    return tokens;
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            if (start < text.size()) lines.push_back(text.substr(start));
            break;
        }
        std::string_view line = text.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        start = nl + 1;
    }
    return lines;
}

bool blank(std::string_view line) {
    return std::all_of(line.begin(), line.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::size_t parse_extent(const std::vector<Token>& tokens, std::string_view key, std::size_t line_no) {
    if (tokens.size() != 2) {
        std::size_t col = tokens.size() > 2 ? tokens[2].column : (tokens.empty() ? 1 : tokens[0].column);
        throw ParseError("header '" + std::string(key) + "' expects exactly one value", line_no, col);
    }
    std::size_t value = 0;
    auto text = tokens[1].text;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || value == 0) {
        throw ParseError("header '" + std::string(key) + "' must be a positive integer, got '" + std::string(text) + "'",
                         line_no, tokens[1].column);
    }
    return value;
}

}  // namespace

NdArray parse_grid(std::string_view text) {
    auto lines = split_lines(text);
    std::size_t li = 0;

    auto header = [&](std::string_view key) -> std::vector<Token> {
        if (li >= lines.size()) throw ParseError("missing header '" + std::string(key) + "'", li + 1, 1);
        auto tokens = split_ws(lines[li]);
        if (tokens.empty() || lower(tokens[0].text) != key) {
            throw ParseError("expected header '" + std::string(key) + "'", li + 1,
                             tokens.empty() ? 1 : tokens[0].column);
        }
        return tokens;
    };

    std::size_t ncols = parse_extent(header("ncols"), "ncols", li + 1);
    ++li;
    std::size_t nrows = parse_extent(header("nrows"), "nrows", li + 1);
    ++li;

    std::optional<double> nodata;
    if (li < lines.size()) {
        auto tokens = split_ws(lines[li]);
        if (!tokens.empty() && lower(tokens[0].text) == "nodata_value") {
            if (tokens.size() != 2) {
                throw ParseError("header 'nodata_value' expects exactly one value", li + 1,
                                 tokens.size() > 2 ? tokens[2].column : tokens[0].column);
            }
            nodata = parse_number(tokens[1].text);
            if (!nodata) {
                throw ParseError("non-numeric nodata_value '" + std::string(tokens[1].text) + "'", li + 1,
                                 tokens[1].column);
            }
            ++li;
        } else if (!tokens.empty() && std::isalpha(static_cast<unsigned char>(tokens[0].text[0])) &&
                   !parse_number(tokens[0].text)) {
            throw ParseError("unexpected header '" + std::string(tokens[0].text) + "'", li + 1, tokens[0].column);
        }
    }

    std::vector<double> data;
    std::vector<bool> mask;
    data.reserve(ncols * nrows);
    mask.reserve(ncols * nrows);
    std::size_t rows_read = 0;
    for (; li < lines.size(); ++li) {
        if (blank(lines[li])) continue;
        auto tokens = split_ws(lines[li]);
        if (rows_read == nrows) {
            throw ParseError("expected " + std::to_string(nrows) + " data rows, found more", li + 1, tokens[0].column);
        }
        if (tokens.size() != ncols) {
            std::size_t col = tokens.size() > ncols ? tokens[ncols].column : lines[li].size() + 1;
            throw ParseError("expected " + std::to_string(ncols) + " values, got " + std::to_string(tokens.size()),
                             li + 1, col);
        }
        for (const auto& tok : tokens) {
            auto value = parse_number(tok.text);
            if (!value) throw ParseError("non-numeric value '" + std::string(tok.text) + "'", li + 1, tok.column);
            bool is_nodata = nodata && ((std::isnan(*nodata) && std::isnan(*value)) || *value == *nodata);
            data.push_back(is_nodata ? 0.0 : *value);
            mask.push_back(is_nodata);
        }
        ++rows_read;
    }
    if (rows_read != nrows) {
        throw ParseError("expected " + std::to_string(nrows) + " data rows, got " + std::to_string(rows_read),
                         lines.size() + 1, 1);
    }
    return NdArray({nrows, ncols}, std::move(data), std::move(mask));
}

namespace {

double pick_sentinel(const NdArray& a) {
    auto collides = [&](double candidate) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (!a.masked(i) && a[i] == candidate) return true;
        }
        return false;
    };
    double candidate = -9999.0;
    while (collides(candidate)) candidate = candidate * 10.0 - 9.0;
    return candidate;
}

}  // namespace

std::string render_grid(const NdArray& a) {
    if (a.rank() != 2) throw ShapeError("render_grid requires 2-D, got rank " + std::to_string(a.rank()));
    std::string out;
    out += "ncols " + std::to_string(a.shape()[1]) + "\n";
    out += "nrows " + std::to_string(a.shape()[0]) + "\n";
    std::string sentinel;
    if (a.has_mask()) {
        sentinel = format_number(pick_sentinel(a));
        out += "nodata_value " + sentinel + "\n";
    }
    std::size_t ncols = a.shape()[1];
    for (std::size_t i = 0; i < a.size(); ++i) {
        out += a.masked(i) ? sentinel : format_number(a[i]);
        out += (i % ncols == ncols - 1) ? '\n' : ' ';
    }
    return out;
}

NdArray parse_csv(std::string_view text) {
    auto lines = split_lines(text);
    while (!lines.empty() && blank(lines.back())) lines.pop_back();
    if (lines.empty()) throw ParseError("empty CSV input", 1, 1);
    std::vector<double> data;
    std::vector<bool> mask;
    std::size_t ncols = 0;
    for (std::size_t li = 0; li < lines.size(); ++li) {
        std::string_view line = lines[li];
        std::size_t count = 0;
        std::size_t start = 0;
        while (true) {
            std::size_t comma = line.find(',', start);
            std::string_view field = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
            std::size_t lead = 0;
            while (lead < field.size() && std::isspace(static_cast<unsigned char>(field[lead]))) ++lead;
            field.remove_prefix(lead);
            while (!field.empty() && std::isspace(static_cast<unsigned char>(field.back()))) field.remove_suffix(1);
            if (field.empty()) {
                data.push_back(0.0);
                mask.push_back(true);
            } else {
                auto value = parse_number(field);
                if (!value) throw ParseError("non-numeric value '" + std::string(field) + "'", li + 1, start + lead + 1);
                data.push_back(*value);
                mask.push_back(false);
            }
            ++count;
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (li == 0) {
            ncols = count;
        } else if (count != ncols) {
            throw ParseError("expected " + std::to_string(ncols) + " values, got " + std::to_string(count), li + 1,
                             line.size() + 1);
        }
    }
    return NdArray({lines.size(), ncols}, std::move(data), std::move(mask));
}

std::string canonical_text(const NdArray& a) {
    if (a.rank() == 2) return render_grid(a);
    std::string out = "shape";
    for (std::size_t e : a.shape()) out += " " + std::to_string(e);
    out += "\n";
    for (std::size_t i = 0; i < a.size(); ++i) {
        out += a.masked(i) ? std::string("nodata") : format_number(a[i]);
        out += '\n';
    }
    return out;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("error reading '" + path.string() + "'");
    return ss.str();
}

void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + tmp.string() + "'");
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out) throw IoError("error writing '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

NdArray load_array(const std::filesystem::path& path) {
    std::string text = read_text_file(path);
    std::string ext = lower(path.extension().string());
    NdArray a = ext == ".csv" ? parse_csv(text) : parse_grid(text);
    return a.with_name(path.stem().string());
}

NdArray stack(std::span<const NdArray> layers) {
    if (layers.empty()) throw ShapeError("stack needs at least one layer");
    const Shape& base = layers.front().shape();
    Shape shape{layers.size()};
    shape.insert(shape.end(), base.begin(), base.end());
    std::vector<double> data;
    std::vector<bool> mask;
    data.reserve(shape_size(shape));
    for (std::size_t k = 0; k < layers.size(); ++k) {
        if (layers[k].shape() != base) {
            throw ShapeError("shape mismatch among layers: layer 0 is " + format_shape(base) + ", layer " +
                             std::to_string(k) + " is " + format_shape(layers[k].shape()));
        }
        for (std::size_t i = 0; i < layers[k].size(); ++i) {
            data.push_back(layers[k][i]);
            mask.push_back(layers[k].masked(i));
        }
    }
    return NdArray(std::move(shape), std::move(data), std::move(mask));
}

}  // namespace semdtm
