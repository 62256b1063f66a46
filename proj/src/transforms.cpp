#include "semdtm/transforms.hpp"

#include <algorithm>
#include <cmath>

#include "semdtm/error.hpp"

namespace semdtm::kernels {

namespace {

void check_window(long window) {
    if (window < 1 || window % 2 == 0) {
        throw ShapeError("focal_mean window must be an odd integer >= 1, got " + std::to_string(window));
    }
}

std::pair<std::size_t, std::size_t> grid_dims(const NdArray& in) {
    if (in.rank() == 1) return {1, in.shape()[0]};
    if (in.rank() == 2) return {in.shape()[0], in.shape()[1]};
    throw ShapeError("focal_mean requires a 1-D or 2-D array, got rank " + std::to_string(in.rank()));
}

std::size_t layer_count(const NdArray& layers, std::size_t nweights) {
    std::size_t k = layers.shape()[0];
    if (k != nweights) {
        throw ShapeError("weighted_sum: " + std::to_string(nweights) + " weights for " + std::to_string(k) +
                         " layers");
    }
    return k;
}

Shape reduced_shape(const NdArray& layers) {
    Shape out(layers.shape().begin() + 1, layers.shape().end());
    if (out.empty()) out.push_back(1);
    return out;
}

template <typename Accumulate>
NdArray weighted_sum(const NdArray& layers, std::span<const double> weights, Accumulate&& accumulate) {
    std::size_t k = layer_count(layers, weights.size());
    Shape shape = reduced_shape(layers);
    std::size_t cells = shape_size(shape);
    std::vector<double> data(cells, 0.0);
    std::vector<bool> mask(cells, false);
    std::vector<double> terms(k);
    for (std::size_t c = 0; c < cells; ++c) {
        bool masked = false;
        for (std::size_t i = 0; i < k; ++i) {
            std::size_t flat = i * cells + c;
            masked = masked || layers.masked(flat);
            terms[i] = weights[i] * layers[flat];
        }
        mask[c] = masked;
        if (!masked) data[c] = accumulate(terms);
    }
    return NdArray(std::move(shape), std::move(data), std::move(mask));
}

}  // namespace

NdArray rescale_minmax(const NdArray& in) {
    double lo = INFINITY;
    double hi = -INFINITY;
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in.masked(i)) continue;
        lo = std::min(lo, in[i]);
        hi = std::max(hi, in[i]);
    }
    std::vector<double> data(in.size(), 0.0);
    if (hi > lo) {
        double span = hi - lo;
        for (std::size_t i = 0; i < in.size(); ++i) {
            if (!in.masked(i)) data[i] = (in[i] - lo) / span;
        }
    } else {
        // Degenerate (all equal) input: zeros, but keep non-finite cells visible.
        for (std::size_t i = 0; i < in.size(); ++i) {
            if (!in.masked(i) && !std::isfinite(in[i])) data[i] = NAN;
        }
    }
    return NdArray(in.shape(), std::move(data), in.mask());
}

NdArray focal_mean_sliding(const NdArray& in, long window) {
    check_window(window);
    auto [rows, cols] = grid_dims(in);
    const long half = window / 2;
    std::vector<double> data(in.size(), 0.0);
    std::vector<bool> mask(in.size(), false);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            double sum = 0.0;
            std::size_t count = 0;
            std::size_t r0 = r >= static_cast<std::size_t>(half) ? r - half : 0;
            std::size_t c0 = c >= static_cast<std::size_t>(half) ? c - half : 0;
            std::size_t r1 = std::min(rows - 1, r + half);
            std::size_t c1 = std::min(cols - 1, c + half);
            for (std::size_t rr = r0; rr <= r1; ++rr) {
                for (std::size_t cc = c0; cc <= c1; ++cc) {
                    std::size_t flat = rr * cols + cc;
                    if (in.masked(flat)) continue;
                    sum += in[flat];
                    ++count;
                }
            }
            std::size_t flat = r * cols + c;
            if (count == 0) {
                mask[flat] = true;
            } else {
                data[flat] = static_cast<double>(sum / static_cast<long double>(count));
            }
        }
    }
    return NdArray(in.shape(), std::move(data), std::move(mask));
}

NdArray focal_mean_summed_area(const NdArray& in, long window) {
    check_window(window);
    auto [rows, cols] = grid_dims(in);
    const std::size_t half = static_cast<std::size_t>(window / 2);
    // (rows+1) x (cols+1) prefix tables of values and unmasked counts.
    // Window sums are differences of large prefix sums, so the value table is
    // kept in extended precision to limit cancellation.
    const std::size_t w = cols + 1;
    std::vector<long double> sums((rows + 1) * w, 0.0L);
    std::vector<long> counts((rows + 1) * w, 0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            std::size_t flat = r * cols + c;
            bool m = in.masked(flat);
            std::size_t at = (r + 1) * w + (c + 1);
            sums[at] = (m ? 0.0L : static_cast<long double>(in[flat])) + sums[r * w + (c + 1)] + sums[(r + 1) * w + c] - sums[r * w + c];
            counts[at] = (m ? 0 : 1) + counts[r * w + (c + 1)] + counts[(r + 1) * w + c] - counts[r * w + c];
        }
    }
    std::vector<double> data(in.size(), 0.0);
    std::vector<bool> mask(in.size(), false);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            std::size_t r0 = r >= half ? r - half : 0;
            std::size_t c0 = c >= half ? c - half : 0;
            std::size_t r1 = std::min(rows, r + half + 1);
            std::size_t c1 = std::min(cols, c + half + 1);
            long double sum = sums[r1 * w + c1] - sums[r0 * w + c1] - sums[r1 * w + c0] + sums[r0 * w + c0];
            long count = counts[r1 * w + c1] - counts[r0 * w + c1] - counts[r1 * w + c0] + counts[r0 * w + c0];
            std::size_t flat = r * cols + c;
            if (count == 0) {
                mask[flat] = true;
            } else {
                data[flat] = static_cast<double>(sum / static_cast<long double>(count));
            }
        }
    }
    return NdArray(in.shape(), std::move(data), std::move(mask));
}

NdArray weighted_sum_sequential(const NdArray& layers, std::span<const double> weights) {
    return weighted_sum(layers, weights, [](const std::vector<double>& terms) {
        double acc = 0.0;
        for (double t : terms) acc += t;
        return acc;
    });
}

NdArray weighted_sum_compensated(const NdArray& layers, std::span<const double> weights) {
    // Neumaier's variant of Kahan summation.
    return weighted_sum(layers, weights, [](const std::vector<double>& terms) {
        double sum = 0.0;
        double comp = 0.0;
        for (double t : terms) {
            double s = sum + t;
            if (std::abs(sum) >= std::abs(t)) {
                comp += (sum - s) + t;
            } else {
                comp += (t - s) + sum;
            }
            sum = s;
        }
        return sum + comp;
    });
}

NdArray reclassify(const NdArray& in, std::span<const double> breaks, std::span<const double> classes) {
    if (classes.size() != breaks.size() + 1) {
        throw ShapeError("reclassify: len(classes) must equal len(breaks)+1, got " + std::to_string(classes.size()) +
                         " classes for " + std::to_string(breaks.size()) + " breaks");
    }
    std::vector<double> data(in.size(), 0.0);
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in.masked(i)) continue;
        double v = in[i];
        if (std::isnan(v)) {
            data[i] = v;
            continue;
        }
        auto j = std::upper_bound(breaks.begin(), breaks.end(), v) - breaks.begin();
        data[i] = classes[static_cast<std::size_t>(j)];
    }
    return NdArray(in.shape(), std::move(data), in.mask());
}

NdArray threshold_mask(const NdArray& in, double t) {
    std::vector<double> data(in.size(), 0.0);
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in.masked(i)) continue;
        double v = in[i];
        data[i] = std::isnan(v) ? v : (v >= t ? 1.0 : 0.0);
    }
    return NdArray(in.shape(), std::move(data), in.mask());
}

}  // namespace semdtm::kernels
