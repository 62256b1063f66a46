#pragma once

// Brute-force reference implementations. Deliberately naive: plain loops,
// no shared code with the library kernels beyond NdArray itself.

#include <cmath>
#include <vector>

#include "semdtm/array.hpp"

namespace oracle {

using semdtm::NdArray;

inline NdArray rescale(const NdArray& in) {
    bool any = false;
    double lo = 0, hi = 0;
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in.masked(i)) continue;
        if (!any || in[i] < lo) lo = in[i];
        if (!any || in[i] > hi) hi = in[i];
        any = true;
    }
    std::vector<double> out(in.size(), 0.0);
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in.masked(i) || hi == lo) continue;
        out[i] = (in[i] - lo) / (hi - lo);
    }
    return NdArray(in.shape(), out, in.mask());
}

// Rank 1 or 2; rank 1 is one row.
inline NdArray focal_mean(const NdArray& in, int window) {
    const long rows = in.rank() == 1 ? 1 : static_cast<long>(in.shape()[0]);
    const long cols = static_cast<long>(in.rank() == 1 ? in.shape()[0] : in.shape()[1]);
    const long h = window / 2;
    std::vector<double> out(in.size(), 0.0);
    std::vector<bool> mask(in.size(), false);
    for (long r = 0; r < rows; ++r) {
        for (long c = 0; c < cols; ++c) {
            double sum = 0;
            int n = 0;
            for (long dr = -h; dr <= h; ++dr) {
                for (long dc = -h; dc <= h; ++dc) {
                    long rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;
                    std::size_t k = static_cast<std::size_t>(rr * cols + cc);
                    if (in.masked(k)) continue;
                    sum += in[k];
                    ++n;
                }
            }
            std::size_t k = static_cast<std::size_t>(r * cols + c);
            if (n == 0) {
                mask[k] = true;
            } else {
                out[k] = sum / n;
            }
        }
    }
    return NdArray(in.shape(), out, mask);
}

// layers: [k, ...]; output shape drops axis 0 ([1] for rank-1 input).
inline NdArray weighted_sum(const NdArray& layers, const std::vector<double>& w) {
    const std::size_t k = layers.shape()[0];
    const std::size_t cells = layers.size() / k;
    semdtm::Shape shape(layers.shape().begin() + 1, layers.shape().end());
    if (shape.empty()) shape = {1};
    std::vector<double> out(cells, 0.0);
    std::vector<bool> mask(cells, false);
    for (std::size_t c = 0; c < cells; ++c) {
        long double acc = 0;
        for (std::size_t i = 0; i < k; ++i) {
            if (layers.masked(i * cells + c)) mask[c] = true;
            acc += static_cast<long double>(w[i]) * layers[i * cells + c];
        }
        if (!mask[c]) out[c] = static_cast<double>(acc);
    }
    return NdArray(shape, out, mask);
}

inline NdArray reclassify(const NdArray& in, const std::vector<double>& breaks, const std::vector<double>& classes) {
    std::vector<double> out(in.size(), 0.0);
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in.masked(i)) continue;
        if (std::isnan(in[i])) {
            out[i] = NAN;
            continue;
        }
        std::size_t j = 0;
        while (j < breaks.size() && in[i] >= breaks[j]) ++j;
        out[i] = classes[j];
    }
    return NdArray(in.shape(), out, in.mask());
}

inline NdArray threshold(const NdArray& in, double t) {
    std::vector<double> out(in.size(), 0.0);
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in.masked(i)) continue;
        out[i] = std::isnan(in[i]) ? NAN : (in[i] >= t ? 1.0 : 0.0);
    }
    return NdArray(in.shape(), out, in.mask());
}

}  // namespace oracle
