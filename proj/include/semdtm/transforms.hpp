#pragma once

#include <span>
#include <vector>

#include "semdtm/array.hpp"

// Array kernels behind the builtin transforms. Each takes plain arrays and
// scalars; the registry in dtm.cpp adapts them to slot/parameter maps.
namespace semdtm::kernels {

// (v - min) / (max - min) over unmasked cells; all-equal input maps to 0.
NdArray rescale_minmax(const NdArray& in);

// Mean over the window x window neighborhood clipped at the borders,
// ignoring masked cells. A cell is masked only if its whole neighborhood is.
// Rank 1 arrays are treated as a single row.
NdArray focal_mean_sliding(const NdArray& in, long window);
NdArray focal_mean_summed_area(const NdArray& in, long window);

// out[c] = sum_k weights[k] * layers[k, c]; layers is stacked along axis 0.
// A cell is masked if any layer masks it.
NdArray weighted_sum_sequential(const NdArray& layers, std::span<const double> weights);
NdArray weighted_sum_compensated(const NdArray& layers, std::span<const double> weights);

// Right-open intervals: v < b0 -> classes[0], b_{j-1} <= v < b_j -> classes[j],
// v >= b_last -> classes.back(). NaN stays NaN.
NdArray reclassify(const NdArray& in, std::span<const double> breaks, std::span<const double> classes);

// v >= t -> 1, else 0. NaN stays NaN.
NdArray threshold_mask(const NdArray& in, double t);

}  // namespace semdtm::kernels
