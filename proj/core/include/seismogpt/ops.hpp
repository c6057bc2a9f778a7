#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "seismogpt/tensor.hpp"

namespace seismo {

// Additive score used for masked attention entries. exp(kMaskedScore - max)
// underflows to exactly 0 in double precision.
inline constexpr double kMaskedScore = -1e9;

// Elementwise a + b. `b` broadcasts numpy-style against `a`: it may have
// lower rank, and each of its extents must equal a's or be 1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);  // same shape
Tensor mul(const Tensor& a, const Tensor& b);  // same shape
Tensor scale(const Tensor& a, double factor);

// Batched contraction [.., n, k] x [.., k, m] -> [.., n, m]; leading batch
// extents broadcast numpy-style.
Tensor matmul(const Tensor& a, const Tensor& b);

// x [.., in] * w [in, out] + bias [out]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor transpose_last2(const Tensor& a);

// Softmax over the last axis with max subtraction. Entries at or below
// kMaskedScore / 2 (or -inf) are treated as masked; a row with no unmasked
// entry raises DegenerateMaskError. A row holding NaN or +inf yields NaN so
// that divergence shows up in the loss.
Tensor softmax_lastdim(const Tensor& x);

inline constexpr double kLayerNormEps = 1e-5;
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = kLayerNormEps);

// tanh approximation of GELU
Tensor gelu(const Tensor& x);

// Inverted dropout. Identity when p == 0.
Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng);

// Cross-correlation over the last axis: x [.., C_in, W], kernels
// [C_out, C_in, K], optional bias [C_out] -> [.., C_out, W'] with
// W' = (W + 2*padding - K) / stride + 1.
Tensor conv1d(const Tensor& x, const Tensor& kernels, const Tensor& bias, std::size_t stride,
              std::size_t padding);
Tensor conv1d(const Tensor& x, const Tensor& kernels, std::size_t stride, std::size_t padding);

Tensor mean_lastdim(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace seismo
