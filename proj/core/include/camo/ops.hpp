#pragma once

#include <cstddef>
#include <vector>

#include "camo/tensor.hpp"

namespace camo {

// Elementwise binary ops accept equal shapes, a single-element operand, or an
// operand whose shape equals the trailing dims of the other (broadcast along
// leading dims). Nothing more general.
template <typename Real> Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);

template <typename Real> Tensor<Real> scale(const Tensor<Real>& a, Real factor);
template <typename Real> Tensor<Real> add_scalar(const Tensor<Real>& a, Real offset);
template <typename Real> Tensor<Real> square(const Tensor<Real>& a);
template <typename Real> Tensor<Real> silu(const Tensor<Real>& a);

/// Multiplies by a constant 0/1 (or arbitrary constant) pattern; no gradient
/// reaches the mask.
template <typename Real> Tensor<Real> masked(const Tensor<Real>& a, const std::vector<Real>& mask);

template <typename Real> Tensor<Real> sum(const Tensor<Real>& a);
template <typename Real> Tensor<Real> mean(const Tensor<Real>& a);

template <typename Real> Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> transpose(const Tensor<Real>& a);

/// Softmax over the last axis with max subtraction.
template <typename Real> Tensor<Real> softmax(const Tensor<Real>& x);

/// Normalizes over the last axis, then applies gain and bias (both [C]).
template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain, const Tensor<Real>& bias,
                        Real eps = Real(1e-5));

template <typename Real> Tensor<Real> reshape(const Tensor<Real>& a, Shape shape);

/// out[i] = a[indices[i]]; the backward pass scatter-adds.
template <typename Real>
Tensor<Real> take(const Tensor<Real>& a, std::vector<std::size_t> indices, Shape out_shape);

template <typename Real> Tensor<Real> concat_last(const Tensor<Real>& a, const Tensor<Real>& b);
/// Stacks equal-shaped tensors along a new leading axis.
template <typename Real> Tensor<Real> stack(const std::vector<Tensor<Real>>& parts);

/// Rows of a [K, D] table picked by index.
template <typename Real>
Tensor<Real> gather_rows(const Tensor<Real>& table, const std::vector<std::size_t>& rows);

/// Forward value of `replacement`, gradient passed unchanged to `source`.
template <typename Real>
Tensor<Real> straight_through(const Tensor<Real>& source, const Tensor<Real>& replacement);

/// x[..., in] * w[in, out] + b[out]; b may be undefined.
template <typename Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b);

/// NHWC convolution. w is [k*k*Cin, Cout] in (ky, kx, cin) row order; zero
/// padding of k/2; b may be undefined.
template <typename Real>
Tensor<Real> conv2d(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b,
                    std::size_t kernel, std::size_t stride);

/// Nearest-neighbour upsampling of [H,W,C] or [B,H,W,C] by an integer factor.
template <typename Real> Tensor<Real> upsample_nearest(const Tensor<Real>& x, std::size_t factor);

/// Columns [begin, begin+count) of the last axis.
template <typename Real>
Tensor<Real> slice_last(const Tensor<Real>& x, std::size_t begin, std::size_t count);

/// [B, C] -> [B, H, W, C], repeating each row over the spatial grid.
template <typename Real>
Tensor<Real> broadcast_spatial(const Tensor<Real>& x, std::size_t height, std::size_t width);

template <typename Real> Tensor<Real> operator+(const Tensor<Real>& a, const Tensor<Real>& b) { return add(a, b); }
template <typename Real> Tensor<Real> operator-(const Tensor<Real>& a, const Tensor<Real>& b) { return sub(a, b); }
template <typename Real> Tensor<Real> operator*(const Tensor<Real>& a, const Tensor<Real>& b) { return mul(a, b); }

/// Throws NumericError if any value is NaN or infinite.
template <typename Real> void require_finite(const Tensor<Real>& t, const char* what);

}  // namespace camo
