#pragma once

#include <span>

#include "promptrr/tensor.hpp"

namespace promptrr {

// All ops are pure (inputs untouched, fresh output) and deterministic:
// identical inputs give bitwise-identical outputs. When a tape is active
// and an input requires grad, the op records its backward rule.

/// a[m x k] * b[k x n] -> [m x n]. Gradients: da = g*b^T, db = a^T*g.
Tensor matmul(const Tensor& a, const Tensor& b);

/// [m x n] -> [n x m].
Tensor transpose2d(const Tensor& x);

/// Max-subtracting softmax over `axis`; slices sum to 1.
Tensor softmax(const Tensor& x, int axis);

/// Normalizes each slice along `axis` (all other indices fixed) to zero
/// mean / unit variance with an eps floor, then applies gain/bias (both
/// of length shape[axis]).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps, int axis);

/// Per-pixel channel map: x[C x H x W], w[Co x C], optional b[Co].
Tensor conv1x1(const Tensor& x, const Tensor& w, const Tensor& b = {});

/// Depth-wise 3x3 correlation with zero padding 1: x[C x H x W], w[C x 3 x 3].
Tensor dwconv3x3(const Tensor& x, const Tensor& w, const Tensor& b = {});

/// Dense 2-D correlation, zero padding: x[Ci x H x W], w[Co x Ci x kh x kw].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

/// GELU, tanh approximation: 0.5x(1+tanh(0.7978845608(x+0.044715x^3))).
Tensor gelu(const Tensor& x);

/// Negative slope 0.2 unless stated otherwise.
Tensor leaky_relu(const Tensor& x, float slope = 0.2f);

/// x * s for a compile-time-known scalar.
Tensor scale(const Tensor& x, float s);

/// x / s[0] for a learnable single-element tensor s (attention temperature).
Tensor div_by(const Tensor& x, const Tensor& s);

/// Output cell (i,j) averages input rows floor(i*H/oh) .. ceil((i+1)*H/oh)-1
/// (same rule for columns). Target (H,W) is the identity.
Tensor adaptive_avg_pool(const Tensor& x, int oh, int ow);

/// [C x H x W] -> [C x 2H x 2W], each value repeated 2x2.
Tensor upsample_nearest2x(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor flatten(const Tensor& x);

/// Concatenation along the first dimension (channels / rows / vectors).
Tensor concat0(std::span<const Tensor> parts);
Tensor concat0(const Tensor& a, const Tensor& b);
Tensor concat0(const Tensor& a, const Tensor& b, const Tensor& c);

/// First-dimension slice [begin, end).
Tensor slice0(const Tensor& x, int begin, int end);

/// Reductions accumulate in 64-bit.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor abs(const Tensor& x);

/// y = x W^T + b. x is [in] or [n x in]; w is [out x in]; b optional [out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b = {});

/// Per-channel affine broadcast over space: y[c,h,w] = s[c]*x[c,h,w] + t[c].
Tensor scale_shift_channels(const Tensor& x, const Tensor& s, const Tensor& t);

}  // namespace promptrr
