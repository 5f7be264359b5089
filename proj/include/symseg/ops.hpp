#pragma once

#include "symseg/tensor.hpp"

namespace symseg {

// Differentiable primitives over Tensor. Every function records its
// gradient rule on the tape; binary elementwise ops accept equal shapes
// or a one-element operand broadcast against the other.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

// Sum of all elements, as a scalar tensor.
Tensor sum(const Tensor& a);
// Reduction along one axis, keeping it with size 1.
Tensor sum_axis(const Tensor& a, Index axis);
// Contiguous slice [begin, end) along axis 0.
Tensor slice_axis0(const Tensor& a, Index begin, Index end);

// Cross-correlation of a [C_in,H,W] input with a [C_out,C_in,k,k] kernel.
// k must be odd and the output spatial sizes positive.
Tensor conv2d(const Tensor& input, const Tensor& kernel, Index stride, Index padding);

// Numerically stabilized softmax along `axis`; rejects non-finite input.
Tensor softmax(const Tensor& logits, Index axis);

// Nearest-neighbour upsampling: out(y,x) = in(y/factor, x/factor) on a
// [C,H,W] tensor, with the target size given explicitly so odd encoder
// sizes round-trip (requires out <= in*factor per axis).
Tensor upsample_nearest(const Tensor& a, Index factor, Index out_h, Index out_w);

// Euclidean norm of the flattened tensor, as a scalar. Zero input yields
// value 0 with a zero subgradient.
Tensor l2_norm(const Tensor& a);

// Cosine similarity of the flattened tensors: 1 if both are zero, 0 if
// exactly one is. The degenerate cases carry zero subgradients.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

}  // namespace symseg
