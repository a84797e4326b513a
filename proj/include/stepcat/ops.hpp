#pragma once

// Differentiable primitives. Feature tensors follow the (joints, frames,
// channels) layout; the temporal ops act on axis -2 and channel maps on axis -1.

#include <span>
#include <vector>

#include "stepcat/autograd.hpp"
#include "stepcat/kernels.hpp"

namespace stepcat {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double s);
inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(Var a, double s) { return scale(a, s); }

/// Expands size-1 dimensions to `shape` (ranks must match); backward sums them out.
Var broadcast_to(Var a, const Shape& shape);

/// Batched matrix product over the last two axes. Batch dimensions must be
/// equal, or one operand must be a plain matrix shared across the batch.
Var matmul(Var a, Var b);

Var permute(Var a, const std::vector<std::size_t>& perm);
Var transpose_last(Var a);
Var reshape(Var a, const Shape& shape);
Var slice(Var a, int axis, std::size_t start, std::size_t length);
Var concat(const std::vector<Var>& parts, int axis);
/// Gathers the listed indices along `axis`; duplicated indices scatter-add in backward.
Var index_select(Var a, int axis, std::span<const std::size_t> indices);

/// Max-subtracted softmax along `axis`.
Var softmax(Var x, int axis);
Var log_softmax(Var x, int axis);

inline constexpr double kLayerNormEps = 1e-5;
/// Normalizes each slice along `axis` to zero mean and unit variance (biased),
/// then applies gamma/beta, whose length equals the size of that axis.
Var layer_norm(Var x, Var gamma, Var beta, int axis = -1, double eps = kLayerNormEps);

/// Exact erf form: x * Phi(x).
Var gelu(Var x);
Var tanh(Var x);
Var sigmoid(Var x);
Var abs(Var x);

struct ConvOptions {
  std::size_t dilation = 1;
  std::size_t stride = 1;
  bool depthwise = false;
  kernels::Padding padding = kernels::Padding::Same;
};

/// 1-D convolution along the frame axis of x (rows, frames, c_in).
/// w is (kernel, c_in, c_out), or (kernel, c) when depthwise.
Var conv_temporal(Var x, Var w, const ConvOptions& opt = {});

/// Per-position channel map: x (..., c_in) times w (c_in, c_out).
Var pointwise_conv(Var x, Var w);

/// Max over temporal windows of x (rows, frames, c), same padding with -inf.
Var max_pool_temporal(Var x, std::size_t window, std::size_t stride);

/// Mean over the listed axes, which are removed. Reducing every axis yields shape (1).
Var global_average_pool(Var x, std::vector<int> axes);
Var sum(Var x);
/// Single element by flat index, as shape (1).
Var select(Var x, std::size_t flat_index);

/// Throws NumericError naming `where` if x holds NaN/Inf.
void check_finite(Var x, const std::string& where);

}  // namespace stepcat
