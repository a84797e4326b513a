#pragma once

// Raw-buffer kernels behind the differentiable ops.
//
// Every kernel exists twice: `serial` is the plain loop nest kept as the
// reference, `parallel` distributes independent output elements over OpenMP
// threads. Each output element is accumulated in the same order by both, so
// the two agree bit for bit regardless of thread count.

#include <cstddef>
#include <vector>

namespace stepcat::kernels {

/// C (m x n) = op(A) * op(B), or += when `accumulate`.
/// A is m x k row-major (k x m when trans_a); B is k x n (n x k when trans_b).
struct GemmArgs {
  std::size_t m = 0, k = 0, n = 0;
  bool trans_a = false;
  bool trans_b = false;
  bool accumulate = false;
};

enum class Padding { Same, Valid };

/// Temporal convolution over x laid out as (rows, t_in, c_in).
/// Full weights are (kernel, c_in, c_out); depthwise weights are (kernel, c).
struct ConvGeometry {
  std::size_t rows = 0, t_in = 0, c_in = 0, c_out = 0;
  std::size_t kernel = 1, dilation = 1, stride = 1;
  std::size_t t_out = 0, pad_left = 0;
  bool depthwise = false;

  std::size_t effective_kernel() const { return dilation * (kernel - 1) + 1; }
};

/// Fills t_out/pad_left. Same padding gives t_out = ceil(t_in / stride);
/// Valid padding throws DimensionError when the kernel exceeds the input.
ConvGeometry make_conv_geometry(std::size_t rows, std::size_t t_in, std::size_t c_in, std::size_t c_out,
                                std::size_t kernel, std::size_t dilation, std::size_t stride, bool depthwise,
                                Padding padding);

/// Max over temporal windows of x (rows, t_in, c); same padding, -inf outside.
struct PoolGeometry {
  std::size_t rows = 0, t_in = 0, channels = 0;
  std::size_t window = 1, stride = 1, t_out = 0, pad_left = 0;
};
PoolGeometry make_pool_geometry(std::size_t rows, std::size_t t_in, std::size_t channels, std::size_t window,
                                std::size_t stride);

namespace serial {
void gemm(const GemmArgs& g, const double* a, const double* b, double* c);
void conv_temporal_forward(const ConvGeometry& g, const double* x, const double* w, double* y);
void conv_temporal_backward_input(const ConvGeometry& g, const double* dy, const double* w, double* dx);
void conv_temporal_backward_weight(const ConvGeometry& g, const double* x, const double* dy, double* dw);
void softmax_rows(std::size_t rows, std::size_t n, const double* x, double* y);
void softmax_rows_backward(std::size_t rows, std::size_t n, const double* y, const double* dy, double* dx);
void max_pool_forward(const PoolGeometry& g, const double* x, double* y, std::size_t* argmax);
}  // namespace serial

namespace parallel {
void gemm(const GemmArgs& g, const double* a, const double* b, double* c);
/// `batch` independent gemms at the given element strides. A zero c_step
/// accumulates every product into one output, in batch order.
void gemm_batched(const GemmArgs& g, std::size_t batch, const double* a, std::size_t a_step, const double* b,
                  std::size_t b_step, double* c, std::size_t c_step);
void conv_temporal_forward(const ConvGeometry& g, const double* x, const double* w, double* y);
void conv_temporal_backward_input(const ConvGeometry& g, const double* dy, const double* w, double* dx);
void conv_temporal_backward_weight(const ConvGeometry& g, const double* x, const double* dy, double* dw);
void softmax_rows(std::size_t rows, std::size_t n, const double* x, double* y);
void softmax_rows_backward(std::size_t rows, std::size_t n, const double* y, const double* dy, double* dx);
void max_pool_forward(const PoolGeometry& g, const double* x, double* y, std::size_t* argmax);
}  // namespace parallel

}  // namespace stepcat::kernels
