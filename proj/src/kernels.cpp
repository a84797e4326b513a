#include "stepcat/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "stepcat/tensor.hpp"

namespace stepcat::kernels {

namespace {

// Below this many multiply-adds the OpenMP fork costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 14;

inline double a_at(const GemmArgs& g, const double* a, std::size_t i, std::size_t p) {
  return g.trans_a ? a[p * g.m + i] : a[i * g.k + p];
}

inline double b_at(const GemmArgs& g, const double* b, std::size_t p, std::size_t j) {
  return g.trans_b ? b[j * g.k + p] : b[p * g.n + j];
}

// Input frame for output frame `to` and tap `k`, or -1 when it falls in the padding.
inline long input_frame(const ConvGeometry& g, std::size_t to, std::size_t k) {
  const long ti = static_cast<long>(to * g.stride + k * g.dilation) - static_cast<long>(g.pad_left);
  return (ti < 0 || ti >= static_cast<long>(g.t_in)) ? -1 : ti;
}

}  // namespace

ConvGeometry make_conv_geometry(std::size_t rows, std::size_t t_in, std::size_t c_in, std::size_t c_out,
                                std::size_t kernel, std::size_t dilation, std::size_t stride, bool depthwise,
                                Padding padding) {
  if (kernel == 0 || dilation == 0 || stride == 0) {
    throw DimensionError("conv_temporal: kernel, dilation and stride must be positive");
  }
  if (depthwise && c_in != c_out) {
    throw DimensionError("conv_temporal: depthwise requires equal channels, got " + std::to_string(c_in) + " -> " +
                         std::to_string(c_out));
  }
  ConvGeometry g;
  g.rows = rows;
  g.t_in = t_in;
  g.c_in = c_in;
  g.c_out = c_out;
  g.kernel = kernel;
  g.dilation = dilation;
  g.stride = stride;
  g.depthwise = depthwise;
  const std::size_t eff = g.effective_kernel();
  if (padding == Padding::Valid) {
    if (eff > t_in) {
      throw DimensionError("conv_temporal: effective kernel " + std::to_string(eff) + " exceeds input length " +
                           std::to_string(t_in));
    }
    g.t_out = (t_in - eff) / stride + 1;
    g.pad_left = 0;
  } else {
    g.t_out = (t_in + stride - 1) / stride;
    const std::size_t needed = (g.t_out - 1) * stride + eff;
    const std::size_t pad_total = needed > t_in ? needed - t_in : 0;
    g.pad_left = pad_total / 2;
  }
  return g;
}

PoolGeometry make_pool_geometry(std::size_t rows, std::size_t t_in, std::size_t channels, std::size_t window,
                                std::size_t stride) {
  if (window == 0 || stride == 0) throw DimensionError("max_pool_temporal: window and stride must be positive");
  PoolGeometry g;
  g.rows = rows;
  g.t_in = t_in;
  g.channels = channels;
  g.window = window;
  g.stride = stride;
  g.t_out = (t_in + stride - 1) / stride;
  const std::size_t needed = (g.t_out - 1) * stride + window;
  g.pad_left = needed > t_in ? (needed - t_in) / 2 : 0;
  return g;
}

// ---------------------------------------------------------------------------
// serial reference
// ---------------------------------------------------------------------------
namespace serial {

void gemm(const GemmArgs& g, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < g.m; ++i) {
    for (std::size_t j = 0; j < g.n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < g.k; ++p) s += a_at(g, a, i, p) * b_at(g, b, p, j);
      c[i * g.n + j] = g.accumulate ? c[i * g.n + j] + s : s;
    }
  }
}

void conv_temporal_forward(const ConvGeometry& g, const double* x, const double* w, double* y) {
  for (std::size_t r = 0; r < g.rows; ++r) {
    for (std::size_t to = 0; to < g.t_out; ++to) {
      for (std::size_t co = 0; co < g.c_out; ++co) {
        double s = 0.0;
        for (std::size_t k = 0; k < g.kernel; ++k) {
          const long ti = input_frame(g, to, k);
          if (ti < 0) continue;
          const double* xrow = x + (r * g.t_in + ti) * g.c_in;
          if (g.depthwise) {
            s += xrow[co] * w[k * g.c_out + co];
          } else {
            for (std::size_t ci = 0; ci < g.c_in; ++ci) s += xrow[ci] * w[(k * g.c_in + ci) * g.c_out + co];
          }
        }
        y[(r * g.t_out + to) * g.c_out + co] = s;
      }
    }
  }
}

void conv_temporal_backward_input(const ConvGeometry& g, const double* dy, const double* w, double* dx) {
  for (std::size_t r = 0; r < g.rows; ++r) {
    for (std::size_t ti = 0; ti < g.t_in; ++ti) {
      for (std::size_t ci = 0; ci < g.c_in; ++ci) {
        double s = 0.0;
        for (std::size_t to = 0; to < g.t_out; ++to) {
          for (std::size_t k = 0; k < g.kernel; ++k) {
            if (input_frame(g, to, k) != static_cast<long>(ti)) continue;
            const double* dyrow = dy + (r * g.t_out + to) * g.c_out;
            if (g.depthwise) {
              s += dyrow[ci] * w[k * g.c_out + ci];
            } else {
              for (std::size_t co = 0; co < g.c_out; ++co) s += dyrow[co] * w[(k * g.c_in + ci) * g.c_out + co];
            }
          }
        }
        dx[(r * g.t_in + ti) * g.c_in + ci] = s;
      }
    }
  }
}

void conv_temporal_backward_weight(const ConvGeometry& g, const double* x, const double* dy, double* dw) {
  for (std::size_t k = 0; k < g.kernel; ++k) {
    for (std::size_t ci = 0; ci < g.c_in; ++ci) {
      const std::size_t co_begin = g.depthwise ? ci : 0;
      const std::size_t co_end = g.depthwise ? ci + 1 : g.c_out;
      for (std::size_t co = co_begin; co < co_end; ++co) {
        double s = 0.0;
        for (std::size_t r = 0; r < g.rows; ++r) {
          for (std::size_t to = 0; to < g.t_out; ++to) {
            const long ti = input_frame(g, to, k);
            if (ti < 0) continue;
            s += x[(r * g.t_in + ti) * g.c_in + ci] * dy[(r * g.t_out + to) * g.c_out + co];
          }
        }
        if (g.depthwise) {
          dw[k * g.c_out + co] = s;
        } else {
          dw[(k * g.c_in + ci) * g.c_out + co] = s;
        }
      }
    }
  }
}

void softmax_rows(std::size_t rows, std::size_t n, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * n;
    double* yr = y + r * n;
    double mx = xr[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    for (std::size_t j = 0; j < n; ++j) yr[j] /= sum;
  }
}

void softmax_rows_backward(std::size_t rows, std::size_t n, const double* y, const double* dy, double* dx) {
  for (std::size_t r = 0; r < rows; ++r) {
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += y[r * n + j] * dy[r * n + j];
    for (std::size_t j = 0; j < n; ++j) dx[r * n + j] = y[r * n + j] * (dy[r * n + j] - dot);
  }
}

void max_pool_forward(const PoolGeometry& g, const double* x, double* y, std::size_t* argmax) {
  for (std::size_t r = 0; r < g.rows; ++r) {
    for (std::size_t to = 0; to < g.t_out; ++to) {
      for (std::size_t c = 0; c < g.channels; ++c) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t k = 0; k < g.window; ++k) {
          const long ti = static_cast<long>(to * g.stride + k) - static_cast<long>(g.pad_left);
          if (ti < 0 || ti >= static_cast<long>(g.t_in)) continue;
          const std::size_t idx = (r * g.t_in + ti) * g.channels + c;
          if (x[idx] > best) {
            best = x[idx];
            best_idx = idx;
          }
        }
        const std::size_t o = (r * g.t_out + to) * g.channels + c;
        y[o] = best;
        argmax[o] = best_idx;
      }
    }
  }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP
// ---------------------------------------------------------------------------
namespace parallel {

namespace {

// MR x NR block of C held in registers across the whole k loop. Every
// c[i][j] is still the ascending-p sum started from 0.0, as in the reference.
template <bool TransA, std::size_t MR, std::size_t NR>
inline void gemm_tile(const GemmArgs& g, const double* __restrict a, const double* __restrict b, double* c,
                      std::size_t i, std::size_t j) {
  double acc[MR][NR] = {};
  for (std::size_t p = 0; p < g.k; ++p) {
    const double* bp = b + p * g.n + j;
    for (std::size_t r = 0; r < MR; ++r) {
      const double av = TransA ? a[p * g.m + i + r] : a[(i + r) * g.k + p];
      for (std::size_t q = 0; q < NR; ++q) acc[r][q] += av * bp[q];
    }
  }
  for (std::size_t r = 0; r < MR; ++r) {
    double* crow = c + (i + r) * g.n + j;
    for (std::size_t q = 0; q < NR; ++q) crow[q] = g.accumulate ? crow[q] + acc[r][q] : acc[r][q];
  }
}

// Edge block of arbitrary size.
template <bool TransA>
void gemm_edge(const GemmArgs& g, const double* a, const double* b, double* c, std::size_t i0, std::size_t i1,
               std::size_t j0, std::size_t j1) {
  for (std::size_t i = i0; i < i1; ++i) {
    for (std::size_t j = j0; j < j1; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < g.k; ++p) s += (TransA ? a[p * g.m + i] : a[i * g.k + p]) * b[p * g.n + j];
      c[i * g.n + j] = g.accumulate ? c[i * g.n + j] + s : s;
    }
  }
}

constexpr std::size_t kMR = 4, kNR = 4;

// Rows [i0, i1) of C from row-major B (k, n); i0 is a multiple of kMR.
template <bool TransA>
void gemm_rows_t(const GemmArgs& g, const double* a, const double* b, double* c, std::size_t i0, std::size_t i1) {
  const std::size_t n_full = g.n / kNR * kNR;
  std::size_t i = i0;
  for (; i + kMR <= i1; i += kMR) {
    for (std::size_t j = 0; j < n_full; j += kNR) gemm_tile<TransA, kMR, kNR>(g, a, b, c, i, j);
    if (n_full < g.n) gemm_edge<TransA>(g, a, b, c, i, i + kMR, n_full, g.n);
  }
  if (i < i1) gemm_edge<TransA>(g, a, b, c, i, i1, 0, g.n);
}

void gemm_rows(const GemmArgs& g, const double* a, const double* b, double* c, std::size_t i0, std::size_t i1) {
  if (g.trans_a)
    gemm_rows_t<true>(g, a, b, c, i0, i1);
  else
    gemm_rows_t<false>(g, a, b, c, i0, i1);
}

// Per-thread scratch for a row-major copy of a transposed B.
double* scratch(std::size_t size) {
  thread_local std::vector<double> buf;
  if (buf.size() < size) buf.resize(size);
  return buf.data();
}

// Whole gemm on the calling thread.
void gemm_single(const GemmArgs& g, const double* a, const double* b, double* c) {
  if (g.trans_b) {
    double* bt = scratch(g.k * g.n);
    for (std::size_t j = 0; j < g.n; ++j)
      for (std::size_t p = 0; p < g.k; ++p) bt[p * g.n + j] = b[j * g.k + p];
    b = bt;
  }
  gemm_rows(g, a, b, c, 0, g.m);
}

}  // namespace

void gemm(const GemmArgs& g, const double* a, const double* b, double* c) {
  const std::size_t work = g.m * g.n * g.k;
  if (work <= kParallelWork || g.m < 8) {
    gemm_single(g, a, b, c);
    return;
  }
  std::vector<double> bt;
  if (g.trans_b) {
    bt.resize(g.k * g.n);
    for (std::size_t j = 0; j < g.n; ++j)
      for (std::size_t p = 0; p < g.k; ++p) bt[p * g.n + j] = b[j * g.k + p];
    b = bt.data();
  }
  const std::size_t blocks = (g.m + kMR - 1) / kMR;
#pragma omp parallel for schedule(static)
  for (std::size_t blk = 0; blk < blocks; ++blk) gemm_rows(g, a, b, c, blk * kMR, std::min(g.m, (blk + 1) * kMR));
}

void gemm_batched(const GemmArgs& g, std::size_t batch, const double* a, std::size_t a_step, const double* b,
                  std::size_t b_step, double* c, std::size_t c_step) {
  if (c_step == 0 || batch == 1) {
    // Shared output: accumulate in batch order.
    for (std::size_t i = 0; i < batch; ++i) gemm(g, a + i * a_step, b + i * b_step, c + i * c_step);
    return;
  }
  const std::size_t work = batch * g.m * g.n * g.k;
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (std::size_t i = 0; i < batch; ++i) gemm_single(g, a + i * a_step, b + i * b_step, c + i * c_step);
}

void conv_temporal_forward(const ConvGeometry& g, const double* x, const double* w, double* y) {
  const std::size_t work = g.rows * g.t_out * g.kernel * g.c_out * (g.depthwise ? 1 : g.c_in);
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (std::size_t r = 0; r < g.rows; ++r) {
    for (std::size_t to = 0; to < g.t_out; ++to) {
      double* yrow = y + (r * g.t_out + to) * g.c_out;
      std::fill(yrow, yrow + g.c_out, 0.0);
      for (std::size_t k = 0; k < g.kernel; ++k) {
        const long ti = input_frame(g, to, k);
        if (ti < 0) continue;
        const double* xrow = x + (r * g.t_in + ti) * g.c_in;
        if (g.depthwise) {
          const double* wk = w + k * g.c_out;
          for (std::size_t c = 0; c < g.c_out; ++c) yrow[c] += xrow[c] * wk[c];
        } else {
          for (std::size_t ci = 0; ci < g.c_in; ++ci) {
            const double xv = xrow[ci];
            const double* wrow = w + (k * g.c_in + ci) * g.c_out;
            for (std::size_t co = 0; co < g.c_out; ++co) yrow[co] += xv * wrow[co];
          }
        }
      }
    }
  }
}

void conv_temporal_backward_input(const ConvGeometry& g, const double* dy, const double* w, double* dx) {
  const std::size_t work = g.rows * g.t_out * g.kernel * g.c_out * (g.depthwise ? 1 : g.c_in);
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (std::size_t r = 0; r < g.rows; ++r) {
    double* dxr = dx + r * g.t_in * g.c_in;
    std::fill(dxr, dxr + g.t_in * g.c_in, 0.0);
    for (std::size_t to = 0; to < g.t_out; ++to) {
      const double* dyrow = dy + (r * g.t_out + to) * g.c_out;
      for (std::size_t k = 0; k < g.kernel; ++k) {
        const long ti = input_frame(g, to, k);
        if (ti < 0) continue;
        double* dxrow = dxr + ti * g.c_in;
        if (g.depthwise) {
          const double* wk = w + k * g.c_out;
          for (std::size_t c = 0; c < g.c_in; ++c) dxrow[c] += dyrow[c] * wk[c];
        } else {
          for (std::size_t ci = 0; ci < g.c_in; ++ci) {
            const double* wrow = w + (k * g.c_in + ci) * g.c_out;
            double s = dxrow[ci];
            for (std::size_t co = 0; co < g.c_out; ++co) s += dyrow[co] * wrow[co];
            dxrow[ci] = s;
          }
        }
      }
    }
  }
}

void conv_temporal_backward_weight(const ConvGeometry& g, const double* x, const double* dy, double* dw) {
  const std::size_t work = g.rows * g.t_out * g.kernel * g.c_out * (g.depthwise ? 1 : g.c_in);
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (std::size_t k = 0; k < g.kernel; ++k) {
    if (g.depthwise) {
      double* dwk = dw + k * g.c_out;
      std::fill(dwk, dwk + g.c_out, 0.0);
      for (std::size_t r = 0; r < g.rows; ++r) {
        for (std::size_t to = 0; to < g.t_out; ++to) {
          const long ti = input_frame(g, to, k);
          if (ti < 0) continue;
          const double* xrow = x + (r * g.t_in + ti) * g.c_in;
          const double* dyrow = dy + (r * g.t_out + to) * g.c_out;
          for (std::size_t c = 0; c < g.c_out; ++c) dwk[c] += xrow[c] * dyrow[c];
        }
      }
      continue;
    }
    for (std::size_t ci = 0; ci < g.c_in; ++ci) {
      double* dwrow = dw + (k * g.c_in + ci) * g.c_out;
      std::fill(dwrow, dwrow + g.c_out, 0.0);
      for (std::size_t r = 0; r < g.rows; ++r) {
        for (std::size_t to = 0; to < g.t_out; ++to) {
          const long ti = input_frame(g, to, k);
          if (ti < 0) continue;
          const double xv = x[(r * g.t_in + ti) * g.c_in + ci];
          const double* dyrow = dy + (r * g.t_out + to) * g.c_out;
          for (std::size_t co = 0; co < g.c_out; ++co) dwrow[co] += xv * dyrow[co];
        }
      }
    }
  }
}

void softmax_rows(std::size_t rows, std::size_t n, const double* x, double* y) {
#pragma omp parallel for schedule(static) if (rows * n > kParallelWork)
  for (std::size_t r = 0; r < rows; ++r) serial::softmax_rows(1, n, x + r * n, y + r * n);
}

void softmax_rows_backward(std::size_t rows, std::size_t n, const double* y, const double* dy, double* dx) {
#pragma omp parallel for schedule(static) if (rows * n > kParallelWork)
  for (std::size_t r = 0; r < rows; ++r) serial::softmax_rows_backward(1, n, y + r * n, dy + r * n, dx + r * n);
}

void max_pool_forward(const PoolGeometry& g, const double* x, double* y, std::size_t* argmax) {
#pragma omp parallel for schedule(static) if (g.rows * g.t_out * g.channels * g.window > kParallelWork)
  for (std::size_t r = 0; r < g.rows; ++r) {
    PoolGeometry row = g;
    row.rows = 1;
    const std::size_t in_off = r * g.t_in * g.channels;
    const std::size_t out_off = r * g.t_out * g.channels;
    serial::max_pool_forward(row, x + in_off, y + out_off, argmax + out_off);
    for (std::size_t i = 0; i < g.t_out * g.channels; ++i) argmax[out_off + i] += in_off;
  }
}

}  // namespace parallel

}  // namespace stepcat::kernels
