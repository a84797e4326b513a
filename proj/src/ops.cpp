#include "stepcat/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <numeric>

namespace stepcat {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// Maps every flat index of `from` to a flat index of a tensor whose strides are
// `to_strides` (zero stride = collapsed axis).
std::vector<std::size_t> index_map(const Shape& from, const std::vector<std::size_t>& to_strides) {
  const std::size_t n = shape_numel(from);
  std::vector<std::size_t> map(n, 0);
  if (from.empty()) return map;
  const std::size_t last = from.size() - 1, inner = from[last], step = to_strides[last];
  std::vector<std::size_t> idx(from.size(), 0);
  for (std::size_t f = 0; f < n; f += inner) {
    std::size_t off = 0;
    for (std::size_t d = 0; d < last; ++d) off += idx[d] * to_strides[d];
    for (std::size_t j = 0; j < inner; ++j) map[f + j] = off + j * step;
    for (std::size_t d = last; d-- > 0;) {
      if (++idx[d] < from[d]) break;
      idx[d] = 0;
    }
  }
  return map;
}

void add_into(Tensor* dst, const Tensor& src) {
  if (dst == nullptr) return;
  auto d = dst->data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

// Sizes before, along and after an axis.
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit a;
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  a.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

Tensor permute_tensor(const Tensor& t, const std::vector<std::size_t>& perm) {
  const Shape& in = t.shape();
  Shape out_shape(in.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = in[perm[i]];
  const auto in_st = strides_of(in);
  std::vector<std::size_t> gather(in.size());
  for (std::size_t i = 0; i < perm.size(); ++i) gather[i] = in_st[perm[i]];
  const auto map = index_map(out_shape, gather);
  Tensor out(out_shape);
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = t[map[i]];
  return out;
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor out(a.shape());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
  return a.graph().record("add", std::move(out), {a, b}, [](Graph::BackwardContext& c) {
    add_into(c.grad_input(0), c.grad_output());
    add_into(c.grad_input(1), c.grad_output());
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor out(a.shape());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] - bv[i];
  return a.graph().record("sub", std::move(out), {a, b}, [](Graph::BackwardContext& c) {
    add_into(c.grad_input(0), c.grad_output());
    if (Tensor* gb = c.grad_input(1)) {
      for (std::size_t i = 0; i < gb->numel(); ++i) (*gb)[i] -= c.grad_output()[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor out(a.shape());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
  return a.graph().record("mul", std::move(out), {a, b}, [](Graph::BackwardContext& c) {
    const Tensor& g = c.grad_output();
    if (Tensor* ga = c.grad_input(0)) {
      const Tensor& in1 = c.input(1);
      for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * in1[i];
    }
    if (Tensor* gb = c.grad_input(1)) {
      const Tensor& in0 = c.input(0);
      for (std::size_t i = 0; i < g.numel(); ++i) (*gb)[i] += g[i] * in0[i];
    }
  });
}

Var div(Var a, Var b) {
  require_same_shape("div", a, b);
  Tensor out(a.shape());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] / bv[i];
  return a.graph().record("div", std::move(out), {a, b}, [](Graph::BackwardContext& c) {
    const Tensor& g = c.grad_output();
    const Tensor& bv = c.input(1);
    if (Tensor* ga = c.grad_input(0)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] / bv[i];
    }
    if (Tensor* gb = c.grad_input(1)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*gb)[i] -= g[i] * c.output()[i] / bv[i];
    }
  });
}

Var scale(Var a, double s) {
  Tensor out(a.shape());
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * s;
  return a.graph().record("scale", std::move(out), {a}, [s](Graph::BackwardContext& c) {
    if (Tensor* ga = c.grad_input(0)) {
      for (std::size_t i = 0; i < ga->numel(); ++i) (*ga)[i] += c.grad_output()[i] * s;
    }
  });
}

Var broadcast_to(Var a, const Shape& shape) {
  const Shape& in = a.shape();
  if (in.size() != shape.size()) {
    throw DimensionError("broadcast_to: rank mismatch " + shape_str(in) + " -> " + shape_str(shape));
  }
  auto src_st = strides_of(in);
  for (std::size_t d = 0; d < in.size(); ++d) {
    if (in[d] == shape[d]) continue;
    if (in[d] != 1) throw DimensionError("broadcast_to: cannot expand " + shape_str(in) + " to " + shape_str(shape));
    src_st[d] = 0;
  }
  if (in == shape) return a;
  auto map = std::make_shared<std::vector<std::size_t>>(index_map(shape, src_st));
  Tensor out(shape);
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < map->size(); ++i) out[i] = av[(*map)[i]];
  return a.graph().record("broadcast_to", std::move(out), {a}, [map](Graph::BackwardContext& c) {
    if (Tensor* ga = c.grad_input(0)) {
      for (std::size_t i = 0; i < map->size(); ++i) (*ga)[(*map)[i]] += c.grad_output()[i];
    }
  });
}

Var matmul(Var a, Var b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  auto mismatch = [&] {
    return DimensionError("matmul: incompatible shapes " + shape_str(as) + " and " + shape_str(bs));
  };
  if (as.size() < 2 || bs.size() < 2) throw mismatch();
  const std::size_t m = as[as.size() - 2], k = as.back(), n = bs.back();
  if (bs[bs.size() - 2] != k) throw mismatch();
  const Shape a_batch(as.begin(), as.end() - 2);
  const Shape b_batch(bs.begin(), bs.end() - 2);
  enum class Mode { Pairwise, SharedB, SharedA } mode;
  if (a_batch == b_batch) {
    mode = Mode::Pairwise;
  } else if (b_batch.empty()) {
    mode = Mode::SharedB;
  } else if (a_batch.empty()) {
    mode = Mode::SharedA;
  } else {
    throw mismatch();
  }
  const Shape& batch = a_batch.empty() ? b_batch : a_batch;
  const std::size_t nb = shape_numel(batch);
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor out(out_shape);

  const std::size_t a_step = mode == Mode::SharedA ? 0 : m * k;
  const std::size_t b_step = mode == Mode::SharedB ? 0 : k * n;
  if (mode == Mode::SharedB) {
    kernels::parallel::gemm({nb * m, k, n}, a.value().ptr(), b.value().ptr(), out.ptr());
  } else {
    kernels::parallel::gemm_batched({m, k, n}, nb, a.value().ptr(), a_step, b.value().ptr(), b_step, out.ptr(),
                                    m * n);
  }

  return a.graph().record("matmul", std::move(out), {a, b},
                          [m, k, n, nb, a_step, b_step, mode](Graph::BackwardContext& c) {
                            const double* g = c.grad_output().ptr();
                            const double* av = c.input(0).ptr();
                            const double* bv = c.input(1).ptr();
                            if (Tensor* ga = c.grad_input(0)) {
                              // dA = dC * B^T
                              if (mode == Mode::SharedB) {
                                kernels::parallel::gemm({nb * m, n, k, false, true, true}, g, bv, ga->ptr());
                              } else {
                                kernels::parallel::gemm_batched({m, n, k, false, true, true}, nb, g, m * n, bv,
                                                                b_step, ga->ptr(), a_step);
                              }
                            }
                            if (Tensor* gb = c.grad_input(1)) {
                              // dB = A^T * dC
                              if (mode == Mode::SharedB) {
                                kernels::parallel::gemm({k, nb * m, n, true, false, true}, av, g, gb->ptr());
                              } else {
                                kernels::parallel::gemm_batched({k, m, n, true, false, true}, nb, av, a_step, g,
                                                                m * n, gb->ptr(), b_step);
                              }
                            }
                          });
}

Var permute(Var a, const std::vector<std::size_t>& perm) {
  const std::size_t r = a.rank();
  std::vector<std::size_t> check(perm);
  std::sort(check.begin(), check.end());
  if (perm.size() != r || std::adjacent_find(check.begin(), check.end()) != check.end() ||
      (!check.empty() && check.back() >= r)) {
    throw DimensionError("permute: invalid permutation for shape " + shape_str(a.shape()));
  }
  std::vector<std::size_t> inverse(r);
  for (std::size_t i = 0; i < r; ++i) inverse[perm[i]] = i;
  return a.graph().record("permute", permute_tensor(a.value(), perm), {a}, [inverse](Graph::BackwardContext& c) {
    if (Tensor* ga = c.grad_input(0)) add_into(ga, permute_tensor(c.grad_output(), inverse));
  });
}

Var transpose_last(Var a) {
  std::vector<std::size_t> perm(a.rank());
  std::iota(perm.begin(), perm.end(), 0);
  if (perm.size() < 2) throw DimensionError("transpose_last: rank < 2");
  std::swap(perm[perm.size() - 1], perm[perm.size() - 2]);
  return permute(a, perm);
}

Var reshape(Var a, const Shape& shape) {
  if (a.shape() == shape) return a;
  Tensor out = a.value().reshaped(shape);
  return a.graph().record("reshape", std::move(out), {a}, [](Graph::BackwardContext& c) {
    if (Tensor* ga = c.grad_input(0)) {
      for (std::size_t i = 0; i < ga->numel(); ++i) (*ga)[i] += c.grad_output()[i];
    }
  });
}

Var slice(Var a, int axis, std::size_t start, std::size_t length) {
  const std::size_t ax = a.value().normalize_axis(axis);
  const Shape& in = a.shape();
  if (length == 0 || start + length > in[ax]) {
    throw DimensionError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of range on axis " + std::to_string(ax) + " of " + shape_str(in));
  }
  const AxisSplit s = split_axis(in, ax);
  Shape out_shape = in;
  out_shape[ax] = length;
  Tensor out(out_shape);
  for (std::size_t o = 0; o < s.outer; ++o) {
    const double* src = a.value().ptr() + (o * s.n + start) * s.inner;
    std::copy(src, src + length * s.inner, out.ptr() + o * length * s.inner);
  }
  return a.graph().record("slice", std::move(out), {a}, [s, start, length](Graph::BackwardContext& c) {
    if (Tensor* ga = c.grad_input(0)) {
      for (std::size_t o = 0; o < s.outer; ++o) {
        double* dst = ga->ptr() + (o * s.n + start) * s.inner;
        const double* src = c.grad_output().ptr() + o * length * s.inner;
        for (std::size_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no operands");
  if (parts.size() == 1) return parts[0];
  const std::size_t ax = parts[0].value().normalize_axis(axis);
  Shape out_shape = parts[0].shape();
  std::vector<std::size_t> sizes;
  std::size_t total = 0;
  for (const Var& p : parts) {
    Shape s = p.shape();
    if (s.size() != out_shape.size()) throw DimensionError("concat: rank mismatch " + shape_str(s));
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != ax && s[d] != out_shape[d]) {
        throw DimensionError("concat: shape mismatch " + shape_str(parts[0].shape()) + " vs " + shape_str(s));
      }
    }
    sizes.push_back(s[ax]);
    total += s[ax];
  }
  out_shape[ax] = total;
  const AxisSplit s = split_axis(out_shape, ax);
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const std::size_t len = sizes[p] * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o) {
      const double* src = parts[p].value().ptr() + o * len;
      std::copy(src, src + len, out.ptr() + (o * s.n + offset) * s.inner);
    }
    offset += sizes[p];
  }
  return parts[0].graph().record("concat", std::move(out), parts, [s, sizes](Graph::BackwardContext& c) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < sizes.size(); ++p) {
      const std::size_t len = sizes[p] * s.inner;
      if (Tensor* gp = c.grad_input(p)) {
        for (std::size_t o = 0; o < s.outer; ++o) {
          const double* src = c.grad_output().ptr() + (o * s.n + offset) * s.inner;
          double* dst = gp->ptr() + o * len;
          for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
        }
      }
      offset += sizes[p];
    }
  });
}

Var index_select(Var a, int axis, std::span<const std::size_t> indices) {
  const std::size_t ax = a.value().normalize_axis(axis);
  const Shape& in = a.shape();
  if (indices.empty()) throw DimensionError("index_select: empty index list");
  for (auto i : indices) {
    if (i >= in[ax]) {
      throw DimensionError("index_select: index " + std::to_string(i) + " out of range for " + shape_str(in));
    }
  }
  const AxisSplit s = split_axis(in, ax);
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  Shape out_shape = in;
  out_shape[ax] = idx.size();
  Tensor out(out_shape);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const double* src = a.value().ptr() + (o * s.n + idx[j]) * s.inner;
      std::copy(src, src + s.inner, out.ptr() + (o * idx.size() + j) * s.inner);
    }
  }
  return a.graph().record("index_select", std::move(out), {a}, [s, idx](Graph::BackwardContext& c) {
    if (Tensor* ga = c.grad_input(0)) {
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t j = 0; j < idx.size(); ++j) {
          const double* src = c.grad_output().ptr() + (o * idx.size() + j) * s.inner;
          double* dst = ga->ptr() + (o * s.n + idx[j]) * s.inner;
          for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
        }
      }
    }
  });
}

Var softmax(Var x, int axis) {
  const std::size_t ax = x.value().normalize_axis(axis);
  const AxisSplit s = split_axis(x.shape(), ax);
  if (s.inner == 1) {
    Tensor out(x.shape());
    kernels::parallel::softmax_rows(s.outer, s.n, x.value().ptr(), out.ptr());
    return x.graph().record("softmax", std::move(out), {x}, [s](Graph::BackwardContext& c) {
      if (Tensor* gx = c.grad_input(0)) {
        Tensor tmp(gx->shape());
        kernels::parallel::softmax_rows_backward(s.outer, s.n, c.output().ptr(), c.grad_output().ptr(), tmp.ptr());
        add_into(gx, tmp);
      }
    });
  }
  // Strided axis: move it last, reuse the row kernel, move it back.
  std::vector<std::size_t> perm(x.rank());
  std::iota(perm.begin(), perm.end(), 0);
  perm.erase(perm.begin() + static_cast<long>(ax));
  perm.push_back(ax);
  std::vector<std::size_t> inverse(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inverse[perm[i]] = i;
  return permute(softmax(permute(x, perm), -1), inverse);
}

Var log_softmax(Var x, int axis) {
  const std::size_t ax = x.value().normalize_axis(axis);
  const AxisSplit s = split_axis(x.shape(), ax);
  Tensor out(x.shape());
  const Tensor& xv = x.value();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      auto at = [&](std::size_t j) { return (o * s.n + j) * s.inner + i; };
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < s.n; ++j) mx = std::max(mx, xv[at(j)]);
      double sum = 0.0;
      for (std::size_t j = 0; j < s.n; ++j) sum += std::exp(xv[at(j)] - mx);
      const double lse = mx + std::log(sum);
      for (std::size_t j = 0; j < s.n; ++j) out[at(j)] = xv[at(j)] - lse;
    }
  }
  return x.graph().record("log_softmax", std::move(out), {x}, [s](Graph::BackwardContext& c) {
    Tensor* gx = c.grad_input(0);
    if (!gx) return;
    const Tensor& g = c.grad_output();
    const Tensor& y = c.output();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        auto at = [&](std::size_t j) { return (o * s.n + j) * s.inner + i; };
        double gsum = 0.0;
        for (std::size_t j = 0; j < s.n; ++j) gsum += g[at(j)];
        for (std::size_t j = 0; j < s.n; ++j) (*gx)[at(j)] += g[at(j)] - std::exp(y[at(j)]) * gsum;
      }
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, int axis, double eps) {
  const std::size_t ax = x.value().normalize_axis(axis);
  const AxisSplit s = split_axis(x.shape(), ax);
  if (gamma.value().numel() != s.n || beta.value().numel() != s.n) {
    throw DimensionError("layer_norm: gamma " + shape_str(gamma.shape()) + " / beta " + shape_str(beta.shape()) +
                         " do not match axis size " + std::to_string(s.n) + " of " + shape_str(x.shape()));
  }
  const std::size_t slices = s.outer * s.inner;
  auto xhat = std::make_shared<Tensor>(x.shape());
  auto inv_std = std::make_shared<std::vector<double>>(slices);
  Tensor out(x.shape());
  const Tensor& xv = x.value();
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      auto at = [&](std::size_t j) { return (o * s.n + j) * s.inner + i; };
      double mean = 0.0;
      for (std::size_t j = 0; j < s.n; ++j) mean += xv[at(j)];
      mean /= static_cast<double>(s.n);
      double var = 0.0;
      for (std::size_t j = 0; j < s.n; ++j) var += (xv[at(j)] - mean) * (xv[at(j)] - mean);
      var /= static_cast<double>(s.n);
      const double inv = 1.0 / std::sqrt(var + eps);
      (*inv_std)[o * s.inner + i] = inv;
      for (std::size_t j = 0; j < s.n; ++j) {
        const double h = (xv[at(j)] - mean) * inv;
        (*xhat)[at(j)] = h;
        out[at(j)] = h * gv[j] + bv[j];
      }
    }
  }
  return x.graph().record(
      "layer_norm", std::move(out), {x, gamma, beta}, [s, xhat, inv_std](Graph::BackwardContext& c) {
        const Tensor& g = c.grad_output();
        const Tensor& gv = c.input(1);
        Tensor* gx = c.grad_input(0);
        Tensor* ggamma = c.grad_input(1);
        Tensor* gbeta = c.grad_input(2);
        const double nn = static_cast<double>(s.n);
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t i = 0; i < s.inner; ++i) {
            auto at = [&](std::size_t j) { return (o * s.n + j) * s.inner + i; };
            double mean_d = 0.0, mean_dh = 0.0;
            for (std::size_t j = 0; j < s.n; ++j) {
              const double d = g[at(j)] * gv[j];
              mean_d += d;
              mean_dh += d * (*xhat)[at(j)];
              if (ggamma) (*ggamma)[j] += g[at(j)] * (*xhat)[at(j)];
              if (gbeta) (*gbeta)[j] += g[at(j)];
            }
            if (!gx) continue;
            mean_d /= nn;
            mean_dh /= nn;
            const double inv = (*inv_std)[o * s.inner + i];
            for (std::size_t j = 0; j < s.n; ++j) {
              const double d = g[at(j)] * gv[j];
              (*gx)[at(j)] += inv * (d - mean_d - (*xhat)[at(j)] * mean_dh);
            }
          }
        }
      });
}

Var gelu(Var x) {
  Tensor out(x.shape());
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double v = xv[i];
    out[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  }
  return x.graph().record("gelu", std::move(out), {x}, [](Graph::BackwardContext& c) {
    Tensor* gx = c.grad_input(0);
    if (!gx) return;
    const double inv_sqrt_2pi = std::numbers::inv_sqrtpi * kInvSqrt2;
    const Tensor& in0 = c.input(0);
    for (std::size_t i = 0; i < gx->numel(); ++i) {
      const double v = in0[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      (*gx)[i] += c.grad_output()[i] * (cdf + v * pdf);
    }
  });
}

Var tanh(Var x) {
  Tensor out(x.shape());
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(xv[i]);
  return x.graph().record("tanh", std::move(out), {x}, [](Graph::BackwardContext& c) {
    if (Tensor* gx = c.grad_input(0)) {
      for (std::size_t i = 0; i < gx->numel(); ++i) {
        const double y = c.output()[i];
        (*gx)[i] += c.grad_output()[i] * (1.0 - y * y);
      }
    }
  });
}

Var sigmoid(Var x) {
  Tensor out(x.shape());
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  return x.graph().record("sigmoid", std::move(out), {x}, [](Graph::BackwardContext& c) {
    if (Tensor* gx = c.grad_input(0)) {
      for (std::size_t i = 0; i < gx->numel(); ++i) {
        const double y = c.output()[i];
        (*gx)[i] += c.grad_output()[i] * y * (1.0 - y);
      }
    }
  });
}

Var abs(Var x) {
  Tensor out(x.shape());
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::abs(xv[i]);
  return x.graph().record("abs", std::move(out), {x}, [](Graph::BackwardContext& c) {
    if (Tensor* gx = c.grad_input(0)) {
      const Tensor& in0 = c.input(0);
      for (std::size_t i = 0; i < gx->numel(); ++i) {
        const double v = in0[i];
        const double sign = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
        (*gx)[i] += c.grad_output()[i] * sign;
      }
    }
  });
}

Var conv_temporal(Var x, Var w, const ConvOptions& opt) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  auto mismatch = [&] {
    return DimensionError("conv_temporal: input " + shape_str(xs) + " incompatible with weight " + shape_str(ws));
  };
  if (xs.size() != 3) throw mismatch();
  std::size_t c_out = 0;
  if (opt.depthwise) {
    if (ws.size() != 2 || ws[1] != xs[2]) throw mismatch();
    c_out = ws[1];
  } else {
    if (ws.size() != 3 || ws[1] != xs[2]) throw mismatch();
    c_out = ws[2];
  }
  const kernels::ConvGeometry g = kernels::make_conv_geometry(xs[0], xs[1], xs[2], c_out, ws[0], opt.dilation,
                                                              opt.stride, opt.depthwise, opt.padding);
  Tensor out({g.rows, g.t_out, g.c_out});
  kernels::parallel::conv_temporal_forward(g, x.value().ptr(), w.value().ptr(), out.ptr());
  return x.graph().record("conv_temporal", std::move(out), {x, w}, [g](Graph::BackwardContext& c) {
    if (Tensor* gx = c.grad_input(0)) {
      Tensor tmp(gx->shape());
      kernels::parallel::conv_temporal_backward_input(g, c.grad_output().ptr(), c.input(1).ptr(), tmp.ptr());
      add_into(gx, tmp);
    }
    if (Tensor* gw = c.grad_input(1)) {
      Tensor tmp(gw->shape());
      kernels::parallel::conv_temporal_backward_weight(g, c.input(0).ptr(), c.grad_output().ptr(), tmp.ptr());
      add_into(gw, tmp);
    }
  });
}

Var pointwise_conv(Var x, Var w) {
  if (w.rank() != 2 || x.shape().back() != w.dim(0)) {
    throw DimensionError("pointwise_conv: channel mismatch between input " + shape_str(x.shape()) + " and weight " +
                         shape_str(w.shape()));
  }
  if (x.rank() >= 2) return matmul(x, w);
  return reshape(matmul(reshape(x, {1, x.dim(0)}), w), {w.dim(1)});
}

Var max_pool_temporal(Var x, std::size_t window, std::size_t stride) {
  const Shape& xs = x.shape();
  if (xs.size() != 3) throw DimensionError("max_pool_temporal: expected rank-3 input, got " + shape_str(xs));
  const kernels::PoolGeometry g = kernels::make_pool_geometry(xs[0], xs[1], xs[2], window, stride);
  Tensor out({g.rows, g.t_out, g.channels});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
  kernels::parallel::max_pool_forward(g, x.value().ptr(), out.ptr(), argmax->data());
  return x.graph().record("max_pool_temporal", std::move(out), {x}, [argmax](Graph::BackwardContext& c) {
    if (Tensor* gx = c.grad_input(0)) {
      for (std::size_t i = 0; i < argmax->size(); ++i) (*gx)[(*argmax)[i]] += c.grad_output()[i];
    }
  });
}

Var global_average_pool(Var x, std::vector<int> axes) {
  const Shape& in = x.shape();
  std::vector<bool> reduce(in.size(), false);
  for (int a : axes) reduce[x.value().normalize_axis(a)] = true;
  Shape out_shape;
  std::size_t count = 1;
  for (std::size_t d = 0; d < in.size(); ++d) {
    if (reduce[d]) {
      count *= in[d];
    } else {
      out_shape.push_back(in[d]);
    }
  }
  if (out_shape.empty()) out_shape = {1};
  std::vector<std::size_t> to_st(in.size(), 0);
  std::size_t st = 1;
  for (std::size_t d = in.size(); d-- > 0;) {
    if (reduce[d]) continue;
    to_st[d] = st;
    st *= in[d];
  }
  auto map = std::make_shared<std::vector<std::size_t>>(index_map(in, to_st));
  Tensor out(out_shape);
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < map->size(); ++i) out[(*map)[i]] += xv[i];
  const double inv = 1.0 / static_cast<double>(count);
  for (auto& v : out.data()) v *= inv;
  return x.graph().record("global_average_pool", std::move(out), {x}, [map, inv](Graph::BackwardContext& c) {
    if (Tensor* gx = c.grad_input(0)) {
      for (std::size_t i = 0; i < map->size(); ++i) (*gx)[i] += c.grad_output()[(*map)[i]] * inv;
    }
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.graph().record("sum", Tensor::scalar(s), {x}, [](Graph::BackwardContext& c) {
    if (Tensor* gx = c.grad_input(0)) {
      const double g = c.grad_output()[0];
      for (auto& v : gx->data()) v += g;
    }
  });
}

Var select(Var x, std::size_t flat_index) {
  if (flat_index >= x.value().numel()) {
    throw DimensionError("select: index " + std::to_string(flat_index) + " out of range for " + shape_str(x.shape()));
  }
  return x.graph().record("select", Tensor::scalar(x.value()[flat_index]), {x},
                          [flat_index](Graph::BackwardContext& c) {
                            if (Tensor* gx = c.grad_input(0)) (*gx)[flat_index] += c.grad_output()[0];
                          });
}

void check_finite(Var x, const std::string& where) {
  if (!x.value().all_finite()) throw NumericError("non-finite value produced in " + where);
}

}  // namespace stepcat
