#pragma once

// Brute-force loop implementations used as independent references by the
// unit tests and the acceptance binary. They share no code with the library
// beyond Tensor storage and parameter structs.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "stepcat/extractor.hpp"
#include "stepcat/spatial.hpp"
#include "stepcat/temporal.hpp"

namespace stepcat::oracle {

// ---- primitives ----

inline Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c.at({i, j}) += a.at({i, p}) * b.at({p, j});
  return c;
}

// Direct sliding window with explicit same padding, no shared geometry code.
inline Tensor conv_oracle(const Tensor& x, const Tensor& w, std::size_t dilation, std::size_t stride, bool depthwise) {
  const std::size_t rows = x.dim(0), t = x.dim(1), cin = x.dim(2), k = w.dim(0);
  const std::size_t cout = depthwise ? cin : w.dim(2);
  const std::size_t tout = (t + stride - 1) / stride;
  const long eff = static_cast<long>(dilation * (k - 1) + 1);
  const long total = std::max(0L, static_cast<long>((tout - 1) * stride) + eff - static_cast<long>(t));
  const long left = total / 2;
  Tensor y({rows, tout, cout});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t to = 0; to < tout; ++to)
      for (std::size_t co = 0; co < cout; ++co) {
        double s = 0.0;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const long ti = static_cast<long>(to * stride + kk * dilation) - left;
          if (ti < 0 || ti >= static_cast<long>(t)) continue;
          if (depthwise) {
            s += x.at({r, static_cast<std::size_t>(ti), co}) * w.at({kk, co});
          } else {
            for (std::size_t ci = 0; ci < cin; ++ci) s += x.at({r, static_cast<std::size_t>(ti), ci}) * w.at({kk, ci, co});
          }
        }
        y.at({r, to, co}) = s;
      }
  return y;
}

// ---- temporal blocks on (N, T, C) tensors ----

inline Tensor ln_oracle(const Tensor& x, const LayerNormParams& p) {
  const std::size_t c = x.dim(-1), rows = x.numel() / c;
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t k = 0; k < c; ++k) mean += x[r * c + k];
    mean /= static_cast<double>(c);
    for (std::size_t k = 0; k < c; ++k) var += (x[r * c + k] - mean) * (x[r * c + k] - mean);
    var /= static_cast<double>(c);
    for (std::size_t k = 0; k < c; ++k)
      out[r * c + k] = (x[r * c + k] - mean) / std::sqrt(var + kLayerNormEps) * p.gamma->value[k] + p.beta->value[k];
  }
  return out;
}

inline Tensor pw_oracle(const Tensor& x, const Tensor& w) {
  const std::size_t n = x.dim(0), t = x.dim(1), ci = w.dim(0), co = w.dim(1);
  Tensor out({n, t, co});
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < t; ++b)
      for (std::size_t o = 0; o < co; ++o) {
        double s = 0.0;
        for (std::size_t i = 0; i < ci; ++i) s += x.at({a, b, i}) * w.at({i, o});
        out.at({a, b, o}) = s;
      }
  return out;
}

// Same-padded temporal conv, stride 1; w (K, ci, co).
inline Tensor conv_oracle(const Tensor& x, const Tensor& w, std::size_t dil) {
  const std::size_t n = x.dim(0), t = x.dim(1), kk = w.dim(0), ci = w.dim(1), co = w.dim(2);
  const long half = static_cast<long>(kk / 2 * dil);
  Tensor out({n, t, co});
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < t; ++b)
      for (std::size_t o = 0; o < co; ++o) {
        double s = 0.0;
        for (std::size_t k = 0; k < kk; ++k) {
          const long src = static_cast<long>(b) + static_cast<long>(k * dil) - half;
          if (src < 0 || src >= static_cast<long>(t)) continue;
          for (std::size_t i = 0; i < ci; ++i) s += x.at({a, std::size_t(src), i}) * w.at({k, i, o});
        }
        out.at({a, b, o}) = s;
      }
  return out;
}

inline Tensor dw3_oracle(const Tensor& x, const Tensor& w) {
  const std::size_t n = x.dim(0), t = x.dim(1), c = x.dim(2);
  Tensor out(x.shape());
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < t; ++b)
      for (std::size_t e = 0; e < c; ++e) {
        double s = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
          const long src = static_cast<long>(b + k) - 1;
          if (src >= 0 && src < static_cast<long>(t)) s += x.at({a, std::size_t(src), e}) * w.at({k, e});
        }
        out.at({a, b, e}) = s;
      }
  return out;
}

inline Tensor maxpool3_oracle(const Tensor& x) {
  const std::size_t n = x.dim(0), t = x.dim(1), c = x.dim(2);
  Tensor out(x.shape());
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < t; ++b)
      for (std::size_t e = 0; e < c; ++e) {
        double m = -std::numeric_limits<double>::infinity();
        for (long s = static_cast<long>(b) - 1; s <= static_cast<long>(b) + 1; ++s)
          if (s >= 0 && s < static_cast<long>(t)) m = std::max(m, x.at({a, std::size_t(s), e}));
        out.at({a, b, e}) = m;
      }
  return out;
}

inline Tensor concat_oracle(const std::vector<Tensor>& parts) {
  const std::size_t n = parts[0].dim(0), t = parts[0].dim(1);
  std::size_t c = 0;
  for (const auto& p : parts) c += p.dim(2);
  Tensor out({n, t, c});
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < t; ++b) {
      std::size_t off = 0;
      for (const auto& p : parts) {
        for (std::size_t e = 0; e < p.dim(2); ++e) out.at({a, b, off + e}) = p.at({a, b, e});
        off += p.dim(2);
      }
    }
  return out;
}

inline Tensor add_oracle(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline Tensor value_oracle(const Tensor& y, const SdtaParams& p) {
  const auto& cfg = p.config;
  return add_oracle(concat_oracle({conv_oracle(pw_oracle(y, p.v_p[0]->value), p.v_tcn_a->value, cfg.dilation_a),
                                   conv_oracle(pw_oracle(y, p.v_p[1]->value), p.v_tcn_b->value, cfg.dilation_b),
                                   maxpool3_oracle(pw_oracle(y, p.v_p[2]->value)), pw_oracle(y, p.v_p[3]->value)}),
                    y);
}

// Channel attention per head: S[i][j] = sum_tokens k[.,i] q[.,j] / |alpha|, softmax over i, out[., j] = sum_i v[., i] A[i][j].
inline Tensor transposed_oracle(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& alpha, std::size_t heads,
                         Tensor* attn = nullptr) {
  const std::size_t n = q.dim(0), t = q.dim(1), c = q.dim(2), d = c / heads, tokens = n * t;
  Tensor out(q.shape());
  if (attn) *attn = Tensor({heads, d, d});
  for (std::size_t h = 0; h < heads; ++h) {
    std::vector<double> s(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t r = 0; r < tokens; ++r) s[i * d + j] += k[r * c + h * d + i] * q[r * c + h * d + j];
    for (double& x : s) x /= std::abs(alpha[h]);
    for (std::size_t j = 0; j < d; ++j) {
      double mx = -1e300, z = 0.0;
      for (std::size_t i = 0; i < d; ++i) mx = std::max(mx, s[i * d + j]);
      for (std::size_t i = 0; i < d; ++i) z += (s[i * d + j] = std::exp(s[i * d + j] - mx));
      for (std::size_t i = 0; i < d; ++i) s[i * d + j] /= z;
    }
    if (attn)
      for (std::size_t i = 0; i < d * d; ++i) (*attn)[h * d * d + i] = s[i];
    for (std::size_t r = 0; r < tokens; ++r)
      for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < d; ++i) acc += v[r * c + h * d + i] * s[i * d + j];
        out[r * c + h * d + j] = acc;
      }
  }
  return out;
}

inline Tensor token_oracle(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
  const std::size_t c = q.dim(2), d = c / heads, tokens = q.dim(0) * q.dim(1);
  Tensor out(q.shape());
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t a = 0; a < tokens; ++a) {
      std::vector<double> s(tokens);
      double mx = -1e300, z = 0.0;
      for (std::size_t b = 0; b < tokens; ++b) {
        double dot = 0.0;
        for (std::size_t e = 0; e < d; ++e) dot += q[a * c + h * d + e] * k[b * c + h * d + e];
        s[b] = dot / std::sqrt(static_cast<double>(d));
        mx = std::max(mx, s[b]);
      }
      for (double& x : s) z += (x = std::exp(x - mx));
      for (std::size_t e = 0; e < d; ++e) {
        double acc = 0.0;
        for (std::size_t b = 0; b < tokens; ++b) acc += s[b] / z * v[b * c + h * d + e];
        out[a * c + h * d + e] = acc;
      }
    }
  return out;
}

// (T', C_f) fusion -> (N, T, C_P) tokens, nearest frame repeat.
inline Tensor fusion_tokens_oracle(const Tensor& fusion, const Tensor& w, std::size_t n, std::size_t t) {
  const std::size_t t_in = fusion.dim(0), cf = w.dim(0), cp = w.dim(1);
  Tensor out({n, t, cp});
  for (std::size_t b = 0; b < t; ++b) {
    const std::size_t src = b * t_in / t;
    for (std::size_t o = 0; o < cp; ++o) {
      double s = 0.0;
      for (std::size_t i = 0; i < cf; ++i) s += fusion.at({src, i}) * w.at({i, o});
      for (std::size_t a = 0; a < n; ++a) out.at({a, b, o}) = s;
    }
  }
  return out;
}

inline Tensor gdfn_oracle(const Tensor& x, const SdtaParams& p) {
  const Tensor y = ln_oracle(x, p.gdfn_ln);
  Tensor a = dw3_oracle(pw_oracle(y, p.gdfn_w1->value), p.gdfn_d1->value);
  const Tensor b = dw3_oracle(pw_oracle(y, p.gdfn_w2->value), p.gdfn_d2->value);
  for (std::size_t i = 0; i < a.numel(); ++i) a[i] = 0.5 * a[i] * (1.0 + std::erf(a[i] / std::sqrt(2.0))) * b[i];
  return add_oracle(x, pw_oracle(a, p.gdfn_w3->value));
}

inline Tensor joint_mean_oracle(const Tensor& x) {
  const std::size_t n = x.dim(0), t = x.dim(1), c = x.dim(2);
  Tensor out({t, c});
  for (std::size_t b = 0; b < t; ++b)
    for (std::size_t e = 0; e < c; ++e) {
      double s = 0.0;
      for (std::size_t a = 0; a < n; ++a) s += x.at({a, b, e});
      out.at({b, e}) = s / static_cast<double>(n);
    }
  return out;
}

inline Tensor joint_fusion_oracle(const Tensor& x, const Tensor& p_hat, const SdtaParams& p) {
  Tensor mixed(x.shape());
  for (std::size_t a = 0; a < x.dim(0); ++a)
    for (std::size_t b = 0; b < x.dim(1); ++b)
      for (std::size_t e = 0; e < x.dim(2); ++e)
        mixed.at({a, b, e}) = x.at({a, b, e}) + p.phi->value[a] * p_hat.at({b, e});
  return pw_oracle(mixed, p.out_w->value);
}

inline Tensor sdta_oracle(const Tensor& x, const Tensor& fusion, const SdtaParams& p) {
  const Tensor y = ln_oracle(x, p.ln);
  const Tensor q = dw3_oracle(pw_oracle(y, p.q_p->value), p.q_d->value);
  const Tensor k = dw3_oracle(pw_oracle(y, p.k_p->value), p.k_d->value);
  const Tensor v = value_oracle(y, p);
  const Tensor tok = fusion_tokens_oracle(fusion, p.fusion_w->value, x.dim(0), x.dim(1));
  const Tensor att = transposed_oracle(concat_oracle({q, tok}), concat_oracle({k, tok}), concat_oracle({v, tok}),
                                       p.alpha->value, p.config.heads);
  const Tensor h = gdfn_oracle(add_oracle(concat_oracle({x, tok}), att), p);
  const Tensor fused = joint_fusion_oracle(h, joint_mean_oracle(h), p);
  return joint_mean_oracle(fused);
}

// ---- spatial attention ----

inline std::vector<double> ln_row(const double* x, std::size_t c, const Tensor& gamma, const Tensor& beta) {
  double mean = 0.0, var = 0.0;
  for (std::size_t k = 0; k < c; ++k) mean += x[k];
  mean /= static_cast<double>(c);
  for (std::size_t k = 0; k < c; ++k) var += (x[k] - mean) * (x[k] - mean);
  var /= static_cast<double>(c);
  std::vector<double> out(c);
  for (std::size_t k = 0; k < c; ++k) out[k] = (x[k] - mean) / std::sqrt(var + kLayerNormEps) * gamma[k] + beta[k];
  return out;
}

inline std::vector<double> vec_mat(const std::vector<double>& v, const Tensor& w) {
  const std::size_t n = w.dim(0), m = w.dim(1);
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j] += v[i] * w.at({i, j});
  return out;
}

// q, k, v: per joint vectors of width C for one frame. Returns per joint outputs and fills attn (h, J, J).
inline std::vector<std::vector<double>> attention_oracle(const std::vector<std::vector<double>>& q,
                                                  const std::vector<std::vector<double>>& k,
                                                  const std::vector<std::vector<double>>& v, std::size_t heads,
                                                  std::vector<double>* attn = nullptr) {
  const std::size_t j = q.size(), c = q[0].size(), d = c / heads;
  std::vector<std::vector<double>> out(j, std::vector<double>(c, 0.0));
  if (attn) attn->assign(heads * j * j, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t a = 0; a < j; ++a) {
      std::vector<double> s(j);
      double mx = -1e300;
      for (std::size_t b = 0; b < j; ++b) {
        double dot = 0.0;
        for (std::size_t e = 0; e < d; ++e) dot += q[a][h * d + e] * k[b][h * d + e];
        s[b] = dot / std::sqrt(static_cast<double>(d));
        mx = std::max(mx, s[b]);
      }
      double z = 0.0;
      for (double& x : s) z += (x = std::exp(x - mx));
      for (std::size_t b = 0; b < j; ++b) {
        const double w = s[b] / z;
        if (attn) (*attn)[(h * j + a) * j + b] = w;
        for (std::size_t e = 0; e < d; ++e) out[a][h * d + e] += w * v[b][h * d + e];
      }
    }
  }
  return out;
}

inline Tensor ssa_oracle(const Tensor& x, const SpatialAttentionParams& p) {
  const std::size_t jn = x.dim(0), tn = x.dim(1), c = x.dim(2);
  Tensor out(x.shape());
  for (std::size_t t = 0; t < tn; ++t) {
    std::vector<std::vector<double>> q(jn), k(jn), v(jn);
    for (std::size_t j = 0; j < jn; ++j) {
      const auto n = ln_row(x.ptr() + (j * tn + t) * c, c, p.ln.gamma->value, p.ln.beta->value);
      q[j] = vec_mat(n, p.w_q->value);
      k[j] = vec_mat(n, p.w_k->value);
      v[j] = vec_mat(n, p.w_v->value);
    }
    const auto o = attention_oracle(q, k, v, p.heads);
    for (std::size_t j = 0; j < jn; ++j) {
      const auto proj = vec_mat(o[j], p.w_o->value);
      for (std::size_t e = 0; e < c; ++e) out.at({j, t, e}) = x.at({j, t, e}) + proj[e];
    }
  }
  return out;
}

inline Tensor cross_oracle(const Tensor& composed, const CrossAttentionParams& p, std::vector<double>* attn_t0 = nullptr) {
  const std::size_t jn = composed.dim(0), tn = composed.dim(1), c = composed.dim(2);
  Tensor out(composed.shape());
  for (std::size_t t = 0; t < tn; ++t) {
    std::vector<std::vector<double>> q(jn), k(jn), v(jn);
    for (std::size_t j = 0; j < jn; ++j) {
      std::vector<double> row(composed.ptr() + (j * tn + t) * c, composed.ptr() + (j * tn + t + 1) * c);
      q[j] = vec_mat({row[0]}, p.w_q->value);
      k[j] = vec_mat(row, p.w_k->value);
      v[j] = vec_mat(row, p.w_v->value);
    }
    const auto o = attention_oracle(q, k, v, p.heads, t == 0 ? attn_t0 : nullptr);
    for (std::size_t j = 0; j < jn; ++j)
      for (std::size_t e = 0; e < c; ++e) out.at({j, t, e}) = o[j][e];
  }
  return out;
}

// ---- graph convolution ----

// Channel-wise refined topology.
inline Tensor ctr_gc_oracle(const Tensor& x, const Tensor& adj, const Tensor& phi_w, const Tensor& psi_w,
                     const Tensor& alpha, const Tensor& w_out) {
  const std::size_t n = x.dim(0), t = x.dim(1), ci = x.dim(2), co = w_out.dim(1);
  std::vector<double> xbar(n * ci, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < ci; ++k) {
      for (std::size_t s = 0; s < t; ++s) xbar[i * ci + k] += x.at({i, s, k});
      xbar[i * ci + k] /= static_cast<double>(t);
    }
  auto proj = [&](const Tensor& w, std::size_t i, std::size_t c) {
    double v = 0.0;
    for (std::size_t k = 0; k < ci; ++k) v += xbar[i * ci + k] * w.at({k, c});
    return v;
  };
  Tensor out({n, t, co});
  for (std::size_t c = 0; c < co; ++c)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t s = 0; s < t; ++s) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double a = adj.at({i, j}) + alpha[c] * std::tanh(proj(phi_w, i, c) - proj(psi_w, j, c));
          double xw = 0.0;
          for (std::size_t k = 0; k < ci; ++k) xw += x.at({j, s, k}) * w_out.at({k, c});
          acc += a * xw;
        }
        out.at({i, s, c}) = acc;
      }
  return out;
}

}  // namespace stepcat::oracle
