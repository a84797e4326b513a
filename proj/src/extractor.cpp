#include "stepcat/extractor.hpp"

#include <cmath>

#include "stepcat/skeleton.hpp"

namespace stepcat {

using skeleton::kNumJoints;

Tensor tree_adjacency_with_self_loops() {
  Tensor a({kNumJoints, kNumJoints});
  for (std::size_t i = 0; i < kNumJoints; ++i) a.at({i, i}) = 1.0;
  for (auto [c, p] : skeleton::tree_edges()) {
    a.at({c, p}) = 1.0;
    a.at({p, c}) = 1.0;
  }
  return a;
}

Tensor build_adjacency() {
  Tensor a = tree_adjacency_with_self_loops();
  std::vector<double> inv_sqrt_deg(kNumJoints);
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < kNumJoints; ++j) d += a.at({i, j});
    inv_sqrt_deg[i] = 1.0 / std::sqrt(d);
  }
  for (std::size_t i = 0; i < kNumJoints; ++i)
    for (std::size_t j = 0; j < kNumJoints; ++j) a.at({i, j}) *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
  return a;
}

CtrGcParams make_ctr_gc(ParamStore& store, const std::string& prefix, std::size_t c_in, std::size_t c_out,
                        std::mt19937_64& rng) {
  CtrGcParams p;
  p.c_in = c_in;
  p.c_out = c_out;
  p.phi = &add_linear(store, prefix + ".phi", {c_in, c_out}, c_in, rng);
  p.psi = &add_linear(store, prefix + ".psi", {c_in, c_out}, c_in, rng);
  p.alpha = &add_constant(store, prefix + ".alpha", {c_out}, 0.1);
  p.w_out = &add_linear(store, prefix + ".w_out", {c_in, c_out}, c_in, rng);
  return p;
}

Var ctr_gc_forward(Var x, const Tensor& adj, const CtrGcParams& p) {
  if (x.rank() != 3 || x.dim(2) != p.c_in)
    throw DimensionError("ctr_gc_forward: expected (N, T, " + std::to_string(p.c_in) + "), got " +
                         shape_str(x.shape()));
  const std::size_t n = x.dim(0), c = p.c_out;
  if (adj.shape() != Shape{n, n})
    throw DimensionError("ctr_gc_forward: adjacency " + shape_str(adj.shape()) + " does not match " +
                         std::to_string(n) + " joints");
  Graph& g = x.graph();

  const Var xbar = global_average_pool(x, {1});  // (N, c_in)
  const Var phi = transpose_last(matmul(xbar, g.param(*p.phi)));  // (c, N)
  const Var psi = transpose_last(matmul(xbar, g.param(*p.psi)));
  const Shape cube{c, n, n};
  const Var diff = broadcast_to(reshape(phi, {c, n, 1}), cube) - broadcast_to(reshape(psi, {c, 1, n}), cube);
  const Var refine = broadcast_to(reshape(g.param(*p.alpha), {c, 1, 1}), cube) * tanh(diff);
  const Var topo = broadcast_to(g.constant(adj.reshaped({1, n, n})), cube) + refine;  // (c, N, N)

  const Var v = permute(pointwise_conv(x, g.param(*p.w_out)), {2, 0, 1});  // (c, N, T)
  return permute(matmul(topo, v), {1, 2, 0});                                // (N, T, c)
}

TemporalBlockParams make_temporal_block(ParamStore& store, const std::string& prefix, std::size_t channels,
                                        std::size_t kernel, std::size_t stride, std::mt19937_64& rng) {
  TemporalBlockParams p;
  p.stride = stride;
  p.w = &add_linear(store, prefix + ".w", {kernel, channels, channels}, kernel * channels, rng);
  return p;
}

Tensor identity_temporal_kernel(std::size_t kernel, std::size_t channels) {
  Tensor w({kernel, channels, channels});
  for (std::size_t c = 0; c < channels; ++c) w.at({kernel / 2, c, c}) = 1.0;
  return w;
}

Var temporal_conv_block(Var x, const TemporalBlockParams& p) {
  ConvOptions opt;
  opt.stride = p.stride;
  const Var y = conv_temporal(x, x.graph().param(*p.w), opt);
  return p.stride == 1 ? y + x : y;
}

std::size_t ExtractorConfig::total_stride() const {
  std::size_t s = 1;
  for (std::size_t v : strides) s *= v;
  return s;
}

void ExtractorConfig::validate() const {
  if (strides.empty() || channels.size() != strides.size() + 1)
    throw std::invalid_argument("extractor: need one more channel width than layers");
  for (std::size_t c : channels)
    if (c == 0) throw std::invalid_argument("extractor: channel widths must be positive");
  for (std::size_t s : strides)
    if (s == 0) throw std::invalid_argument("extractor: strides must be positive");
  if (kernel == 0 || kernel % 2 == 0) throw std::invalid_argument("extractor: kernel must be odd");
}

ExtractorParams make_extractor(ParamStore& store, const std::string& prefix, const ExtractorConfig& cfg,
                               std::mt19937_64& rng) {
  cfg.validate();
  ExtractorParams p;
  p.config = cfg;
  p.adjacency = build_adjacency();
  for (std::size_t l = 0; l < cfg.strides.size(); ++l) {
    const std::string name = prefix + ".layer" + std::to_string(l);
    p.gcn.push_back(make_ctr_gc(store, name + ".gcn", cfg.channels[l], cfg.channels[l + 1], rng));
    p.tcn.push_back(make_temporal_block(store, name + ".tcn", cfg.channels[l + 1], cfg.kernel, cfg.strides[l], rng));
  }
  return p;
}

ExtractorOutput extract(Var x, const ExtractorParams& p) {
  if (x.rank() != 3 || x.dim(0) != kNumJoints || x.dim(2) != p.config.channels.front())
    throw DimensionError("extract: expected (25, T, " + std::to_string(p.config.channels.front()) + "), got " +
                         shape_str(x.shape()));
  Var h = x;
  for (std::size_t l = 0; l < p.gcn.size(); ++l)
    h = temporal_conv_block(gelu(ctr_gc_forward(h, p.adjacency, p.gcn[l])), p.tcn[l]);
  return {h, global_average_pool(h, {0})};
}

}  // namespace stepcat
