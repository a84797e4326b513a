#include "stepcat/temporal.hpp"

#include <cmath>

namespace stepcat {

namespace {

Var depthwise3(Var x, Parameter* w) {
  ConvOptions opt;
  opt.depthwise = true;
  return conv_temporal(x, x.graph().param(*w), opt);
}

// (N, T, C) -> (h, N*T, C/h)
Var heads_first(Var x, std::size_t heads) {
  const std::size_t n = x.dim(0), t = x.dim(1), c = x.dim(2);
  return permute(reshape(x, {n * t, heads, c / heads}), {1, 0, 2});
}

// (h, N*T, d) -> (N, T, h*d)
Var heads_last(Var x, std::size_t n, std::size_t t) {
  const std::size_t h = x.dim(0), d = x.dim(2);
  return reshape(permute(x, {1, 0, 2}), {n, t, h * d});
}

void check_tokens(Var q, Var k, Var v, std::size_t heads, const char* who) {
  if (q.rank() != 3 || q.shape() != k.shape() || q.shape() != v.shape())
    throw DimensionError(std::string(who) + ": q, k, v must share an (N, T, C) shape, got " + shape_str(q.shape()) +
                         ", " + shape_str(k.shape()) + ", " + shape_str(v.shape()));
  if (heads == 0 || q.dim(2) % heads != 0)
    throw DimensionError(std::string(who) + ": " + std::to_string(q.dim(2)) + " channels not divisible by " +
                         std::to_string(heads) + " heads");
}

}  // namespace

void SdtaConfig::validate() const {
  if (channels == 0 || channels % 4 != 0)
    throw std::invalid_argument("sdta: C must be a positive multiple of 4, got " + std::to_string(channels));
  if (heads == 0 || fused_channels() % heads != 0)
    throw std::invalid_argument("sdta: C + C_P = " + std::to_string(fused_channels()) + " not divisible by " +
                                std::to_string(heads) + " heads");
  if (joints == 0 || fusion_channels == 0) throw std::invalid_argument("sdta: joints and C_f must be positive");
  if (value_kernel % 2 == 0) throw std::invalid_argument("sdta: value kernel must be odd");
  if (dilation_a == 0 || dilation_b == 0 || gdfn_ratio == 0)
    throw std::invalid_argument("sdta: dilations and gdfn ratio must be positive");
  if (alpha_init && !(*alpha_init > 0.0)) throw std::invalid_argument("sdta: alpha must be positive");
}

SdtaParams make_sdta(ParamStore& store, const std::string& prefix, const SdtaConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const std::size_t c = cfg.channels, q = c / 4, ch = cfg.fused_channels(), hidden = cfg.gdfn_ratio * ch;
  SdtaParams p;
  p.config = cfg;
  p.ln = make_layer_norm(store, prefix + ".ln", c);
  p.q_p = &add_linear(store, prefix + ".q_p", {c, c}, c, rng);
  p.q_d = &add_linear(store, prefix + ".q_d", {3, c}, 3, rng);
  p.k_p = &add_linear(store, prefix + ".k_p", {c, c}, c, rng);
  p.k_d = &add_linear(store, prefix + ".k_d", {3, c}, 3, rng);
  for (int b = 0; b < 4; ++b) p.v_p[b] = &add_linear(store, prefix + ".v_p" + std::to_string(b), {c, q}, c, rng);
  p.v_tcn_a = &add_linear(store, prefix + ".v_tcn_a", {cfg.value_kernel, q, q}, cfg.value_kernel * q, rng);
  p.v_tcn_b = &add_linear(store, prefix + ".v_tcn_b", {cfg.value_kernel, q, q}, cfg.value_kernel * q, rng);
  p.fusion_w = &add_linear(store, prefix + ".fusion_w", {cfg.fusion_channels, cfg.fusion_proj}, cfg.fusion_channels,
                           rng);
  const double alpha = cfg.alpha_init.value_or(std::sqrt(static_cast<double>(ch / cfg.heads)));
  p.alpha = &add_constant(store, prefix + ".alpha", {cfg.heads}, alpha);
  p.gdfn_ln = make_layer_norm(store, prefix + ".gdfn.ln", ch);
  p.gdfn_w1 = &add_linear(store, prefix + ".gdfn.w1", {ch, hidden}, ch, rng);
  p.gdfn_d1 = &add_linear(store, prefix + ".gdfn.d1", {3, hidden}, 3, rng);
  p.gdfn_w2 = &add_linear(store, prefix + ".gdfn.w2", {ch, hidden}, ch, rng);
  p.gdfn_d2 = &add_linear(store, prefix + ".gdfn.d2", {3, hidden}, 3, rng);
  p.gdfn_w3 = &add_linear(store, prefix + ".gdfn.w3", {hidden, ch}, hidden, rng);
  p.phi = &add_constant(store, prefix + ".phi", {cfg.joints}, 0.0);
  p.out_w = &add_linear(store, prefix + ".out_w", {ch, c}, ch, rng);
  return p;
}

QK project_qk(Var y, const SdtaParams& p) {
  Graph& g = y.graph();
  return {depthwise3(pointwise_conv(y, g.param(*p.q_p)), p.q_d), depthwise3(pointwise_conv(y, g.param(*p.k_p)), p.k_d)};
}

Var value_multibranch(Var y, const SdtaParams& p) {
  const SdtaConfig& cfg = p.config;
  if (y.rank() != 3 || y.dim(2) != cfg.channels)
    throw DimensionError("value_multibranch: expected (N, T, " + std::to_string(cfg.channels) + "), got " +
                         shape_str(y.shape()));
  Graph& g = y.graph();
  ConvOptions a, b;
  a.dilation = cfg.dilation_a;
  b.dilation = cfg.dilation_b;
  const Var b1 = conv_temporal(pointwise_conv(y, g.param(*p.v_p[0])), g.param(*p.v_tcn_a), a);
  const Var b2 = conv_temporal(pointwise_conv(y, g.param(*p.v_p[1])), g.param(*p.v_tcn_b), b);
  const Var b3 = max_pool_temporal(pointwise_conv(y, g.param(*p.v_p[2])), 3, 1);
  const Var b4 = pointwise_conv(y, g.param(*p.v_p[3]));
  return concat({b1, b2, b3, b4}, -1) + y;
}

FusedTokens fuse_temporal_tokens(Var q, Var k, Var v, Var fusion, const SdtaParams& p) {
  const SdtaConfig& cfg = p.config;
  if (fusion.rank() != 2 || fusion.dim(1) != cfg.fusion_channels)
    throw DimensionError("fuse_temporal_tokens: fusion must be (T', " + std::to_string(cfg.fusion_channels) +
                         "), got " + shape_str(fusion.shape()));
  const std::size_t n = q.dim(0), t = q.dim(1), t_in = fusion.dim(0);
  std::vector<std::size_t> frames(t);
  for (std::size_t i = 0; i < t; ++i) frames[i] = i * t_in / t;
  const Var tokens = index_select(pointwise_conv(fusion, q.graph().param(*p.fusion_w)), 0, frames);  // (T, C_P)
  if (tokens.dim(0) != t) throw DimensionError("fuse_temporal_tokens: resampled length mismatch");
  const Var pb = broadcast_to(reshape(tokens, {1, t, cfg.fusion_proj}), {n, t, cfg.fusion_proj});
  return {concat({q, pb}, -1), concat({k, pb}, -1), concat({v, pb}, -1), pb};
}

Var transposed_attention(Var q, Var k, Var v, Var alpha, std::size_t heads, Tensor* attn, AttentionCounter* counter) {
  check_tokens(q, k, v, heads, "transposed_attention");
  if (alpha.rank() != 1 || alpha.dim(0) != heads)
    throw DimensionError("transposed_attention: alpha has " + shape_str(alpha.shape()) + " entries for " +
                         std::to_string(heads) + " heads");
  const std::size_t n = q.dim(0), t = q.dim(1), d = q.dim(2) / heads;
  const Var scores = matmul(transpose_last(heads_first(k, heads)), heads_first(q, heads));  // (h, d, d)
  const Var temp = broadcast_to(reshape(abs(alpha), {heads, 1, 1}), scores.shape());
  const Var a = softmax(div(scores, temp), -2);
  if (attn) *attn = a.value();
  if (counter) {
    counter->maps += heads;
    counter->map_entries += heads * d * d;
  }
  return heads_last(matmul(heads_first(v, heads), a), n, t);
}

Var token_attention(Var q, Var k, Var v, std::size_t heads, Tensor* attn, AttentionCounter* counter) {
  check_tokens(q, k, v, heads, "token_attention");
  const std::size_t n = q.dim(0), t = q.dim(1), d = q.dim(2) / heads;
  const Var scores = scale(matmul(heads_first(q, heads), transpose_last(heads_first(k, heads))),
                           1.0 / std::sqrt(static_cast<double>(d)));  // (h, NT, NT)
  const Var a = softmax(scores, -1);
  if (attn) *attn = a.value();
  if (counter) {
    counter->maps += heads;
    counter->map_entries += heads * n * t * n * t;
  }
  return heads_last(matmul(a, heads_first(v, heads)), n, t);
}

Var gdfn_forward(Var x, const SdtaParams& p) {
  Graph& g = x.graph();
  const Var y = apply_layer_norm(x, p.gdfn_ln);
  const Var a = depthwise3(pointwise_conv(y, g.param(*p.gdfn_w1)), p.gdfn_d1);
  const Var b = depthwise3(pointwise_conv(y, g.param(*p.gdfn_w2)), p.gdfn_d2);
  return x + pointwise_conv(gelu(a) * b, g.param(*p.gdfn_w3));
}

Var joint_level_fusion(Var x, Var p_hat, const SdtaParams& p) {
  const std::size_t v = x.dim(0), t = x.dim(1), c = x.dim(2);
  if (p.phi->value.numel() != v)
    throw DimensionError("joint_level_fusion: phi has " + std::to_string(p.phi->value.numel()) + " entries for " +
                         std::to_string(v) + " joints");
  if (p_hat.shape() != Shape{t, c})
    throw DimensionError("joint_level_fusion: p_hat " + shape_str(p_hat.shape()) + " does not match " +
                         shape_str(x.shape()));
  Graph& g = x.graph();
  const Shape full{v, t, c};
  const Var weighted = broadcast_to(reshape(g.param(*p.phi), {v, 1, 1}), full) *
                       broadcast_to(reshape(p_hat, {1, t, c}), full);
  return pointwise_conv(x + weighted, g.param(*p.out_w));
}

Var sdta_forward(Var x, Var fusion, const SdtaParams& p, SdtaProbe* probe) {
  const SdtaConfig& cfg = p.config;
  if (x.rank() != 3 || x.dim(2) != cfg.channels || x.dim(0) != cfg.joints)
    throw DimensionError("sdta_forward: expected (" + std::to_string(cfg.joints) + ", T, " +
                         std::to_string(cfg.channels) + "), got " + shape_str(x.shape()));
  Graph& g = x.graph();
  const Var y = apply_layer_norm(x, p.ln);
  const QK qk = project_qk(y, p);
  const FusedTokens f = fuse_temporal_tokens(qk.q, qk.k, value_multibranch(y, p), fusion, p);
  const Var att = transposed_attention(f.q, f.k, f.v, g.param(*p.alpha), cfg.heads,
                                       probe ? &probe->attention : nullptr, probe ? &probe->counter : nullptr);
  const Var h = gdfn_forward(concat({x, f.p}, -1) + att, p);
  return global_average_pool(joint_level_fusion(h, global_average_pool(h, {0}), p), {0});
}

}  // namespace stepcat
