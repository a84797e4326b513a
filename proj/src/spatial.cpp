#include "stepcat/spatial.hpp"

#include <algorithm>
#include <cmath>

#include "stepcat/skeleton.hpp"

namespace stepcat {

namespace {

// (J, T, C) -> (T*h, J, C/h)
Var split_heads(Var x, std::size_t heads) {
  const std::size_t j = x.dim(0), t = x.dim(1), c = x.dim(2), d = c / heads;
  return reshape(permute(reshape(x, {j, t, heads, d}), {1, 2, 0, 3}), {t * heads, j, d});
}

// (T*h, J, d) -> (J, T, h*d)
Var merge_heads(Var x, std::size_t t, std::size_t heads) {
  const std::size_t j = x.dim(1), d = x.dim(2);
  return reshape(permute(reshape(x, {t, heads, j, d}), {2, 0, 1, 3}), {j, t, heads * d});
}

Var attend(Var q, Var k, Var v, std::size_t heads, Tensor* attn) {
  const std::size_t j = q.dim(0), t = q.dim(1), d = q.dim(2) / heads;
  const Var scores = scale(matmul(split_heads(q, heads), transpose_last(split_heads(k, heads))),
                           1.0 / std::sqrt(static_cast<double>(d)));
  const Var a = softmax(scores, -1);
  if (attn) *attn = a.value().reshaped({t, heads, j, j});
  return merge_heads(matmul(a, split_heads(v, heads)), t, heads);
}

Var gated(Var x, Var gate) { return gate.valid() ? x * broadcast_to(gate, x.shape()) : x; }

// Joint mean repeated on `rows` rows.
Var joint_mean_rows(Var x, std::size_t rows) {
  const std::size_t t = x.dim(1), c = x.dim(2);
  return broadcast_to(reshape(global_average_pool(x, {0}), {1, t, c}), {rows, t, c});
}

Var mean_rows(Var x, const std::vector<std::size_t>& rows) {
  const std::size_t t = x.dim(1), c = x.dim(2);
  return reshape(global_average_pool(index_select(x, 0, rows), {0}), {1, t, c});
}

Var branch_features(Var x, const BranchParams& b, Tensor* attn, const AttentionGates& gates = {}) {
  Graph& g = x.graph();
  const Var lifted = pointwise_conv(x, g.param(*b.lift));
  return pointwise_conv(spatial_self_attention(lifted, b.attention, attn, gates), g.param(*b.align));
}

BranchParams make_branch(ParamStore& store, const std::string& prefix, const SpatialConfig& cfg, std::size_t width,
                         bool with_gate, std::mt19937_64& rng) {
  BranchParams b;
  b.width = width;
  b.lift = &add_linear(store, prefix + ".lift", {cfg.channels, width}, cfg.channels, rng);
  b.attention = make_spatial_attention(store, prefix + ".attn", width, cfg.heads, rng);
  b.align = &add_linear(store, prefix + ".align", {width, cfg.channels}, width, rng);
  b.cross = make_cross_attention(store, prefix + ".cross", cfg.channels, cfg.heads, rng);
  if (with_gate) b.gate = &add_linear(store, prefix + ".gate", {cfg.channels, width}, cfg.channels, rng);
  return b;
}

void check_features(Var x, std::size_t channels, const char* who) {
  if (x.rank() != 3 || x.dim(2) != channels)
    throw DimensionError(std::string(who) + ": expected (J, T, " + std::to_string(channels) + "), got " +
                         shape_str(x.shape()));
}

}  // namespace

void SpatialConfig::validate() const {
  if (heads == 0) throw std::invalid_argument("spatial: heads must be positive");
  if (channels < 2 || channels % 2 != 0) throw std::invalid_argument("spatial: C must be even and >= 2");
  if (channels % heads != 0 || large % heads != 0 || small % heads != 0 || large == 0 || small == 0)
    throw std::invalid_argument("spatial: C, C_L, C_S must be positive multiples of heads (" +
                                std::to_string(heads) + ")");
  if (ffn_ratio == 0) throw std::invalid_argument("spatial: ffn ratio must be >= 1");
}

SpatialAttentionParams make_spatial_attention(ParamStore& store, const std::string& prefix, std::size_t width,
                                              std::size_t heads, std::mt19937_64& rng) {
  if (heads == 0 || width % heads != 0)
    throw std::invalid_argument("spatial attention: width " + std::to_string(width) + " not divisible by " +
                                std::to_string(heads) + " heads");
  SpatialAttentionParams p;
  p.width = width;
  p.heads = heads;
  p.ln = make_layer_norm(store, prefix + ".ln", width);
  p.w_q = &add_linear(store, prefix + ".w_q", {width, width}, width, rng);
  p.w_k = &add_linear(store, prefix + ".w_k", {width, width}, width, rng);
  p.w_v = &add_linear(store, prefix + ".w_v", {width, width}, width, rng);
  p.w_o = &add_constant(store, prefix + ".w_o", {width, width}, 0.0);
  return p;
}

Var spatial_self_attention(Var x, const SpatialAttentionParams& p, Tensor* attn, const AttentionGates& gates) {
  check_features(x, p.width, "spatial_self_attention");
  Graph& g = x.graph();
  const Var n = apply_layer_norm(x, p.ln);
  const Var q = gated(pointwise_conv(n, g.param(*p.w_q)), gates.q);
  const Var k = gated(pointwise_conv(n, g.param(*p.w_k)), gates.k);
  const Var v = gated(pointwise_conv(n, g.param(*p.w_v)), gates.v);
  return x + pointwise_conv(attend(q, k, v, p.heads, attn), g.param(*p.w_o));
}

CrossAttentionParams make_cross_attention(ParamStore& store, const std::string& prefix, std::size_t channels,
                                          std::size_t heads, std::mt19937_64& rng) {
  if (channels < 2) throw std::invalid_argument("cross attention: channel count must be >= 2");
  if (heads == 0 || channels % heads != 0)
    throw std::invalid_argument("cross attention: C not divisible by heads");
  CrossAttentionParams p;
  p.channels = channels;
  p.heads = heads;
  p.f = &add_constant(store, prefix + ".f", {1, 1}, 1.0);
  // averaging back-projection: g(f(x) broadcast) == x at init
  p.g = &add_constant(store, prefix + ".g", {channels, 1}, 1.0 / static_cast<double>(channels));
  p.ln = make_layer_norm(store, prefix + ".ln", channels);
  p.w_q = &add_linear(store, prefix + ".w_q", {1, channels}, 1, rng);
  p.w_k = &add_linear(store, prefix + ".w_k", {channels, channels}, channels, rng);
  p.w_v = &add_linear(store, prefix + ".w_v", {channels, channels}, channels, rng);
  return p;
}

Var cls_compose(Var x_part, Var x_other, const CrossAttentionParams& p, RowAlign align) {
  const std::size_t c = p.channels;
  if (c < 2) throw std::invalid_argument("cls_compose: channel count must be >= 2");
  check_features(x_part, c, "cls_compose");
  check_features(x_other, c, "cls_compose");
  if (x_part.dim(1) != x_other.dim(1))
    throw DimensionError("cls_compose: frame counts differ, " + shape_str(x_part.shape()) + " vs " +
                         shape_str(x_other.shape()));
  const std::size_t rows = x_part.dim(0);
  const Var cls = pointwise_conv(slice(x_part, -1, 0, 1), x_part.graph().param(*p.f));
  Var rest = slice(x_other, -1, 1, c - 1);
  if (align == RowAlign::JointMean) {
    rest = joint_mean_rows(rest, rows);
  } else if (x_other.dim(0) != rows) {
    throw DimensionError("cls_compose: row-wise alignment needs equal joint counts, " + shape_str(x_part.shape()) +
                         " vs " + shape_str(x_other.shape()));
  }
  return concat({cls, rest}, -1);
}

Var cross_attention(Var composed, const CrossAttentionParams& p, Tensor* attn) {
  check_features(composed, p.channels, "cross_attention");
  Graph& g = composed.graph();
  const Var q = pointwise_conv(slice(composed, -1, 0, 1), g.param(*p.w_q));
  const Var k = pointwise_conv(composed, g.param(*p.w_k));
  const Var v = pointwise_conv(composed, g.param(*p.w_v));
  return attend(q, k, v, p.heads, attn);
}

Var mca_residual(Var x, Var composed, const CrossAttentionParams& p, Tensor* attn) {
  check_features(x, p.channels, "mca_residual");
  Graph& g = x.graph();
  const std::size_t c = p.channels;
  const Var fx = pointwise_conv(slice(x, -1, 0, 1), g.param(*p.f));
  const Var mca = cross_attention(apply_layer_norm(composed, p.ln), p, attn);
  const Var y_cls = broadcast_to(fx, mca.shape()) + mca;
  return concat({pointwise_conv(y_cls, g.param(*p.g)), slice(x, -1, 1, c - 1)}, -1);
}

FfnParams make_ffn(ParamStore& store, const std::string& prefix, std::size_t channels, std::size_t ratio,
                   std::mt19937_64& rng) {
  FfnParams p;
  p.ln = make_layer_norm(store, prefix + ".ln", channels);
  p.w1 = &add_linear(store, prefix + ".w1", {channels, ratio * channels}, channels, rng);
  p.w2 = &add_constant(store, prefix + ".w2", {ratio * channels, channels}, 0.0);
  return p;
}

Var ffn_residual(Var x, const FfnParams& p) {
  Graph& g = x.graph();
  return x + pointwise_conv(gelu(pointwise_conv(apply_layer_norm(x, p.ln), g.param(*p.w1))), g.param(*p.w2));
}

SbcaParams make_sbca(ParamStore& store, const std::string& prefix, const SpatialConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  SbcaParams p;
  p.config = cfg;
  p.large = make_branch(store, prefix + ".large", cfg, cfg.large, false, rng);
  p.small = make_branch(store, prefix + ".small", cfg, cfg.small, false, rng);
  p.f_l = &add_linear(store, prefix + ".f_l", {cfg.channels, cfg.channels / 2}, cfg.channels, rng);
  p.f_s = &add_linear(store, prefix + ".f_s", {cfg.channels, cfg.channels / 2}, cfg.channels, rng);
  p.ffn = make_ffn(store, prefix + ".ffn", cfg.channels, cfg.ffn_ratio, rng);
  return p;
}

Var sbca_forward(Var x_part, Var x_other, const SbcaParams& p, SpatialProbe* probe) {
  const std::size_t c = p.config.channels;
  check_features(x_part, c, "sbca_forward");
  check_features(x_other, c, "sbca_forward");
  Graph& g = x_part.graph();
  const Var a_l = branch_features(x_part, p.large, probe ? &probe->self_large : nullptr);
  const Var a_s = branch_features(x_other, p.small, probe ? &probe->self_small : nullptr);
  const Var y_l = mca_residual(a_l, cls_compose(a_l, a_s, p.large.cross, RowAlign::JointMean), p.large.cross,
                               probe ? &probe->cross_large : nullptr);
  const Var y_s = mca_residual(a_s, cls_compose(a_s, a_l, p.small.cross, RowAlign::JointMean), p.small.cross,
                               probe ? &probe->cross_small : nullptr);
  const Var z = concat({pointwise_conv(y_l, g.param(*p.f_l)),
                        joint_mean_rows(pointwise_conv(y_s, g.param(*p.f_s)), x_part.dim(0))},
                       -1);
  return ffn_residual(z, p.ffn);
}

MbcaParams make_mbca(ParamStore& store, const std::string& prefix, const SpatialConfig& cfg,
                     const std::vector<std::size_t>& part, std::mt19937_64& rng) {
  cfg.validate();
  const auto& parts = skeleton::default_partitions();
  MbcaParams p;
  p.part = part;
  for (std::size_t i = 0; i < part.size(); ++i) {
    if (part[i] >= skeleton::kNumJoints) throw std::out_of_range("mbca: joint index out of range");
    const bool up = std::find(parts.upper.begin(), parts.upper.end(), part[i]) != parts.upper.end();
    (up ? p.up_rows : p.down_rows).push_back(i);
  }
  if (p.up_rows.empty() || p.down_rows.empty())
    throw std::invalid_argument("mbca: part must contain both upper and lower joints");
  p.blocks.config = cfg;
  p.blocks.large = make_branch(store, prefix + ".large", cfg, cfg.large, true, rng);
  p.blocks.small = make_branch(store, prefix + ".small", cfg, cfg.small, true, rng);
  p.blocks.f_l = &add_linear(store, prefix + ".f_l", {cfg.channels, cfg.channels / 2}, cfg.channels, rng);
  p.blocks.f_s = &add_linear(store, prefix + ".f_s", {cfg.channels, cfg.channels / 2}, cfg.channels, rng);
  p.blocks.ffn = make_ffn(store, prefix + ".ffn", cfg.channels, cfg.ffn_ratio, rng);
  return p;
}

Var mbca_forward(Var x_full, const MbcaParams& p, SpatialProbe* probe) {
  const SbcaParams& b = p.blocks;
  check_features(x_full, b.config.channels, "mbca_forward");
  if (x_full.dim(0) != skeleton::kNumJoints)
    throw DimensionError("mbca_forward: expected the full joint set, got " + shape_str(x_full.shape()));
  Graph& g = x_full.graph();
  const Var xp = index_select(x_full, 0, p.part);
  const Var up = mean_rows(xp, p.up_rows);
  const Var down = mean_rows(xp, p.down_rows);

  const Var gu_l = sigmoid(pointwise_conv(up, g.param(*b.large.gate)));
  const Var gd_l = sigmoid(pointwise_conv(down, g.param(*b.large.gate)));
  const Var a_l = branch_features(xp, b.large, probe ? &probe->self_large : nullptr, {gu_l, gd_l, gu_l});

  const Var gu_s = sigmoid(pointwise_conv(up, g.param(*b.small.gate)));
  const Var gd_s = sigmoid(pointwise_conv(down, g.param(*b.small.gate)));
  const Var a_s = branch_features(xp, b.small, probe ? &probe->self_small : nullptr, {gd_s, gu_s, gd_s});

  const Var y_l = mca_residual(a_l, cls_compose(a_l, a_s, b.large.cross, RowAlign::RowWise), b.large.cross,
                               probe ? &probe->cross_large : nullptr);
  const Var y_s = mca_residual(a_s, cls_compose(a_s, a_l, b.small.cross, RowAlign::RowWise), b.small.cross,
                               probe ? &probe->cross_small : nullptr);
  const Var z = concat({pointwise_conv(y_l, g.param(*b.f_l)), pointwise_conv(y_s, g.param(*b.f_s))}, -1);
  return ffn_residual(z, b.ffn);
}

Var reassemble_joints(Var x1, Var x_hands, Var x_feet) {
  const auto& parts = skeleton::default_partitions();
  const std::size_t n = skeleton::kNumJoints;
  if (x1.dim(0) != n || x_hands.dim(0) != parts.hands.size() || x_feet.dim(0) != parts.legs_feet.size())
    throw DimensionError("reassemble_joints: row counts " + shape_str(x1.shape()) + ", " +
                         shape_str(x_hands.shape()) + ", " + shape_str(x_feet.shape()));
  std::vector<std::size_t> index(n);
  for (std::size_t j = 0; j < n; ++j) index[j] = j;
  for (std::size_t k = 0; k < parts.hands.size(); ++k) index[parts.hands[k]] = n + k;
  for (std::size_t k = 0; k < parts.legs_feet.size(); ++k) index[parts.legs_feet[k]] = n + parts.hands.size() + k;
  return index_select(concat({x1, x_hands, x_feet}, 0), 0, index);
}

}  // namespace stepcat
