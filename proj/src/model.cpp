#include "stepcat/model.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace stepcat {

namespace sk = skeleton;
using nlohmann::json;

SpatialConfig ModelConfig::spatial() const {
  SpatialConfig s;
  s.channels = channels;
  s.large = large;
  s.small = small;
  s.heads = heads;
  s.ffn_ratio = ffn_ratio;
  return s;
}

SdtaConfig ModelConfig::sdta(std::size_t joints) const {
  SdtaConfig s;
  s.channels = channels;
  s.joints = joints;
  s.heads = heads;
  s.fusion_channels = extractor.out_channels();
  s.fusion_proj = fusion_proj;
  s.value_kernel = value_kernel;
  s.dilation_a = dilation_a;
  s.dilation_b = dilation_b;
  s.gdfn_ratio = gdfn_ratio;
  return s;
}

void ModelConfig::validate() const {
  extractor.validate();
  spatial().validate();
  sdta(1).validate();
  if (classes < 2) throw std::invalid_argument("model: need at least 2 classes, got " + std::to_string(classes));
  if (frames < 2) throw std::invalid_argument("model: frames must be at least 2");
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.frames = 8;
  c.extractor.channels = {3, 4, 4, 8, 8};
  c.extractor.kernel = 3;
  c.channels = 8;
  c.large = 8;
  c.small = 4;
  c.heads = 2;
  c.ffn_ratio = 2;
  c.fusion_proj = 2;
  c.value_kernel = 3;
  return c;
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.frames = 16;
  c.extractor.channels = {3, 16, 16, 32, 32};
  c.channels = 32;
  c.large = 48;
  c.small = 24;
  c.heads = 4;
  c.ffn_ratio = 2;
  c.fusion_proj = 8;
  return c;
}

namespace {

template <class T>
void take(json& obj, const char* key, T& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  out = it->get<T>();
  obj.erase(it);
}

}  // namespace

ModelConfig parse_model_config(const std::string& json_text, const ModelConfig& base) {
  json obj;
  try {
    obj = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  if (!obj.is_object()) throw std::invalid_argument("config: expected a JSON object");
  ModelConfig c = base;
  try {
    take(obj, "frames", c.frames);
    take(obj, "extractor_channels", c.extractor.channels);
    take(obj, "extractor_strides", c.extractor.strides);
    take(obj, "extractor_kernel", c.extractor.kernel);
    take(obj, "channels", c.channels);
    take(obj, "large", c.large);
    take(obj, "small", c.small);
    take(obj, "heads", c.heads);
    take(obj, "ffn_ratio", c.ffn_ratio);
    take(obj, "fusion_proj", c.fusion_proj);
    take(obj, "value_kernel", c.value_kernel);
    take(obj, "dilation_a", c.dilation_a);
    take(obj, "dilation_b", c.dilation_b);
    take(obj, "gdfn_ratio", c.gdfn_ratio);
    take(obj, "classes", c.classes);
    take(obj, "seed", c.seed);
    std::string stream;
    take(obj, "stream", stream);
    if (!stream.empty()) c.stream = sk::parse_stream_kind(stream);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  if (!obj.empty()) throw std::invalid_argument("config: unknown key '" + obj.begin().key() + "'");
  c.validate();
  return c;
}

std::string model_config_to_json(const ModelConfig& c) {
  json obj = {{"frames", c.frames},
              {"extractor_channels", c.extractor.channels},
              {"extractor_strides", c.extractor.strides},
              {"extractor_kernel", c.extractor.kernel},
              {"channels", c.channels},
              {"large", c.large},
              {"small", c.small},
              {"heads", c.heads},
              {"ffn_ratio", c.ffn_ratio},
              {"fusion_proj", c.fusion_proj},
              {"value_kernel", c.value_kernel},
              {"dilation_a", c.dilation_a},
              {"dilation_b", c.dilation_b},
              {"gdfn_ratio", c.gdfn_ratio},
              {"classes", c.classes},
              {"stream", std::string(sk::to_string(c.stream))},
              {"seed", c.seed}};
  return obj.dump(2);
}

Model::Model(const ModelConfig& cfg) : config_(cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const auto& parts = sk::default_partitions();
  const SpatialConfig sp = cfg.spatial();
  const std::size_t c0 = cfg.extractor.out_channels(), c = cfg.channels;
  extractor = make_extractor(store_, "extractor", cfg.extractor, rng);
  embed_ln = make_layer_norm(store_, "embed.ln", c0);
  embed_w = &add_linear(store_, "embed.w", {c0, c}, c0, rng);
  position = &add_normal(store_, "embed.position", {sk::kNumJoints, 1, c}, rng, 0.02);
  sbca_hands = make_sbca(store_, "sbca_hands", sp, rng);
  sbca_feet = make_sbca(store_, "sbca_feet", sp, rng);
  mbca_ud = make_mbca(store_, "mbca_ud", sp, parts.up_down, rng);
  mbca_wa = make_mbca(store_, "mbca_wa", sp, parts.wrist_ankle, rng);
  sdta_a = make_sdta(store_, "sdta_a", cfg.sdta(parts.hands.size() + parts.legs_feet.size()), rng);
  sdta_b = make_sdta(store_, "sdta_b", cfg.sdta(parts.up_down.size() + parts.wrist_ankle.size()), rng);
  mlp = make_ffn(store_, "mlp", c, cfg.ffn_ratio, rng);
  fc_w = &add_linear(store_, "fc.w", {c, cfg.classes}, c, rng);
  fc_b = &add_constant(store_, "fc.b", {cfg.classes}, 0.0);
}

Var embed(Var x_in, const Model& m) {
  Graph& g = x_in.graph();
  const Var y = pointwise_conv(apply_layer_norm(x_in, m.embed_ln), g.param(*m.embed_w));
  return y + broadcast_to(g.param(*m.position), y.shape());
}

namespace {

Var checked(Var x, const char* block) {
  check_finite(x, block);
  return x;
}

}  // namespace

Var stepcat_forward(Var x, const Model& m) {
  const auto& parts = sk::default_partitions();
  if (x.rank() != 3 || x.dim(0) != sk::kNumJoints || x.dim(2) != 3)
    throw DimensionError("stepcat_forward: expected (25, T, 3), got " + shape_str(x.shape()));
  Graph& g = x.graph();
  const ExtractorOutput ex = extract(x, m.extractor);
  checked(ex.x_in, "extractor");
  const Var x1 = checked(embed(ex.x_in, m), "embed");

  const Var xh = checked(sbca_forward(index_select(x1, 0, parts.hands), index_select(x1, 0, parts.other_vs_hands),
                                      m.sbca_hands),
                         "sbca_hands");
  const Var xf = checked(sbca_forward(index_select(x1, 0, parts.legs_feet),
                                      index_select(x1, 0, parts.other_vs_feet), m.sbca_feet),
                         "sbca_feet");

  const Var ta = checked(sdta_forward(concat({xh, xf}, 0), ex.fusion_feats, m.sdta_a), "sdta_a");

  const Var full = reassemble_joints(x1, xh, xf);
  const Var ud = checked(mbca_forward(full, m.mbca_ud), "mbca_ud");
  const Var wa = checked(mbca_forward(full, m.mbca_wa), "mbca_wa");
  const Var tb = checked(sdta_forward(concat({ud, wa}, 0), ex.fusion_feats, m.sdta_b), "sdta_b");

  const Var h = checked(ffn_residual(ta + tb, m.mlp), "mlp");
  const Var pooled = reshape(global_average_pool(h, {0}), {1, m.config().channels});
  const Var logits = reshape(matmul(pooled, g.param(*m.fc_w)), {m.config().classes}) + g.param(*m.fc_b);
  return checked(logits, "classifier");
}

std::size_t argmax(const Tensor& v) {
  if (v.numel() == 0) throw std::invalid_argument("argmax: empty tensor");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.numel(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

ScoreVector make_scores(const Tensor& logits) {
  if (logits.rank() != 1) throw DimensionError("make_scores: logits must be 1-D, got " + shape_str(logits.shape()));
  Tensor p(logits.shape());
  const double mx = logits[argmax(logits)];
  double z = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) z += (p[i] = std::exp(logits[i] - mx));
  for (std::size_t i = 0; i < p.numel(); ++i) p[i] /= z;
  return {logits, std::move(p)};
}

ScoreVector predict(const Model& m, const Tensor& input) {
  Graph g;
  return make_scores(stepcat_forward(g.constant(input), m).value());
}

Var cross_entropy(Var logits, std::size_t label) {
  if (logits.rank() != 1) throw DimensionError("cross_entropy: logits must be 1-D, got " + shape_str(logits.shape()));
  if (label >= logits.dim(0))
    throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " outside " +
                            std::to_string(logits.dim(0)) + " classes");
  return scale(select(log_softmax(logits, 0), label), -1.0);
}

EnsembleResult ensemble_fuse(const std::vector<ScoreVector>& scores, std::vector<double> weights) {
  if (scores.empty()) throw std::invalid_argument("ensemble_fuse: no score vectors");
  if (weights.empty()) weights.assign(scores.size(), 1.0);
  if (weights.size() != scores.size())
    throw std::invalid_argument("ensemble_fuse: " + std::to_string(weights.size()) + " weights for " +
                                std::to_string(scores.size()) + " score vectors");
  const std::size_t k = scores[0].probabilities.numel();
  double total_w = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("ensemble_fuse: weights must be finite and >= 0");
    total_w += w;
  }
  if (total_w <= 0.0) throw std::invalid_argument("ensemble_fuse: weights sum to zero");
  Tensor fused({k});
  for (std::size_t s = 0; s < scores.size(); ++s) {
    if (scores[s].probabilities.numel() != k)
      throw std::invalid_argument("ensemble_fuse: class counts differ (" + std::to_string(k) + " vs " +
                                  std::to_string(scores[s].probabilities.numel()) + ")");
    for (std::size_t i = 0; i < k; ++i) fused[i] += weights[s] * scores[s].probabilities[i];
  }
  double z = 0.0;
  for (std::size_t i = 0; i < k; ++i) z += fused[i];
  Tensor logits({k});
  for (std::size_t i = 0; i < k; ++i) {
    fused[i] /= z;
    logits[i] = std::log(fused[i]);
  }
  EnsembleResult r;
  r.prediction = argmax(fused);
  r.fused = {std::move(logits), std::move(fused)};
  return r;
}

}  // namespace stepcat
