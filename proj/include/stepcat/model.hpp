#pragma once

// Full classifier: extractor -> embed -> SBCA(hands), SBCA(legs/feet)
//   branch A: SDTA over the two SBCA outputs
//   branch B: MBCA(up/down), MBCA(wrist/ankle) -> SDTA
// then A + B -> MLP -> mean over frames -> linear classifier.

#include <cstdint>
#include <string>
#include <vector>

#include "stepcat/extractor.hpp"
#include "stepcat/skeleton.hpp"
#include "stepcat/spatial.hpp"
#include "stepcat/temporal.hpp"

namespace stepcat {

struct ModelConfig {
  std::size_t frames = 64;   // length of generated sequences; the model itself accepts any T
  ExtractorConfig extractor;  // output width is C0
  std::size_t channels = 64;  // C1 == C, shared by every attention block
  std::size_t large = 96;     // C_L
  std::size_t small = 48;     // C_S
  std::size_t heads = 8;
  std::size_t ffn_ratio = 4;  // r, also the MLP ratio
  std::size_t fusion_proj = 16;
  std::size_t value_kernel = 7;
  std::size_t dilation_a = 1;
  std::size_t dilation_b = 2;
  std::size_t gdfn_ratio = 2;
  std::size_t classes = skeleton::kSynthClasses;
  skeleton::StreamKind stream = skeleton::StreamKind::Joint;
  std::uint64_t seed = 42;

  SpatialConfig spatial() const;
  SdtaConfig sdta(std::size_t joints) const;
  void validate() const;

  /// T = 8, C = 8, h = 2: small enough for whole-model finite differences.
  static ModelConfig toy();
  /// Desk-scale training config used for the synthetic corpus.
  static ModelConfig desk();
};

/// Parses a JSON object of ModelConfig fields on top of `base`; unknown keys are errors.
ModelConfig parse_model_config(const std::string& json_text, const ModelConfig& base = {});
std::string model_config_to_json(const ModelConfig& cfg);

class Model {
 public:
  explicit Model(const ModelConfig& cfg);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  ExtractorParams extractor;
  LayerNormParams embed_ln;      // on the extractor output, whose RMS is ~0.1 at init
  Parameter* embed_w = nullptr;  // (C0, C)
  Parameter* position = nullptr;  // (25, 1, C)
  SbcaParams sbca_hands, sbca_feet;
  MbcaParams mbca_ud, mbca_wa;
  SdtaParams sdta_a, sdta_b;
  FfnParams mlp;
  Parameter* fc_w = nullptr;  // (C, classes)
  Parameter* fc_b = nullptr;  // (classes)

 private:
  ModelConfig config_;
  ParamStore store_;
};

/// LayerNorm, linear channel map C0 -> C, plus a learned per-joint position embedding.
Var embed(Var x_in, const Model& m);

/// x (25, T, 3) -> logits (classes). Throws NumericError naming the first block
/// whose output is not finite.
Var stepcat_forward(Var x, const Model& m);

struct ScoreVector {
  Tensor logits;
  Tensor probabilities;
};

ScoreVector make_scores(const Tensor& logits);
ScoreVector predict(const Model& m, const Tensor& input);
std::size_t argmax(const Tensor& v);

/// -log softmax(logits)[label], computed in log space.
Var cross_entropy(Var logits, std::size_t label);

struct EnsembleResult {
  ScoreVector fused;  // logits holds the log of the fused probabilities
  std::size_t prediction = 0;
};

/// Weighted sum of probability vectors, renormalized. Empty weights mean 1.0 each.
EnsembleResult ensemble_fuse(const std::vector<ScoreVector>& scores, std::vector<double> weights = {});

}  // namespace stepcat
