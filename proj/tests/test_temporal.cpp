#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "stepcat/temporal.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace stepcat {
namespace {

using namespace oracle;
using testing::projection_loss;
using testing::random_tensor;

// ---- helpers ----

void randomize(ParamStore& store, std::uint64_t seed, double stddev = 0.5) {
  std::mt19937_64 rng(seed);
  for (Parameter& q : store) q.value = Tensor::randn(q.value.shape(), rng, stddev);
}

std::vector<Parameter*> all_params(ParamStore& store) {
  std::vector<Parameter*> out;
  for (Parameter& q : store) out.push_back(&q);
  return out;
}

SdtaConfig toy_config(std::size_t joints = 4) {
  SdtaConfig cfg;
  cfg.channels = 8;
  cfg.joints = joints;
  cfg.heads = 2;
  cfg.fusion_channels = 6;
  cfg.fusion_proj = 2;
  cfg.value_kernel = 3;
  return cfg;
}

// ---- transposed attention ----

TEST(TransposedAttention, MatchesChannelOracle) {
  for (std::size_t heads : {1u, 2u, 5u}) {
    const Tensor q = random_tensor({3, 4, 10}, 1), k = random_tensor({3, 4, 10}, 2), v = random_tensor({3, 4, 10}, 3);
    const Tensor alpha = random_tensor({heads}, 4);
    Graph g;
    Tensor attn, want_attn;
    const Tensor out =
        transposed_attention(g.constant(q), g.constant(k), g.constant(v), g.constant(alpha), heads, &attn).value();
    EXPECT_LE(max_abs_diff(out, transposed_oracle(q, k, v, alpha, heads, &want_attn)), 1e-12) << heads;
    EXPECT_LE(max_abs_diff(attn, want_attn), 1e-12) << heads;
  }
}

TEST(TransposedAttention, WeightsNormalizeOverContractionAxis) {
  const Tensor q = random_tensor({2, 5, 8}, 5), k = random_tensor({2, 5, 8}, 6);
  Graph g;
  Tensor attn;
  transposed_attention(g.constant(q), g.constant(k), g.constant(q), g.constant(Tensor({2}, {1.0, 3.0})), 2, &attn);
  ASSERT_EQ(attn.shape(), (Shape{2, 4, 4}));
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t j = 0; j < 4; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_GT(attn.at({h, i, j}), 0.0);
        s += attn.at({h, i, j});
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(TransposedAttention, MapSizeIndependentOfFrames) {
  std::size_t first = 0, token_first = 0;
  for (std::size_t t : {8u, 16u, 32u}) {
    const Tensor q = random_tensor({4, t, 12}, t);
    Graph g;
    Tensor attn;
    AttentionCounter ours, baseline;
    transposed_attention(g.constant(q), g.constant(q), g.constant(q), g.constant(Tensor({3}, {1.0, 1.0, 1.0})), 3,
                         &attn, &ours);
    token_attention(g.constant(q), g.constant(q), g.constant(q), 3, nullptr, &baseline);
    EXPECT_EQ(attn.shape(), (Shape{3, 4, 4}));
    EXPECT_EQ(ours.map_entries, 3u * 4 * 4);
    EXPECT_EQ(baseline.map_entries, 3 * (4 * t) * (4 * t));
    if (first == 0) {
      first = ours.map_entries;
      token_first = baseline.map_entries;
    } else {
      EXPECT_EQ(ours.map_entries, first);
      const double ratio = static_cast<double>(t) / 8.0;
      EXPECT_EQ(static_cast<double>(baseline.map_entries), token_first * ratio * ratio);
    }
  }
}

TEST(TransposedAttention, TemperatureSignIgnored) {
  const Tensor q = random_tensor({2, 3, 6}, 7), k = random_tensor({2, 3, 6}, 8), v = random_tensor({2, 3, 6}, 9);
  Graph g;
  const Tensor a = transposed_attention(g.constant(q), g.constant(k), g.constant(v),
                                        g.constant(Tensor({2}, {0.7, -1.3})), 2).value();
  const Tensor b = transposed_attention(g.constant(q), g.constant(k), g.constant(v),
                                        g.constant(Tensor({2}, {-0.7, 1.3})), 2).value();
  EXPECT_EQ(max_abs_diff(a, b), 0.0);
}

TEST(TransposedAttention, RejectsBadShapes) {
  Graph g;
  const Var q = g.constant(random_tensor({2, 3, 6}, 1));
  const Var other = g.constant(random_tensor({2, 4, 6}, 2));
  const Var alpha = g.constant(Tensor({2}, {1.0, 1.0}));
  EXPECT_THROW(transposed_attention(q, other, q, alpha, 2), DimensionError);
  EXPECT_THROW(transposed_attention(q, q, q, alpha, 4), DimensionError);
  EXPECT_THROW(transposed_attention(q, q, q, g.constant(Tensor({3}, {1.0, 1.0, 1.0})), 2), DimensionError);
}

TEST(TransposedAttention, GradCheck) {
  testing::ParamBag bag;
  Parameter& q = bag.add("q", random_tensor({2, 3, 6}, 1));
  Parameter& k = bag.add("k", random_tensor({2, 3, 6}, 2));
  Parameter& v = bag.add("v", random_tensor({2, 3, 6}, 3));
  Parameter& a = bag.add("alpha", Tensor({2}, {1.5, -2.0}));
  const auto params = bag.all();
  const auto report = grad_check(
      [&](Graph& g) {
        return projection_loss(transposed_attention(g.param(q), g.param(k), g.param(v), g.param(a), 2), 11);
      },
      params);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(TokenAttention, MatchesOracle) {
  const Tensor q = random_tensor({2, 3, 6}, 1), k = random_tensor({2, 3, 6}, 2), v = random_tensor({2, 3, 6}, 3);
  Graph g;
  Tensor attn;
  const Tensor out = token_attention(g.constant(q), g.constant(k), g.constant(v), 2, &attn).value();
  EXPECT_EQ(attn.shape(), (Shape{2, 6, 6}));
  EXPECT_LE(max_abs_diff(out, token_oracle(q, k, v, 2)), 1e-12);
}

// ---- projections and value branches ----

class SdtaParts : public ::testing::Test {
 protected:
  void SetUp() override {
    std::mt19937_64 rng(3);
    p = make_sdta(store, "sdta", toy_config(), rng);
    randomize(store, 17);
  }
  ParamStore store;
  SdtaParams p;
};

TEST_F(SdtaParts, ProjectQkMatchesOracle) {
  const Tensor y = random_tensor({4, 6, 8}, 1);
  Graph g;
  const QK qk = project_qk(g.constant(y), p);
  EXPECT_LE(max_abs_diff(qk.q.value(), dw3_oracle(pw_oracle(y, p.q_p->value), p.q_d->value)), 1e-12);
  EXPECT_LE(max_abs_diff(qk.k.value(), dw3_oracle(pw_oracle(y, p.k_p->value), p.k_d->value)), 1e-12);
}

TEST_F(SdtaParts, ValueBranchesMatchOracle) {
  for (std::size_t t : {1u, 2u, 5u, 9u}) {
    const Tensor y = random_tensor({4, t, 8}, t);
    Graph g;
    EXPECT_LE(max_abs_diff(value_multibranch(g.constant(y), p).value(), value_oracle(y, p)), 1e-12) << t;
  }
}

TEST_F(SdtaParts, ZeroValueBranchesPassInputThrough) {
  for (Parameter* w : p.v_p) w->value = Tensor::zeros(w->value.shape());
  const Tensor y = random_tensor({4, 7, 8}, 4);
  Graph g;
  const Tensor v = value_multibranch(g.constant(y), p).value();
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_EQ(v[i], y[i]);
}

TEST_F(SdtaParts, ValueRejectsWrongWidth) {
  Graph g;
  EXPECT_THROW(value_multibranch(g.constant(random_tensor({4, 5, 6}, 1)), p), DimensionError);
}

TEST(SdtaConfigTest, Validation) {
  SdtaConfig cfg = toy_config();
  cfg.channels = 6;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = toy_config();
  cfg.heads = 3;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = toy_config();
  cfg.alpha_init = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.alpha_init = -1.0;
  ParamStore store;
  std::mt19937_64 rng(1);
  EXPECT_THROW(make_sdta(store, "s", cfg, rng), std::invalid_argument);
  cfg.alpha_init = 0.25;
  const SdtaParams p = make_sdta(store, "s", cfg, rng);
  for (double a : p.alpha->value.data()) EXPECT_EQ(a, 0.25);
}

TEST(SdtaConfigTest, DefaultTemperatureIsRootHeadWidth) {
  ParamStore store;
  std::mt19937_64 rng(1);
  const SdtaParams p = make_sdta(store, "s", SdtaConfig{}, rng);
  EXPECT_EQ(p.alpha->value.numel(), 8u);
  for (double a : p.alpha->value.data()) EXPECT_DOUBLE_EQ(a, std::sqrt(10.0));
}

// ---- fusion tokens ----

TEST_F(SdtaParts, FusionTokensRepeatNearestFrame) {
  const Tensor q = random_tensor({4, 8, 8}, 1);
  for (std::size_t t_in : {2u, 3u, 8u, 11u}) {
    const Tensor fusion = random_tensor({t_in, 6}, t_in);
    Graph g;
    const Var qv = g.constant(q);
    const FusedTokens f = fuse_temporal_tokens(qv, qv, qv, g.constant(fusion), p);
    const Tensor want = fusion_tokens_oracle(fusion, p.fusion_w->value, 4, 8);
    EXPECT_LE(max_abs_diff(f.p.value(), want), 1e-12);
    EXPECT_EQ(f.q.shape(), (Shape{4, 8, 10}));
    EXPECT_LE(max_abs_diff(f.v.value(), concat_oracle({q, want})), 1e-12);
  }
}

TEST_F(SdtaParts, FusionRejectsChannelMismatch) {
  Graph g;
  const Var q = g.constant(random_tensor({4, 8, 8}, 1));
  EXPECT_THROW(fuse_temporal_tokens(q, q, q, g.constant(random_tensor({2, 5}, 2)), p), DimensionError);
}

// ---- gated feed-forward and joint fusion ----

TEST_F(SdtaParts, GdfnMatchesOracle) {
  const Tensor x = random_tensor({4, 5, 10}, 2);
  Graph g;
  EXPECT_LE(max_abs_diff(gdfn_forward(g.constant(x), p).value(), gdfn_oracle(x, p)), 1e-12);
}

TEST_F(SdtaParts, GdfnZeroGateIsIdentity) {
  p.gdfn_w2->value = Tensor::zeros(p.gdfn_w2->value.shape());
  const Tensor x = random_tensor({4, 5, 10}, 3);
  Graph g;
  const Tensor out = gdfn_forward(g.constant(x), p).value();
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(out[i], x[i]);
}

TEST_F(SdtaParts, JointFusionMatchesOracle) {
  const Tensor x = random_tensor({4, 5, 10}, 4), hat = random_tensor({5, 10}, 5);
  Graph g;
  EXPECT_LE(max_abs_diff(joint_level_fusion(g.constant(x), g.constant(hat), p).value(), joint_fusion_oracle(x, hat, p)),
            1e-12);
}

TEST_F(SdtaParts, JointFusionZeroPhiIsPointwise) {
  p.phi->value = Tensor::zeros(p.phi->value.shape());
  const Tensor x = random_tensor({4, 5, 10}, 4), hat = random_tensor({5, 10}, 5);
  Graph g;
  EXPECT_LE(max_abs_diff(joint_level_fusion(g.constant(x), g.constant(hat), p).value(), pw_oracle(x, p.out_w->value)),
            1e-12);
}

TEST_F(SdtaParts, JointFusionRejectsPhiLength) {
  Graph g;
  EXPECT_THROW(joint_level_fusion(g.constant(random_tensor({5, 3, 10}, 1)), g.constant(random_tensor({3, 10}, 2)), p),
               DimensionError);
}

// ---- full block ----

TEST_F(SdtaParts, ForwardMatchesComposedOracle) {
  const Tensor x = random_tensor({4, 6, 8}, 8), fusion = random_tensor({3, 6}, 9);
  Graph g;
  SdtaProbe probe;
  const Tensor out = sdta_forward(g.constant(x), g.constant(fusion), p, &probe).value();
  EXPECT_EQ(out.shape(), (Shape{6, 8}));
  EXPECT_LE(max_abs_diff(out, sdta_oracle(x, fusion, p)), 1e-12);
  EXPECT_EQ(probe.attention.shape(), (Shape{2, 5, 5}));
  EXPECT_EQ(probe.counter.map_entries, 2u * 5 * 5);
}

TEST_F(SdtaParts, ForwardRejectsJointCount) {
  Graph g;
  EXPECT_THROW(sdta_forward(g.constant(random_tensor({5, 6, 8}, 1)), g.constant(random_tensor({3, 6}, 2)), p),
               DimensionError);
}

TEST(SdtaForward, ParameterCountIndependentOfFrames) {
  ParamStore store;
  std::mt19937_64 rng(2);
  const SdtaParams p = make_sdta(store, "s", toy_config(), rng);
  const std::size_t n = store.total_elements();
  for (std::size_t t : {4u, 8u, 16u}) {
    Graph g;
    SdtaProbe probe;
    sdta_forward(g.constant(random_tensor({4, t, 8}, t)), g.constant(random_tensor({t / 2, 6}, 1)), p, &probe);
    EXPECT_EQ(probe.attention.shape(), (Shape{2, 5, 5}));
    EXPECT_EQ(store.total_elements(), n);
  }
}

TEST(SdtaForward, EveryParameterReceivesGradient) {
  ParamStore store;
  std::mt19937_64 rng(4);
  const SdtaParams p = make_sdta(store, "s", toy_config(), rng);
  // phi starts at zero; move it off so its own gradient path is exercised through the block.
  p.phi->value = random_tensor(p.phi->value.shape(), 5, 0.3);
  store.zero_grad();
  Graph g;
  const Var out = sdta_forward(g.constant(random_tensor({4, 6, 8}, 6)), g.constant(random_tensor({3, 6}, 7)), p);
  g.backward(projection_loss(out, 8));
  for (const Parameter& q : store) {
    double m = 0.0;
    for (double v : q.grad.data()) m = std::max(m, std::abs(v));
    EXPECT_GT(m, 1e-10) << q.name;
  }
}

TEST(SdtaForward, GradCheck) {
  ParamStore store;
  std::mt19937_64 rng(5);
  const SdtaParams p = make_sdta(store, "s", toy_config(), rng);
  randomize(store, 21, 0.4);
  for (double& a : p.alpha->value.data()) a = 1.0 + std::abs(a);
  const Tensor x = random_tensor({4, 4, 8}, 9), fusion = random_tensor({2, 6}, 10);
  GradCheckOptions opt;
  opt.max_entries_per_param = 30;
  const auto params = all_params(store);
  const auto report = grad_check(
      [&](Graph& g) { return projection_loss(sdta_forward(g.constant(x), g.constant(fusion), p), 12); }, params, opt);
  for (const auto& pc : report.params) EXPECT_LE(pc.max_rel_error, 1e-5) << pc.name;
  EXPECT_TRUE(report.passed);
}

}  // namespace
}  // namespace stepcat
