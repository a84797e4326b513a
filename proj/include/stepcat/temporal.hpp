#pragma once

// Dynamic temporal attention over (joints, frames, channels) features.
// Attention mixes channels, so the map is (C^/h x C^/h) per head whatever the
// number of frames.

#include <optional>
#include <random>
#include <string>

#include "stepcat/layers.hpp"

namespace stepcat {

struct SdtaConfig {
  std::size_t channels = 64;        // C, divisible by 4
  std::size_t joints = 14;          // rows of the incoming block (length of phi)
  std::size_t heads = 8;
  std::size_t fusion_channels = 32; // C_f of the extractor fusion features
  std::size_t fusion_proj = 16;     // C_P appended to Q, K, V
  std::size_t value_kernel = 7;
  std::size_t dilation_a = 1;
  std::size_t dilation_b = 2;
  std::size_t gdfn_ratio = 2;
  std::optional<double> alpha_init;  // default sqrt(C^/h)

  std::size_t fused_channels() const { return channels + fusion_proj; }
  void validate() const;
};

struct SdtaParams {
  SdtaConfig config;
  LayerNormParams ln;             // over C
  Parameter* q_p = nullptr;       // (C, C)
  Parameter* q_d = nullptr;       // (3, C) depthwise
  Parameter* k_p = nullptr;
  Parameter* k_d = nullptr;
  Parameter* v_p[4] = {};         // (C, C/4) each
  Parameter* v_tcn_a = nullptr;   // (K, C/4, C/4), dilation_a
  Parameter* v_tcn_b = nullptr;   // (K, C/4, C/4), dilation_b
  Parameter* fusion_w = nullptr;  // (C_f, C_P)
  Parameter* alpha = nullptr;     // (heads)
  LayerNormParams gdfn_ln;        // over C^
  Parameter* gdfn_w1 = nullptr;   // (C^, rC^)
  Parameter* gdfn_d1 = nullptr;   // (3, rC^)
  Parameter* gdfn_w2 = nullptr;
  Parameter* gdfn_d2 = nullptr;
  Parameter* gdfn_w3 = nullptr;   // (rC^, C^)
  Parameter* phi = nullptr;       // (joints)
  Parameter* out_w = nullptr;     // (C^, C)
};

SdtaParams make_sdta(ParamStore& store, const std::string& prefix, const SdtaConfig& cfg, std::mt19937_64& rng);

struct QK {
  Var q, k;
};

/// Pointwise C -> C then a 3-tap depthwise temporal conv, bias-free.
QK project_qk(Var y, const SdtaParams& p);

/// V = TCN_a(W1 y) || TCN_b(W2 y) || MaxPool3(W3 y) || W4 y, plus y.
Var value_multibranch(Var y, const SdtaParams& p);

struct FusedTokens {
  Var q, k, v;
  Var p;  // projected fusion tokens, (N, T, C_P)
};

/// Projects fusion (T', C_f) to C_P, repeats frames to T (nearest), broadcasts
/// over joints and appends to q, k, v along channels.
FusedTokens fuse_temporal_tokens(Var q, Var k, Var v, Var fusion, const SdtaParams& p);

/// Bookkeeping for the map-size comparison.
struct AttentionCounter {
  std::size_t maps = 0;         // attention maps materialized
  std::size_t map_entries = 0;  // total entries across them
};

/// Per head, with Qh, Vh (NT x d) and Kh^T (d x NT):
///   A = softmax(Kh^T Qh / |alpha_h|), normalized over the contraction axis
///   (column j of A holds the weights mixing V's channels into output channel j)
///   out_h = Vh A
/// q, k, v are (N, T, C^); `attn` receives (heads, d, d).
Var transposed_attention(Var q, Var k, Var v, Var alpha, std::size_t heads, Tensor* attn = nullptr,
                         AttentionCounter* counter = nullptr);

/// Token attention over all N*T positions, softmax(Qh Kh^T / sqrt(d)) Vh.
/// Baseline for the map-size comparison only.
Var token_attention(Var q, Var k, Var v, std::size_t heads, Tensor* attn = nullptr,
                    AttentionCounter* counter = nullptr);

/// x + W3 (gelu(D1 W1 LN(x)) * D2 W2 LN(x)).
Var gdfn_forward(Var x, const SdtaParams& p);

/// (x_i + phi_i * p_hat) W_out for every joint i; x (V, T, C^), p_hat (T, C^).
Var joint_level_fusion(Var x, Var p_hat, const SdtaParams& p);

struct SdtaProbe {
  Tensor attention;  // (heads, d, d)
  AttentionCounter counter;
};

/// x (V, T, C), fusion (T', C_f) -> (T, C):
///   y = LN(x); Q, K = project_qk(y); V = value_multibranch(y)
///   Q^, K^, V^ = fuse_temporal_tokens(...)
///   h = [x || P] + transposed_attention(Q^, K^, V^)
///   h = gdfn_forward(h)
///   out = mean over joints of joint_level_fusion(h, mean over joints of h)
Var sdta_forward(Var x, Var fusion, const SdtaParams& p, SdtaProbe* probe = nullptr);

}  // namespace stepcat
