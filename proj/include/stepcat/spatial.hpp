#pragma once

// Body-part cross attention over the joint axis. Every block works frame by
// frame: tokens are the joints of one frame, features are channels.
//
// Each block runs a large (C_L) and a small (C_S) branch. A branch lifts its
// input with a pointwise map, applies joint self-attention, and aligns back to
// the shared width C. Channel 0 of the aligned features is the branch's cls
// channel; it queries the other branch's remaining channels through
// multi-head cross-attention.

#include <random>
#include <string>
#include <vector>

#include "stepcat/layers.hpp"

namespace stepcat {

struct SpatialConfig {
  std::size_t channels = 64;  // C
  std::size_t large = 96;     // C_L
  std::size_t small = 48;     // C_S
  std::size_t heads = 8;      // h
  std::size_t ffn_ratio = 4;  // r

  void validate() const;
};

struct SpatialAttentionParams {
  LayerNormParams ln;
  Parameter* w_q = nullptr;  // (width, width)
  Parameter* w_k = nullptr;
  Parameter* w_v = nullptr;
  Parameter* w_o = nullptr;  // zero at init
  std::size_t width = 0;
  std::size_t heads = 1;
};

SpatialAttentionParams make_spatial_attention(ParamStore& store, const std::string& prefix, std::size_t width,
                                              std::size_t heads, std::mt19937_64& rng);

/// Multiplicative gates on the projected q, k, v, each (1, T, width) or unset.
struct AttentionGates {
  Var q, k, v;
};

/// x + W_o * MHA(LN(x)), attention over joints within each frame.
/// `attn`, if given, receives the maps as (T, heads, J, J).
Var spatial_self_attention(Var x, const SpatialAttentionParams& p, Tensor* attn = nullptr,
                           const AttentionGates& gates = {});

struct CrossAttentionParams {
  Parameter* f = nullptr;    // (1, 1) cls projection
  Parameter* g = nullptr;    // (C, 1) cls back-projection
  LayerNormParams ln;        // over C
  Parameter* w_q = nullptr;  // (1, C): the single cls channel feeds every head
  Parameter* w_k = nullptr;  // (C, C)
  Parameter* w_v = nullptr;  // (C, C)
  std::size_t channels = 0;
  std::size_t heads = 1;
};

CrossAttentionParams make_cross_attention(ParamStore& store, const std::string& prefix, std::size_t channels,
                                          std::size_t heads, std::mt19937_64& rng);

/// How rows of the other branch are matched to this branch's joints.
enum class RowAlign {
  JointMean,  // mean over the other joints, repeated on every row
  RowWise,    // same joint set, row for row
};

/// [f(x_part[..., 0]) || aligned x_other[..., 1:]], shape (J_part, T, C).
Var cls_compose(Var x_part, Var x_other, const CrossAttentionParams& p, RowAlign align);

/// Per frame and head: q_i = composed[i, 0] * W_q, k/v from all channels,
/// A = softmax(q k^T / sqrt(C/h)) over joints, output A v; heads concatenated.
/// `attn`, if given, receives (T, heads, J, J).
Var cross_attention(Var composed, const CrossAttentionParams& p, Tensor* attn = nullptr);

/// y_cls = f(x[..., 0]) + MCA(LN(composed)), returns [g(y_cls) || x[..., 1:]].
Var mca_residual(Var x, Var composed, const CrossAttentionParams& p, Tensor* attn = nullptr);

struct FfnParams {
  LayerNormParams ln;
  Parameter* w1 = nullptr;  // (C, rC)
  Parameter* w2 = nullptr;  // (rC, C), zero at init
};

FfnParams make_ffn(ParamStore& store, const std::string& prefix, std::size_t channels, std::size_t ratio,
                   std::mt19937_64& rng);
/// x + W2 gelu(W1 LN(x)).
Var ffn_residual(Var x, const FfnParams& p);

struct BranchParams {
  Parameter* lift = nullptr;   // (C, width)
  SpatialAttentionParams attention;
  Parameter* align = nullptr;  // (width, C)
  CrossAttentionParams cross;
  Parameter* gate = nullptr;   // (C, width), multi-part blocks only
  std::size_t width = 0;
};

struct SbcaParams {
  SpatialConfig config;
  BranchParams large, small;
  Parameter* f_l = nullptr;  // (C, C/2)
  Parameter* f_s = nullptr;  // (C, C/2)
  FfnParams ffn;
};

SbcaParams make_sbca(ParamStore& store, const std::string& prefix, const SpatialConfig& cfg, std::mt19937_64& rng);

struct SpatialProbe {
  Tensor self_large, self_small;    // (T, h, J, J)
  Tensor cross_large, cross_small;  // (T, h, J, J)
};

/// Single body-part block: x_part (J_p, T, C) and the remaining joints
/// x_other (J_o, T, C) -> (J_p, T, C).
Var sbca_forward(Var x_part, Var x_other, const SbcaParams& p, SpatialProbe* probe = nullptr);

struct MbcaParams {
  SbcaParams blocks;                 // branches carry gates
  std::vector<std::size_t> part;     // rows of the full joint set handled by this block
  std::vector<std::size_t> up_rows;  // positions inside `part` that belong to U
  std::vector<std::size_t> down_rows;
};

/// `part` is a subset of joint indices; up/down roles follow the U/D partition.
MbcaParams make_mbca(ParamStore& store, const std::string& prefix, const SpatialConfig& cfg,
                     const std::vector<std::size_t>& part, std::mt19937_64& rng);

/// Multi body-part block on the reassembled joint set x_full (25, T, C).
/// Large branch: q and v gated by the U-role mean, k by the D-role mean.
/// Small branch: k gated by U, q and v by D. Output (|part|, T, C).
Var mbca_forward(Var x_full, const MbcaParams& p, SpatialProbe* probe = nullptr);

/// Full joint set with the hand rows taken from x_hands and the leg/foot rows
/// from x_feet; other rows come from x1.
Var reassemble_joints(Var x1, Var x_hands, Var x_feet);

}  // namespace stepcat
