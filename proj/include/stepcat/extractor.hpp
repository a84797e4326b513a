#pragma once

// Graph-convolution backbone with channel-wise topology refinement. Produces
// the (joints, frames', C0) features for the transformer and a joint-averaged
// copy used as temporal fusion tokens.

#include <random>
#include <string>
#include <vector>

#include "stepcat/layers.hpp"

namespace stepcat {

/// Un-normalized adjacency of the skeleton tree plus self loops (25x25, 0/1).
Tensor tree_adjacency_with_self_loops();
/// D^-1/2 (A + I) D^-1/2 over the skeleton tree.
Tensor build_adjacency();

struct CtrGcParams {
  Parameter* phi = nullptr;    // (c_in, c_out)
  Parameter* psi = nullptr;    // (c_in, c_out)
  Parameter* alpha = nullptr;  // (c_out) refinement scale per channel
  Parameter* w_out = nullptr;  // (c_in, c_out)
  std::size_t c_in = 0;
  std::size_t c_out = 0;
};

CtrGcParams make_ctr_gc(ParamStore& store, const std::string& prefix, std::size_t c_in, std::size_t c_out,
                        std::mt19937_64& rng);

/// x (N, T, c_in) -> (N, T, c_out).
///   A_c[i,j] = adj[i,j] + alpha_c * tanh(phi(xbar)[i,c] - psi(xbar)[j,c]),  xbar = mean over T
///   out[i,t,c] = sum_j A_c[i,j] * (x w_out)[j,t,c]
Var ctr_gc_forward(Var x, const Tensor& adj, const CtrGcParams& p);

struct TemporalBlockParams {
  Parameter* w = nullptr;  // (kernel, c, c)
  std::size_t stride = 1;
};

TemporalBlockParams make_temporal_block(ParamStore& store, const std::string& prefix, std::size_t channels,
                                        std::size_t kernel, std::size_t stride, std::mt19937_64& rng);
/// Kernel whose centre tap is the identity and all other taps are zero.
Tensor identity_temporal_kernel(std::size_t kernel, std::size_t channels);

/// conv_k(x) + x at stride 1; conv_k(x) with ceil(T/stride) frames otherwise.
Var temporal_conv_block(Var x, const TemporalBlockParams& p);

struct ExtractorConfig {
  std::vector<std::size_t> channels = {3, 16, 16, 32, 32};  // one more entry than layers
  std::vector<std::size_t> strides = {1, 1, 2, 2};
  std::size_t kernel = 5;

  std::size_t total_stride() const;
  std::size_t out_channels() const { return channels.back(); }
  void validate() const;
};

struct ExtractorParams {
  ExtractorConfig config;
  Tensor adjacency;
  std::vector<CtrGcParams> gcn;
  std::vector<TemporalBlockParams> tcn;
};

ExtractorParams make_extractor(ParamStore& store, const std::string& prefix, const ExtractorConfig& cfg,
                               std::mt19937_64& rng);

struct ExtractorOutput {
  Var x_in;          // (N, T / total_stride, C0)
  Var fusion_feats;  // (T / total_stride, C0)
};

/// Each layer: gelu(ctr_gc) followed by the temporal block. Fusion features are
/// the joint mean of the last layer.
ExtractorOutput extract(Var x, const ExtractorParams& p);

}  // namespace stepcat
