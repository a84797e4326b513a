#pragma once

// Parameter construction helpers shared by the model blocks.

#include <random>
#include <string>

#include "stepcat/ops.hpp"

namespace stepcat {

/// N(0, stddev^2) entries.
Parameter& add_normal(ParamStore& store, const std::string& name, Shape shape, std::mt19937_64& rng, double stddev);
/// N(0, 1/fan_in), the default for linear maps.
Parameter& add_linear(ParamStore& store, const std::string& name, Shape shape, std::size_t fan_in,
                      std::mt19937_64& rng);
Parameter& add_constant(ParamStore& store, const std::string& name, Shape shape, double value);

struct LayerNormParams {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;
};

LayerNormParams make_layer_norm(ParamStore& store, const std::string& prefix, std::size_t channels);
Var apply_layer_norm(Var x, const LayerNormParams& p);

}  // namespace stepcat
