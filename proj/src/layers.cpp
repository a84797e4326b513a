#include "stepcat/layers.hpp"

#include <cmath>

namespace stepcat {

Parameter& add_normal(ParamStore& store, const std::string& name, Shape shape, std::mt19937_64& rng, double stddev) {
  return store.add(name, Tensor::randn(std::move(shape), rng, stddev));
}

Parameter& add_linear(ParamStore& store, const std::string& name, Shape shape, std::size_t fan_in,
                      std::mt19937_64& rng) {
  return add_normal(store, name, std::move(shape), rng, 1.0 / std::sqrt(static_cast<double>(fan_in)));
}

Parameter& add_constant(ParamStore& store, const std::string& name, Shape shape, double value) {
  return store.add(name, Tensor::full(std::move(shape), value));
}

LayerNormParams make_layer_norm(ParamStore& store, const std::string& prefix, std::size_t channels) {
  return {&add_constant(store, prefix + ".gamma", {channels}, 1.0),
          &add_constant(store, prefix + ".beta", {channels}, 0.0)};
}

Var apply_layer_norm(Var x, const LayerNormParams& p) {
  Graph& g = x.graph();
  return layer_norm(x, g.param(*p.gamma), g.param(*p.beta), -1);
}

}  // namespace stepcat
