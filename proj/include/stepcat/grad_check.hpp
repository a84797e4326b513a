#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stepcat/autograd.hpp"

namespace stepcat {

struct GradCheckOptions {
  double eps = 1e-6;
  double tol = 1e-5;
  // Relative error is |a - n| / max(|a|, |n|, scale_floor); the floor keeps
  // round-off on near-zero gradients from reading as a large relative error.
  double scale_floor = 1e-3;
  // 0 checks every entry; otherwise a seeded random subset of this size per parameter.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 0;
};

struct ParamCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
  double max_abs_analytic = 0.0;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double max_rel_error = 0.0;
  bool passed = true;
};

/// Builds a scalar loss on the given graph; parameters enter through Graph::param.
using LossFn = std::function<Var(Graph&)>;

/// Central finite differences against the tape's analytic gradient.
/// Parameter values are restored; Parameter::grad is left untouched.
GradCheckReport grad_check(const LossFn& loss, std::span<Parameter* const> params, const GradCheckOptions& opt = {});

}  // namespace stepcat
