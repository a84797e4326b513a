#include "stepcat/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace stepcat {

namespace {

double evaluate(const LossFn& loss) {
  Graph g;
  const Var l = loss(g);
  if (l.value().numel() != 1) throw DimensionError("grad_check: loss must be scalar, got " + shape_str(l.shape()));
  return l.value()[0];
}

}  // namespace

GradCheckReport grad_check(const LossFn& loss, std::span<Parameter* const> params, const GradCheckOptions& opt) {
  std::vector<Tensor> analytic;
  {
    Graph g;
    const Var l = loss(g);
    g.backward(l, /*accumulate_into_params=*/false);
    for (Parameter* p : params) {
      const Tensor& gr = g.grad(g.param(*p));
      analytic.push_back(gr.empty() ? Tensor(p->value.shape()) : gr);
    }
  }

  GradCheckReport report;
  std::mt19937_64 rng(opt.seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    std::vector<std::size_t> entries(p.value.numel());
    std::iota(entries.begin(), entries.end(), 0);
    if (opt.max_entries_per_param > 0 && entries.size() > opt.max_entries_per_param) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(opt.max_entries_per_param);
      std::sort(entries.begin(), entries.end());
    }
    ParamCheck pc;
    pc.name = p.name;
    for (std::size_t i : entries) {
      const double saved = p.value[i];
      p.value[i] = saved + opt.eps;
      const double up = evaluate(loss);
      p.value[i] = saved - opt.eps;
      const double down = evaluate(loss);
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * opt.eps);
      const double a = analytic[pi][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), opt.scale_floor});
      const double rel = std::abs(a - numeric) / denom;
      pc.max_abs_analytic = std::max(pc.max_abs_analytic, std::abs(a));
      if (rel >= pc.max_rel_error) {
        pc.max_rel_error = rel;
        pc.worst_index = i;
        pc.analytic = a;
        pc.numeric = numeric;
      }
      ++pc.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, pc.max_rel_error);
    report.params.push_back(std::move(pc));
  }
  report.passed = report.max_rel_error <= opt.tol;
  return report;
}

}  // namespace stepcat
