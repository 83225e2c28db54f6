#include "fpmt/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fpmt/error.hpp"

namespace fpmt {

GradCheckReport grad_check(ParameterSet& params, const std::function<Var()>& loss_fn,
                           const GradCheckOptions& options) {
  if (!(options.epsilon >= 1e-6 && options.epsilon <= 1e-3)) {
    throw ConfigError("grad_check epsilon must lie in [1e-6, 1e-3]");
  }

  auto evaluate = [&] {
    NoGradGuard guard;
    return loss_fn().value()[0];
  };
  const double first = evaluate();
  const double second = evaluate();
  if (first != second) {
    throw DeterminismError("grad_check: loss function is not deterministic (" + std::to_string(first) +
                           " vs " + std::to_string(second) + ")");
  }

  params.zero_grad();
  backward(loss_fn());

  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  report.passed = true;
  for (auto& [name, var] : params) {
    std::vector<std::size_t> idx(var.value().size());
    std::iota(idx.begin(), idx.end(), 0);
    if (options.max_entries_per_param > 0 && idx.size() > options.max_entries_per_param) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(options.max_entries_per_param);
      std::sort(idx.begin(), idx.end());
    }
    for (std::size_t i : idx) {
      double& theta = var.mutable_value()[i];
      const double saved = theta;
      theta = saved + options.epsilon;
      const double plus = evaluate();
      theta = saved - options.epsilon;
      const double minus = evaluate();
      theta = saved;

      GradCheckEntry e;
      e.parameter = name;
      e.index = i;
      e.analytic = var.grad()[i];
      e.numeric = (plus - minus) / (2.0 * options.epsilon);
      const double denom = std::max({std::abs(e.analytic), std::abs(e.numeric), options.abs_floor});
      e.rel_error = std::abs(e.analytic - e.numeric) / denom;
      if (report.entries.empty() || e.rel_error > report.max_rel_error) {
        report.max_rel_error = e.rel_error;
        report.worst_parameter = name;
        report.worst_index = i;
      }
      report.entries.push_back(std::move(e));
    }
  }
  report.passed = report.max_rel_error < options.tolerance;
  params.zero_grad();
  return report;
}

}  // namespace fpmt
