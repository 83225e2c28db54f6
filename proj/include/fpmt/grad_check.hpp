#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "fpmt/autodiff.hpp"

namespace fpmt {

struct GradCheckOptions {
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor for the relative error, so gradients that are zero
  // on both sides do not divide by zero.
  double abs_floor = 1e-6;
  // Entries checked per parameter; 0 checks every entry.
  std::size_t max_entries_per_param = 0;
  unsigned long long seed = 7;
};

struct GradCheckEntry {
  std::string parameter;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  bool passed = false;
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::vector<GradCheckEntry> entries;
};

// Compares backward() gradients of loss_fn against central differences
// (f(θ+ε) − f(θ−ε)) / 2ε for every checked parameter entry. loss_fn must
// rebuild the graph from the current parameter values on each call.
GradCheckReport grad_check(ParameterSet& params, const std::function<Var()>& loss_fn,
                           const GradCheckOptions& options = {});

}  // namespace fpmt
