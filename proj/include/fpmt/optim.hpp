#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fpmt/autodiff.hpp"

namespace fpmt {

// Plain gradient descent with a per-parameter learning rate, chosen by
// name. Stateless, so a step depends only on the current gradients.
class SgdOptimizer {
 public:
  using RateFn = std::function<double(const std::string& name)>;

  explicit SgdOptimizer(RateFn rate) : rate_(std::move(rate)) {}

  // Applies θ ← θ − lr·∇θ; parameters whose rate is 0 are left alone.
  void step(ParameterSet& params) const;

 private:
  RateFn rate_;
};

// Adam, used for the adversarial players.
class AdamOptimizer {
 public:
  AdamOptimizer(double lr, double beta1 = 0.5, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParameterSet& params);

 private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<Matrix> m_, v_;
};

}  // namespace fpmt
