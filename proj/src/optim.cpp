#include "fpmt/optim.hpp"

#include <cmath>

namespace fpmt {

void SgdOptimizer::step(ParameterSet& params) const {
  for (auto& [name, var] : params) {
    const double lr = rate_(name);
    if (lr == 0.0) continue;
    auto theta = var.mutable_value().data();
    const auto g = var.grad().data();
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * g[i];
  }
}

void AdamOptimizer::step(ParameterSet& params) {
  if (m_.empty()) {
    for (const auto& [name, var] : params) {
      m_.emplace_back(var.rows(), var.cols());
      v_.emplace_back(var.rows(), var.cols());
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::size_t k = 0;
  for (auto& [name, var] : params) {
    auto theta = var.mutable_value().data();
    const auto g = var.grad().data();
    auto m = m_[k].data();
    auto v = v_[k].data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      theta[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
    ++k;
  }
}

}  // namespace fpmt
