#include "fpmt/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "fpmt/error.hpp"

namespace fpmt {

ConfusionCounts count_confusion(std::span<const std::size_t> predictions, std::span<const std::size_t> truths) {
  if (predictions.size() != truths.size()) {
    throw DimensionError("metrics: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(truths.size()) + " truths");
  }
  if (truths.empty()) throw DimensionError("metrics: empty evaluation set");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const std::size_t p = predictions[i], t = truths[i];
    if (p > 1 || t > 1) throw ContractError("metrics: labels must be binary (0/1)");
    if (t == 1) {
      (p == 1 ? c.tp : c.fn)++;
    } else {
      (p == 1 ? c.fp : c.tn)++;
    }
  }
  return c;
}

Metrics metrics_from_counts(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0) throw ProtocolError("metrics: evaluation set contains no incidents");
  Metrics m;
  m.counts = c;
  const double total = static_cast<double>(c.total());
  m.cr = 100.0 * static_cast<double>(c.tp + c.tn) / total;
  const double recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  const double precision = c.tp + c.fp == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  m.dr = 100.0 * recall;
  m.precision = 100.0 * precision;
  m.f1 = precision + recall == 0.0 ? 0.0 : 100.0 * 2.0 * precision * recall / (precision + recall);
  return m;
}

Metrics compute_metrics(std::span<const std::size_t> predictions, std::span<const std::size_t> truths) {
  return metrics_from_counts(count_confusion(predictions, truths));
}

double sign_test_p_value(std::size_t wins, std::size_t losses) {
  const std::size_t n = wins + losses;
  if (n == 0) return 1.0;
  double p = 0.0;
  for (std::size_t k = wins; k <= n; ++k) {
    // C(n, k) / 2^n in log space
    const double log_c = std::lgamma(static_cast<double>(n) + 1) - std::lgamma(static_cast<double>(k) + 1) -
                         std::lgamma(static_cast<double>(n - k) + 1);
    p += std::exp(log_c - static_cast<double>(n) * std::log(2.0));
  }
  return std::min(1.0, p);
}

}  // namespace fpmt
