#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

namespace fpmt {

// Incident class (1) is the positive class.
struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

// All rates in percent.
struct Metrics {
  ConfusionCounts counts;
  double cr = 0.0;         // accuracy
  double dr = 0.0;         // recall on the incident class
  double precision = 0.0;  // on the incident class
  double f1 = 0.0;
};

ConfusionCounts count_confusion(std::span<const std::size_t> predictions, std::span<const std::size_t> truths);

// Throws ProtocolError when the truths contain no incident.
Metrics compute_metrics(std::span<const std::size_t> predictions, std::span<const std::size_t> truths);
Metrics metrics_from_counts(const ConfusionCounts& c);

// One-sided sign test: P(X >= wins) for X ~ Binomial(wins + losses, 1/2).
// Ties are excluded by the caller. Returns 1 when there are no trials.
double sign_test_p_value(std::size_t wins, std::size_t losses);

}  // namespace fpmt
