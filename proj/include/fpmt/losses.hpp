#pragma once

#include <span>

#include "fpmt/autodiff.hpp"
#include "fpmt/mixing.hpp"

namespace fpmt {

struct LossBreakdown {
  double supervised = 0.0;   // L_x
  double consistency = 0.0;  // L_u
  double weight = 0.0;       // w
  double total = 0.0;        // L_x + w·L_u
};

LossBreakdown combine(double supervised, double consistency, double weight);

// −(1/N) Σ_i Σ_j y_ij log max(p_ij, EPS). Soft targets allowed.
Var cross_entropy(const Var& targets, const Var& probs);
double cross_entropy(const Matrix& targets, const Matrix& probs);

// ModelFirst: mean_i Σ_j p log(p / q), p the model distribution; this is the
// default. TargetFirst swaps the arguments.
enum class KlDirection { ModelFirst, TargetFirst };

Var kl_consistency(const Var& model_probs, const Var& targets, KlDirection direction = KlDirection::ModelFirst);
double kl_consistency(const Matrix& model_probs, const Matrix& targets,
                      KlDirection direction = KlDirection::ModelFirst);

struct RoutedLoss {
  LossBreakdown breakdown;
  Var total;
  std::size_t supervised_rows = 0;
  std::size_t consistency_rows = 0;
};

// Per-pair routing: labeled×labeled rows feed only the cross-entropy term,
// unlabeled×unlabeled rows feed only the KL term, mixed-origin rows feed
// both. Each term is a mean over the rows routed to it (0 when none are).
RoutedLoss route_losses(std::span<const MixPair> pairs, const Var& mixed_logits, const Matrix& mixed_targets,
                        double weight, KlDirection direction = KlDirection::ModelFirst);

// Mean squared error over positions where mask == 1.
Var masked_recon_loss(const Matrix& original, const Matrix& mask, const Var& reconstruction);
double masked_recon_loss(const Matrix& original, const Matrix& mask, const Matrix& reconstruction);

}  // namespace fpmt
