#include "fpmt/losses.hpp"

#include "fpmt/error.hpp"

namespace fpmt {

LossBreakdown combine(double supervised, double consistency, double weight) {
  if (!(weight >= 0.0)) throw ConfigError("loss weight must be >= 0");
  return {supervised, consistency, weight, supervised + weight * consistency};
}

Var cross_entropy(const Var& targets, const Var& probs) {
  if (!targets.value().same_shape(probs.value())) {
    throw DimensionError("cross_entropy: shape mismatch " + targets.value().shape_string() + " vs " +
                         probs.value().shape_string());
  }
  if (targets.rows() == 0) throw DimensionError("cross_entropy: empty batch");
  const double n = static_cast<double>(targets.rows());
  return scale(sum(mul(targets, log(clamp_min(probs, kLogEps)))), -1.0 / n);
}

double cross_entropy(const Matrix& targets, const Matrix& probs) {
  NoGradGuard guard;
  return cross_entropy(Var::constant(targets), Var::constant(probs)).value()[0];
}

Var kl_consistency(const Var& model_probs, const Var& targets, KlDirection direction) {
  if (!model_probs.value().same_shape(targets.value())) {
    throw DimensionError("kl_consistency: shape mismatch " + model_probs.value().shape_string() + " vs " +
                         targets.value().shape_string());
  }
  if (targets.rows() == 0) throw DimensionError("kl_consistency: empty batch");
  const double n = static_cast<double>(targets.rows());
  const Var& left = direction == KlDirection::ModelFirst ? model_probs : targets;
  const Var& right = direction == KlDirection::ModelFirst ? targets : model_probs;
  Var log_ratio = sub(log(clamp_min(left, kLogEps)), log(clamp_min(right, kLogEps)));
  return scale(sum(mul(left, log_ratio)), 1.0 / n);
}

double kl_consistency(const Matrix& model_probs, const Matrix& targets, KlDirection direction) {
  NoGradGuard guard;
  return kl_consistency(Var::constant(model_probs), Var::constant(targets), direction).value()[0];
}

RoutedLoss route_losses(std::span<const MixPair> pairs, const Var& mixed_logits, const Matrix& mixed_targets,
                        double weight, KlDirection direction) {
  if (mixed_logits.rows() != pairs.size()) {
    throw DimensionError("route_losses: " + std::to_string(pairs.size()) + " pairs but logits " +
                         mixed_logits.value().shape_string());
  }
  if (mixed_targets.rows() != pairs.size()) {
    throw ContractError("route_losses: " + std::to_string(pairs.size()) + " pairs but only " +
                        std::to_string(mixed_targets.rows()) + " targets");
  }
  std::vector<std::size_t> ce_rows, kl_rows;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const PairKind k = pairs[i].kind();
    if (k != PairKind::UnlabeledUnlabeled) ce_rows.push_back(i);
    if (k != PairKind::LabeledLabeled) kl_rows.push_back(i);
  }

  Var probs = softmax(mixed_logits);
  RoutedLoss out;
  out.supervised_rows = ce_rows.size();
  out.consistency_rows = kl_rows.size();
  Var lx = Var::constant(Matrix(1, 1));
  Var lu = Var::constant(Matrix(1, 1));
  if (!ce_rows.empty()) {
    lx = cross_entropy(Var::constant(select_rows(mixed_targets, ce_rows)), gather_rows(probs, ce_rows));
  }
  if (!kl_rows.empty()) {
    lu = kl_consistency(gather_rows(probs, kl_rows), Var::constant(select_rows(mixed_targets, kl_rows)), direction);
  }
  out.breakdown = combine(lx.value()[0], lu.value()[0], weight);
  out.total = add(lx, scale(lu, weight));
  return out;
}

Var masked_recon_loss(const Matrix& original, const Matrix& mask, const Var& reconstruction) {
  if (!original.same_shape(mask) || !original.same_shape(reconstruction.value())) {
    throw DimensionError("masked_recon_loss: shapes " + original.shape_string() + ", " + mask.shape_string() + ", " +
                         reconstruction.value().shape_string());
  }
  double count = 0.0;
  for (double m : mask.data()) {
    if (m != 0.0 && m != 1.0) throw DomainError("masked_recon_loss: mask must be 0/1");
    count += m;
  }
  if (count == 0.0) throw DomainError("masked_recon_loss: mask selects no positions");
  Var diff = sub(reconstruction, Var::constant(original));
  Var m = Var::constant(mask);
  return scale(sum(mul(mul(diff, diff), m)), 1.0 / count);
}

double masked_recon_loss(const Matrix& original, const Matrix& mask, const Matrix& reconstruction) {
  NoGradGuard guard;
  return masked_recon_loss(original, mask, Var::constant(reconstruction)).value()[0];
}

}  // namespace fpmt
