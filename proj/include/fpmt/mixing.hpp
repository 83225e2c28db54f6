#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fpmt/autodiff.hpp"
#include "fpmt/encoder.hpp"
#include "fpmt/random.hpp"

namespace fpmt {

enum class MixMode { BetaRandom, ConfidenceRatio };

// Where λ comes from: a Beta(α, α) draw per batch, or the confidence ratio
// o / (o + o') per pair.
struct MixPolicy {
  MixMode mode = MixMode::ConfidenceRatio;
  double alpha = 16.0;

  static MixPolicy beta(double alpha) { return {MixMode::BetaRandom, alpha}; }
  static MixPolicy confidence() { return {MixMode::ConfidenceRatio, 16.0}; }
  void validate() const;
};

enum class Origin { Labeled, Unlabeled };

enum class PairKind { LabeledLabeled, UnlabeledUnlabeled, Mixed };

struct MixPair {
  std::size_t index_q = 0;
  std::size_t index_p = 0;
  double lambda = 1.0;
  Origin origin_q = Origin::Labeled;
  Origin origin_p = Origin::Labeled;

  PairKind kind() const;
};

// A mixing input's target: a true label (confidence 1) or a pseudo-label.
struct MixTarget {
  Origin origin = Origin::Labeled;
  ProbVector label;
  std::optional<PseudoLabel> pseudo;

  static MixTarget labeled(ProbVector y) { return {Origin::Labeled, std::move(y), std::nullopt}; }
  static MixTarget unlabeled(PseudoLabel p) { return {Origin::Unlabeled, {}, std::move(p)}; }

  // Throws ContractError for an unlabeled input without a pseudo-label.
  const ProbVector& probs() const;
  double confidence() const;
};

std::vector<double> mixup_inputs(std::span<const double> x_q, std::span<const double> x_p, double lambda);
ProbVector mixup_labels(std::span<const double> y_q, std::span<const double> y_p, double lambda);

// One draw from Beta(alpha, alpha) via two gamma variates.
double sample_lambda_beta(double alpha, Rng& rng);

double confidence_lambda(double o, double o_prime);

// MixText's λ' = max(λ, 1 − λ); off by default.
inline double mixtext_lambda(double lambda) { return lambda < 0.5 ? 1.0 - lambda : lambda; }

// h_m = λ_i h_i + (1 − λ_i) h'_i with λ held constant (no gradient).
Var mix_hidden(const Var& h, const Var& h_prime, std::span<const double> lambdas);

struct TmixResult {
  Var logits;
  Matrix mixed_targets;
};

// Hidden-space mixing at layer E with one λ for the whole batch.
TmixResult tmix_forward(const Encoder& encoder, const Matrix& x, const Matrix& x_prime, const Matrix& y,
                        const Matrix& y_prime, double lambda, std::size_t layer);

struct PtmixResult {
  Var logits;
  Matrix mixed_targets;
  std::vector<double> lambdas;
  Var mixed_hidden;
};

// Hidden-space mixing with λ_i = o_i / (o_i + o'_i) per row; labeled inputs
// count as confidence 1.
PtmixResult ptmix_forward(const Encoder& encoder, const Matrix& x, const Matrix& x_prime,
                          std::span<const MixTarget> targets, std::span<const MixTarget> targets_prime,
                          std::size_t layer);

// Concatenates [labeled | unlabeled] index ranges, draws a uniform
// permutation π and pairs i with π(i). λ is left at 1 for the caller to set.
std::vector<MixPair> pair_batch(std::size_t n_labeled, std::size_t n_unlabeled, Rng& rng);

// Fills every pair's λ from the policy. `confidences` is indexed like the
// concatenated batch.
void assign_lambdas(std::vector<MixPair>& pairs, const MixPolicy& policy, std::span<const double> confidences,
                    Rng& rng, bool use_mixtext_max = false);

// ỹ_i = λ_i y_q + (1 − λ_i) y_p for every pair.
Matrix mix_targets(std::span<const MixPair> pairs, const Matrix& targets);

}  // namespace fpmt
