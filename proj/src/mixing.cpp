#include "fpmt/mixing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fpmt/error.hpp"

namespace fpmt {

void MixPolicy::validate() const {
  if (mode == MixMode::BetaRandom && !(alpha > 0.0)) throw ConfigError("beta_alpha must be > 0");
}

PairKind MixPair::kind() const {
  if (origin_q == Origin::Labeled && origin_p == Origin::Labeled) return PairKind::LabeledLabeled;
  if (origin_q == Origin::Unlabeled && origin_p == Origin::Unlabeled) return PairKind::UnlabeledUnlabeled;
  return PairKind::Mixed;
}

const ProbVector& MixTarget::probs() const {
  if (origin == Origin::Labeled) return label;
  if (!pseudo) throw ContractError("unlabeled mixing input has no pseudo-label");
  return pseudo->probs;
}

double MixTarget::confidence() const {
  if (origin == Origin::Labeled) return 1.0;
  if (!pseudo) throw ContractError("unlabeled mixing input has no pseudo-label");
  return pseudo->confidence;
}

namespace {

void check_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("lambda " + std::to_string(lambda) + " outside [0, 1]");
}

}  // namespace

std::vector<double> mixup_inputs(std::span<const double> x_q, std::span<const double> x_p, double lambda) {
  if (x_q.size() != x_p.size()) {
    throw DimensionError("mixup_inputs: length " + std::to_string(x_q.size()) + " vs " + std::to_string(x_p.size()));
  }
  check_lambda(lambda);
  std::vector<double> out(x_q.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = lambda * x_q[i] + (1.0 - lambda) * x_p[i];
  return out;
}

ProbVector mixup_labels(std::span<const double> y_q, std::span<const double> y_p, double lambda) {
  return mixup_inputs(y_q, y_p, lambda);
}

double sample_lambda_beta(double alpha, Rng& rng) {
  if (!(alpha > 0.0)) throw ConfigError("Beta alpha must be > 0, got " + std::to_string(alpha));
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double a = gamma(rng);
  const double b = gamma(rng);
  if (a + b == 0.0) return 0.5;
  return a / (a + b);
}

double confidence_lambda(double o, double o_prime) {
  if (!(o >= 0.0) || !(o_prime >= 0.0)) throw DomainError("confidences must be >= 0");
  if (!(o + o_prime > 0.0)) throw DomainError("degenerate confidences: o + o' == 0");
  return o / (o + o_prime);
}

Var mix_hidden(const Var& h, const Var& h_prime, std::span<const double> lambdas) {
  if (!h.value().same_shape(h_prime.value())) {
    throw DimensionError("mix_hidden: shape mismatch " + h.value().shape_string() + " vs " +
                         h_prime.value().shape_string());
  }
  if (lambdas.size() != h.rows()) throw DimensionError("mix_hidden: one lambda per row required");
  Matrix lam(h.rows(), 1), rest(h.rows(), 1);
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    check_lambda(lambdas[i]);
    lam[i] = lambdas[i];
    rest[i] = 1.0 - lambdas[i];
  }
  return add(mul_col(h, Var::constant(std::move(lam))), mul_col(h_prime, Var::constant(std::move(rest))));
}

TmixResult tmix_forward(const Encoder& encoder, const Matrix& x, const Matrix& x_prime, const Matrix& y,
                        const Matrix& y_prime, double lambda, std::size_t layer) {
  if (!x.same_shape(x_prime)) {
    throw DimensionError("tmix_forward: inputs " + x.shape_string() + " vs " + x_prime.shape_string());
  }
  if (!y.same_shape(y_prime) || y.rows() != x.rows()) {
    throw DimensionError("tmix_forward: targets " + y.shape_string() + " vs " + y_prime.shape_string());
  }
  check_lambda(lambda);
  const HiddenState h = encoder.forward_to_layer(Var::constant(x), layer);
  const HiddenState hp = encoder.forward_to_layer(Var::constant(x_prime), layer);
  const std::vector<double> lambdas(x.rows(), lambda);
  HiddenState mixed{layer, mix_hidden(h.activations, hp.activations, lambdas)};

  TmixResult out;
  out.logits = encoder.forward_from_layer(mixed);
  out.mixed_targets = Matrix(y.rows(), y.cols());
  for (std::size_t i = 0; i < y.size(); ++i) out.mixed_targets[i] = lambda * y[i] + (1.0 - lambda) * y_prime[i];
  return out;
}

PtmixResult ptmix_forward(const Encoder& encoder, const Matrix& x, const Matrix& x_prime,
                          std::span<const MixTarget> targets, std::span<const MixTarget> targets_prime,
                          std::size_t layer) {
  if (!x.same_shape(x_prime)) {
    throw DimensionError("ptmix_forward: inputs " + x.shape_string() + " vs " + x_prime.shape_string());
  }
  if (targets.size() != x.rows() || targets_prime.size() != x.rows()) {
    throw DimensionError("ptmix_forward: one target per input row required");
  }
  PtmixResult out;
  out.lambdas.resize(x.rows());
  const std::size_t classes = targets.empty() ? 0 : targets[0].probs().size();
  out.mixed_targets = Matrix(x.rows(), classes);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double lam = confidence_lambda(targets[i].confidence(), targets_prime[i].confidence());
    out.lambdas[i] = lam;
    const ProbVector ym = mixup_labels(targets[i].probs(), targets_prime[i].probs(), lam);
    if (ym.size() != classes) throw DimensionError("ptmix_forward: inconsistent class count");
    std::copy(ym.begin(), ym.end(), out.mixed_targets.row(i).begin());
  }
  const HiddenState h = encoder.forward_to_layer(Var::constant(x), layer);
  const HiddenState hp = encoder.forward_to_layer(Var::constant(x_prime), layer);
  out.mixed_hidden = mix_hidden(h.activations, hp.activations, out.lambdas);
  out.logits = encoder.forward_from_layer({layer, out.mixed_hidden});
  return out;
}

std::vector<MixPair> pair_batch(std::size_t n_labeled, std::size_t n_unlabeled, Rng& rng) {
  const std::size_t n = n_labeled + n_unlabeled;
  if (n == 0) throw DataError("pair_batch: empty batch");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto origin = [&](std::size_t i) { return i < n_labeled ? Origin::Labeled : Origin::Unlabeled; };
  std::vector<MixPair> pairs(n);
  for (std::size_t i = 0; i < n; ++i) pairs[i] = {i, perm[i], 1.0, origin(i), origin(perm[i])};
  return pairs;
}

void assign_lambdas(std::vector<MixPair>& pairs, const MixPolicy& policy, std::span<const double> confidences,
                    Rng& rng, bool use_mixtext_max) {
  policy.validate();
  if (policy.mode == MixMode::BetaRandom) {
    double lam = sample_lambda_beta(policy.alpha, rng);
    if (use_mixtext_max) lam = mixtext_lambda(lam);
    for (auto& p : pairs) p.lambda = lam;
    return;
  }
  for (auto& p : pairs) {
    if (p.index_q >= confidences.size() || p.index_p >= confidences.size()) {
      throw ContractError("assign_lambdas: missing confidence for pair");
    }
    p.lambda = confidence_lambda(confidences[p.index_q], confidences[p.index_p]);
  }
}

Matrix mix_targets(std::span<const MixPair> pairs, const Matrix& targets) {
  Matrix out(pairs.size(), targets.cols());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (p.index_q >= targets.rows() || p.index_p >= targets.rows()) {
      throw ContractError("mix_targets: pair " + std::to_string(i) + " has no target");
    }
    auto yq = targets.row(p.index_q);
    auto yp = targets.row(p.index_p);
    auto o = out.row(i);
    for (std::size_t j = 0; j < o.size(); ++j) o[j] = p.lambda * yq[j] + (1.0 - p.lambda) * yp[j];
  }
  return out;
}

}  // namespace fpmt
