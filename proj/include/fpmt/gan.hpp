#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "fpmt/autodiff.hpp"
#include "fpmt/data.hpp"
#include "fpmt/random.hpp"

namespace fpmt {

struct GanConfig {
  std::size_t latent_dim = 8;
  std::vector<std::size_t> gen_widths{32, 32};
  std::vector<std::size_t> disc_widths{32, 16};
  std::size_t steps = 3000;
  std::size_t batch = 64;
  double lr = 5e-4;
  std::uint64_t seed = 1;

  void validate() const;
};

// Unconditional GAN for one class. Generator: latent -> tanh hidden -> linear
// d outputs. Discriminator: d -> relu hidden -> one logit, D = σ(logit).
struct GanModel {
  ParameterSet generator;
  ParameterSet discriminator;
  std::size_t latent_dim = 0;
  std::size_t dim = 0;
  std::size_t class_id = 0;
  std::vector<std::pair<double, double>> feature_bounds;
  // Both players work on per-feature z-scores of the class rows; generate()
  // maps back with x = mean + stddev·g. Empty means identity.
  std::vector<double> mean;
  std::vector<double> stddev;
};

GanModel init_gan(std::size_t dim, const GanConfig& config, std::size_t class_id = 0);

Var generator_forward(const GanModel& model, const Var& z);
Var discriminator_logits(const GanModel& model, const Var& x);

// −mean[log D(x)] − mean[log(1 − D(G(z)))], written with softplus.
Var discriminator_loss(const GanModel& model, const Matrix& real, const Matrix& z);
// Non-saturating generator objective −mean[log D(G(z))].
Var generator_loss(const GanModel& model, const Matrix& z);

Matrix sample_latent(std::size_t n, std::size_t latent_dim, Rng& rng);

// Alternating Adam updates, one discriminator step then one generator step.
GanModel train_gan(const Matrix& real, const GanConfig& config, std::size_t class_id = 0);

// n rows clamped per feature to the bounds seen in the training data.
Matrix generate(const GanModel& model, std::size_t n, Rng& rng);

// Trains one GAN per class whose count is below `target_per_class` and
// appends synthetic rows until every class holds exactly that many. Real
// rows are kept untouched and in order; Unlabeled rows pass through.
Dataset balance_and_expand(const Dataset& ds, std::size_t target_per_class, const GanConfig& config);

}  // namespace fpmt
