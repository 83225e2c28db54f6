#include "fpmt/gan.hpp"

#include <algorithm>
#include <cmath>

#include "fpmt/error.hpp"
#include "fpmt/optim.hpp"

namespace fpmt {

void GanConfig::validate() const {
  if (latent_dim < 1) throw ConfigError("gan latent_dim must be >= 1");
  if (steps < 1) throw ConfigError("gan steps must be >= 1");
  if (batch < 1) throw ConfigError("gan batch must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("gan lr must be > 0");
}

namespace {

void add_dense_stack(ParameterSet& ps, const std::string& prefix, std::size_t in, const std::vector<std::size_t>& hidden,
                     std::size_t out, Rng& rng) {
  std::vector<std::size_t> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const double limit = std::sqrt(6.0 / static_cast<double>(sizes[i] + sizes[i + 1]));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix w(sizes[i], sizes[i + 1]);
    for (double& v : w.data()) v = dist(rng);
    ps.add(prefix + std::to_string(i) + ".weight", std::move(w));
    ps.add(prefix + std::to_string(i) + ".bias", Matrix(1, sizes[i + 1]));
  }
}

template <typename Act>
Var dense_stack(const ParameterSet& ps, Var h, Act activation) {
  const std::size_t layers = ps.size() / 2;
  for (std::size_t i = 0; i < layers; ++i) {
    h = add_row(matmul(h, ps.at(2 * i)), ps.at(2 * i + 1));
    if (i + 1 < layers) h = activation(h);
  }
  return h;
}

}  // namespace

GanModel init_gan(std::size_t dim, const GanConfig& config, std::size_t class_id) {
  config.validate();
  Rng rng = make_rng(config.seed, 0x6A40 + class_id);
  GanModel m;
  m.latent_dim = config.latent_dim;
  m.dim = dim;
  m.class_id = class_id;
  add_dense_stack(m.generator, "gen", config.latent_dim, config.gen_widths, dim, rng);
  add_dense_stack(m.discriminator, "disc", dim, config.disc_widths, 1, rng);
  return m;
}

Var generator_forward(const GanModel& model, const Var& z) {
  return dense_stack(model.generator, z, [](const Var& v) { return tanh(v); });
}

Var discriminator_logits(const GanModel& model, const Var& x) {
  return dense_stack(model.discriminator, x, [](const Var& v) { return relu(v); });
}

Var discriminator_loss(const GanModel& model, const Matrix& real, const Matrix& z) {
  Var real_logits = discriminator_logits(model, Var::constant(real));
  Var fake_logits = discriminator_logits(model, generator_forward(model, Var::constant(z)));
  // −log σ(a) = softplus(−a); −log(1 − σ(a)) = softplus(a).
  return add(mean(softplus(scale(real_logits, -1.0))), mean(softplus(fake_logits)));
}

Var generator_loss(const GanModel& model, const Matrix& z) {
  Var fake_logits = discriminator_logits(model, generator_forward(model, Var::constant(z)));
  return mean(softplus(scale(fake_logits, -1.0)));
}

Matrix sample_latent(std::size_t n, std::size_t latent_dim, Rng& rng) {
  std::normal_distribution<double> unit(0.0, 1.0);
  Matrix z(n, latent_dim);
  for (double& v : z.data()) v = unit(rng);
  return z;
}

GanModel train_gan(const Matrix& real, const GanConfig& config, std::size_t class_id) {
  config.validate();
  if (real.rows() < 2 * config.batch) {
    throw DataError("train_gan: class " + std::to_string(class_id) + " has " + std::to_string(real.rows()) +
                    " rows, needs at least " + std::to_string(2 * config.batch));
  }
  GanModel model = init_gan(real.cols(), config, class_id);
  model.feature_bounds.resize(real.cols(), {INFINITY, -INFINITY});
  for (std::size_t i = 0; i < real.rows(); ++i) {
    for (std::size_t k = 0; k < real.cols(); ++k) {
      auto& [lo, hi] = model.feature_bounds[k];
      lo = std::min(lo, real(i, k));
      hi = std::max(hi, real(i, k));
    }
  }

  model.mean.assign(real.cols(), 0.0);
  model.stddev.assign(real.cols(), 0.0);
  const double n = static_cast<double>(real.rows());
  for (std::size_t k = 0; k < real.cols(); ++k) {
    for (std::size_t i = 0; i < real.rows(); ++i) model.mean[k] += real(i, k);
    model.mean[k] /= n;
    for (std::size_t i = 0; i < real.rows(); ++i) model.stddev[k] += (real(i, k) - model.mean[k]) * (real(i, k) - model.mean[k]);
    model.stddev[k] = std::sqrt(model.stddev[k] / n);
    if (model.stddev[k] == 0.0) model.stddev[k] = 1.0;
  }
  Matrix scaled = real;
  for (std::size_t i = 0; i < scaled.rows(); ++i) {
    for (std::size_t k = 0; k < scaled.cols(); ++k) scaled(i, k) = (scaled(i, k) - model.mean[k]) / model.stddev[k];
  }

  Rng rng = make_rng(config.seed, 0x7A11 + class_id);
  std::uniform_int_distribution<std::size_t> pick(0, real.rows() - 1);
  AdamOptimizer d_opt(config.lr);
  AdamOptimizer g_opt(config.lr);
  std::vector<std::size_t> idx(config.batch);
  for (std::size_t step = 0; step < config.steps; ++step) {
    try {
      for (auto& i : idx) i = pick(rng);
      const Matrix batch = select_rows(scaled, idx);
      model.discriminator.zero_grad();
      Var d_loss = discriminator_loss(model, batch, sample_latent(config.batch, config.latent_dim, rng));
      backward(d_loss);
      d_opt.step(model.discriminator);

      model.generator.zero_grad();
      Var g_loss = generator_loss(model, sample_latent(config.batch, config.latent_dim, rng));
      backward(g_loss);
      g_opt.step(model.generator);
      if (!std::isfinite(d_loss.value()[0]) || !std::isfinite(g_loss.value()[0])) {
        throw DomainError("non-finite loss");
      }
    } catch (const DomainError& e) {
      throw TrainingError("train_gan: class " + std::to_string(class_id) + " diverged at step " +
                          std::to_string(step) + ": " + e.what());
    }
  }
  model.discriminator.zero_grad();
  model.generator.zero_grad();
  return model;
}

Matrix generate(const GanModel& model, std::size_t n, Rng& rng) {
  if (n == 0) return Matrix(0, model.dim);
  NoGradGuard guard;
  Matrix out = generator_forward(model, Var::constant(sample_latent(n, model.latent_dim, rng))).value();
  if (model.mean.size() == model.dim) {
    for (std::size_t i = 0; i < out.rows(); ++i) {
      for (std::size_t k = 0; k < out.cols(); ++k) out(i, k) = model.mean[k] + model.stddev[k] * out(i, k);
    }
  }
  if (model.feature_bounds.size() == model.dim) {
    for (std::size_t i = 0; i < out.rows(); ++i) {
      for (std::size_t k = 0; k < out.cols(); ++k) {
        out(i, k) = std::clamp(out(i, k), model.feature_bounds[k].first, model.feature_bounds[k].second);
      }
    }
  }
  return out;
}

Dataset balance_and_expand(const Dataset& ds, std::size_t target_per_class, const GanConfig& config) {
  const auto counts = ds.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) throw DataError("balance_and_expand: class " + std::to_string(c) + " has no samples");
    if (counts[c] > target_per_class) {
      throw ConfigError("balance_and_expand: target " + std::to_string(target_per_class) + " below class " +
                        std::to_string(c) + " count " + std::to_string(counts[c]));
    }
  }
  Dataset out = ds;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == target_per_class) continue;
    Dataset cls;
    cls.dim = ds.dim;
    for (const auto& s : ds.samples) {
      if (s.label != Label::Unlabeled && class_of(s.label) == c) cls.samples.push_back(s);
    }
    if (cls.size() < 2) throw DataError("balance_and_expand: class " + std::to_string(c) + " needs >= 2 rows for a GAN");
    GanConfig cfg = config;
    cfg.batch = std::max<std::size_t>(1, std::min(config.batch, cls.size() / 2));
    const GanModel model = train_gan(cls.features(), cfg, c);
    Rng rng = make_rng(config.seed, 0x6E40 + c);
    const Matrix synth = generate(model, target_per_class - counts[c], rng);
    for (std::size_t i = 0; i < synth.rows(); ++i) {
      auto r = synth.row(i);
      out.samples.push_back({std::vector<double>(r.begin(), r.end()), label_from_class(c), true});
    }
  }
  return out;
}

}  // namespace fpmt
