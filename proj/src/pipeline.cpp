#include "fpmt/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

#include "fpmt/error.hpp"
#include "fpmt/optim.hpp"
#include "fpmt/random.hpp"

namespace fpmt {
namespace {

using Clock = std::chrono::steady_clock;

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::Pretrain: return "pretrain";
    case Stage::Supervised: return "supervised";
    case Stage::SemiSupervised: return "semisupervised";
  }
  return "?";
}

// Shuffled index order, refilled when exhausted.
class Cycler {
 public:
  Cycler(std::size_t n, Rng& rng) : n_(n), rng_(rng) { refill(); }

  std::vector<std::size_t> take(std::size_t k) {
    std::vector<std::size_t> out;
    out.reserve(k);
    while (out.size() < k) {
      if (pos_ == order_.size()) refill();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void refill() {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), 0);
    std::shuffle(order_.begin(), order_.end(), rng_);
    pos_ = 0;
  }
  std::size_t n_;
  Rng& rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch)));
  }
  return out;
}

void check_finite(double loss, Stage stage, std::size_t epoch) {
  if (!std::isfinite(loss)) {
    throw TrainingError(std::string(stage_name(stage)) + ": non-finite loss at epoch " + std::to_string(epoch));
  }
}

template <typename F>
void tagged(Stage stage, std::size_t epoch, F&& f) {
  try {
    f();
  } catch (const DomainError& e) {
    throw TrainingError(std::string(stage_name(stage)) + ": " + e.what() + " at epoch " + std::to_string(epoch));
  }
}

std::size_t global_epoch(const TrainReport& r) { return r.history.size() + 1; }

// Re-raises `e` as the same error category with the stage name prepended.
template <typename F>
auto in_stage(const char* stage, F&& f) -> decltype(f()) {
  const auto tag = [stage](const std::exception& e) { return std::string("[") + stage + "] " + e.what(); };
  try {
    return f();
  } catch (const TrainingError& e) {
    throw TrainingError(tag(e));
  } catch (const DataError& e) {
    throw DataError(tag(e));
  } catch (const ConfigError& e) {
    throw ConfigError(tag(e));
  } catch (const DomainError& e) {
    throw DomainError(tag(e));
  } catch (const DimensionError& e) {
    throw DimensionError(tag(e));
  } catch (const ContractError& e) {
    throw ContractError(tag(e));
  } catch (const ProtocolError& e) {
    throw ProtocolError(tag(e));
  } catch (const Error& e) {
    throw Error(tag(e));
  }
}

}  // namespace

void write_report_csv(const TrainReport& report, std::ostream& out) {
  out << "epoch,stage,L_x,L_u,w,L_total\n";
  for (const auto& e : report.history) {
    out << e.epoch << ',' << stage_name(e.stage) << ',' << format_real(e.loss.supervised) << ','
        << format_real(e.loss.consistency) << ',' << format_real(e.loss.weight) << ',' << format_real(e.loss.total)
        << '\n';
  }
}

double consistency_weight(const PipelineConfig& config, std::size_t step, std::size_t total_steps) {
  const double ramp = config.w_ramp_fraction * static_cast<double>(total_steps);
  if (ramp <= 0.0) return config.w_max;
  return config.w_max * std::min(1.0, static_cast<double>(step) / ramp);
}

void stage1_pretrain(Encoder& encoder, const Matrix& features, const PipelineConfig& config, TrainReport& report) {
  const auto start = Clock::now();
  if (features.rows() == 0) throw DataError("stage1: no training rows");
  Rng rng = make_rng(config.seed, 11);
  std::bernoulli_distribution masked(config.mask_rate);
  std::uniform_int_distribution<std::size_t> any_col(0, features.cols() - 1);
  const double rate = config.trunk_rate();
  // The classification head takes no part in reconstruction.
  SgdOptimizer opt([rate](const std::string& name) { return Encoder::is_class_head(name) ? 0.0 : rate; });

  for (std::size_t ep = 0; ep < config.stage1_epochs; ++ep) {
    const std::size_t epoch = global_epoch(report);
    double total = 0.0;
    std::size_t batches = 0;
    for (const auto& idx : epoch_batches(features.rows(), config.batch_size, rng)) {
      const Matrix x = select_rows(features, idx);
      Matrix mask(x.rows(), x.cols());
      for (double& m : mask.data()) m = masked(rng) ? 1.0 : 0.0;
      if (std::all_of(mask.data().begin(), mask.data().end(), [](double m) { return m == 0.0; })) {
        mask(0, any_col(rng)) = 1.0;
      }
      Matrix input = x;
      for (std::size_t i = 0; i < input.size(); ++i) {
        if (mask[i] == 1.0) input[i] = 0.0;
      }
      tagged(Stage::Pretrain, epoch, [&] {
        encoder.parameters().zero_grad();
        Var loss = masked_recon_loss(x, mask, encoder.reconstruct(Var::constant(input)));
        check_finite(loss.value()[0], Stage::Pretrain, epoch);
        backward(loss);
        opt.step(encoder.parameters());
        encoder.bump_version();
        total += loss.value()[0];
      });
      ++batches;
    }
    const double mean_loss = total / static_cast<double>(batches);
    report.history.push_back({epoch, Stage::Pretrain, combine(mean_loss, 0.0, 0.0)});
  }
  encoder.parameters().zero_grad();
  report.stage_epochs[0] = config.stage1_epochs;
  report.stage_seconds[0] = std::chrono::duration<double>(Clock::now() - start).count();
}

void stage2_supervised(Encoder& encoder, const Dataset& labeled, const PipelineConfig& config, TrainReport& report) {
  const auto start = Clock::now();
  if (labeled.size() == 0) throw DataError("stage2: labeled split is empty");
  const Matrix x_all = labeled.features();
  const Matrix y_all = labeled.one_hot();
  Rng rng = make_rng(config.seed, 12);
  const double trunk = config.trunk_rate(), head = config.head_rate();
  SgdOptimizer opt([=](const std::string& name) {
    if (Encoder::is_recon_head(name)) return 0.0;
    return Encoder::is_class_head(name) ? head : trunk;
  });

  for (std::size_t ep = 0; ep < config.stage2_epochs; ++ep) {
    const std::size_t epoch = global_epoch(report);
    double total = 0.0;
    std::size_t batches = 0;
    for (const auto& idx : epoch_batches(x_all.rows(), config.batch_size, rng)) {
      tagged(Stage::Supervised, epoch, [&] {
        encoder.parameters().zero_grad();
        Var probs = softmax(encoder.forward_full(Var::constant(select_rows(x_all, idx))));
        Var loss = cross_entropy(Var::constant(select_rows(y_all, idx)), probs);
        check_finite(loss.value()[0], Stage::Supervised, epoch);
        backward(loss);
        opt.step(encoder.parameters());
        encoder.bump_version();
        total += loss.value()[0];
      });
      ++batches;
    }
    const double mean_loss = total / static_cast<double>(batches);
    report.history.push_back({epoch, Stage::Supervised, combine(mean_loss, 0.0, 0.0)});
  }
  encoder.parameters().zero_grad();
  report.stage_epochs[1] = config.stage2_epochs;
  report.stage_seconds[1] = std::chrono::duration<double>(Clock::now() - start).count();
}

void stage3_semisupervised(Encoder& encoder, const Dataset& labeled, const Dataset& unlabeled,
                           const PipelineConfig& config, TrainReport& report, const TrainHooks& hooks) {
  const auto start = Clock::now();
  if (labeled.size() == 0) throw DataError("stage3: labeled split is empty");
  const Matrix xl_all = labeled.features();
  const Matrix yl_all = labeled.one_hot();
  const Matrix xu_all = unlabeled.features();
  const std::size_t layer = encoder.config().effective_mix_layer();
  const bool supervised_fallback = unlabeled.size() == 0;
  if (supervised_fallback && config.stage3_epochs > 0) {
    report.log.push_back("stage3: unlabeled split is empty; falling back to supervised batches");
  }

  Rng rng = make_rng(config.seed, 13);
  Cycler labeled_cycle(xl_all.rows(), rng);
  const double trunk = config.trunk_rate(), head = config.head_rate();
  SgdOptimizer opt([=](const std::string& name) {
    if (Encoder::is_recon_head(name)) return 0.0;
    return Encoder::is_class_head(name) ? head : trunk;
  });

  const std::size_t pool = supervised_fallback ? xl_all.rows() : xu_all.rows();
  const std::size_t steps_per_epoch = (pool + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = steps_per_epoch * config.stage3_epochs;
  std::size_t step = 0;

  for (std::size_t ep = 0; ep < config.stage3_epochs; ++ep) {
    const std::size_t epoch = global_epoch(report);
    double sum_x = 0.0, sum_u = 0.0, sum_total = 0.0, w = 0.0;
    std::size_t batches = 0;
    for (const auto& u_idx : epoch_batches(pool, config.batch_size, rng)) {
      w = consistency_weight(config, step, total_steps);
      tagged(Stage::SemiSupervised, epoch, [&] {
        const std::vector<std::size_t> l_idx = labeled_cycle.take(u_idx.size());
        const Matrix xl = select_rows(xl_all, l_idx);
        const Matrix yl = select_rows(yl_all, l_idx);
        Matrix x = xl, targets = yl;
        std::vector<double> confidence(xl.rows(), 1.0);
        std::size_t n_unlabeled = 0;
        if (!supervised_fallback) {
          const Matrix xu = select_rows(xu_all, u_idx);
          // Pseudo-labels come from the encoder state entering this batch and
          // enter the loss as constants.
          const auto pseudo = encoder.pseudo_label(xu);
          if (hooks.on_pseudo_label) hooks.on_pseudo_label(step, encoder);
          Matrix yu(xu.rows(), yl_all.cols());
          for (std::size_t i = 0; i < pseudo.size(); ++i) {
            std::copy(pseudo[i].probs.begin(), pseudo[i].probs.end(), yu.row(i).begin());
            confidence.push_back(pseudo[i].confidence);
          }
          x = vstack(xl, xu);
          targets = vstack(yl, yu);
          n_unlabeled = xu.rows();
        }

        std::vector<MixPair> pairs = pair_batch(xl.rows(), n_unlabeled, rng);
        assign_lambdas(pairs, config.mix_policy, confidence, rng, config.mixtext_lambda_max);
        std::vector<std::size_t> partner(pairs.size());
        std::vector<double> lambdas(pairs.size());
        for (std::size_t i = 0; i < pairs.size(); ++i) {
          partner[i] = pairs[i].index_p;
          lambdas[i] = pairs[i].lambda;
        }

        encoder.parameters().zero_grad();
        const HiddenState h = encoder.forward_to_layer(Var::constant(x), layer);
        const Var h_partner = gather_rows(h.activations, partner);
        const Var logits = encoder.forward_from_layer({layer, mix_hidden(h.activations, h_partner, lambdas)});
        const RoutedLoss routed =
            route_losses(pairs, logits, mix_targets(pairs, targets), w, config.kl_direction);
        check_finite(routed.breakdown.total, Stage::SemiSupervised, epoch);
        backward(routed.total);
        opt.step(encoder.parameters());
        encoder.bump_version();
        sum_x += routed.breakdown.supervised;
        sum_u += routed.breakdown.consistency;
        sum_total += routed.breakdown.total;
      });
      ++batches;
      ++step;
    }
    const double n = static_cast<double>(batches);
    LossBreakdown mean{sum_x / n, sum_u / n, w, sum_total / n};
    report.history.push_back({epoch, Stage::SemiSupervised, mean});
  }
  encoder.parameters().zero_grad();
  report.stage_epochs[2] = config.stage3_epochs;
  report.stage_seconds[2] = std::chrono::duration<double>(Clock::now() - start).count();
}

Metrics evaluate(const Encoder& encoder, const Dataset& test) {
  std::vector<std::size_t> truths;
  truths.reserve(test.size());
  for (const auto& s : test.samples) truths.push_back(class_of(s.label));
  return compute_metrics(encoder.predict(test.features()), truths);
}

RunResult run_fpmt(const Dataset& raw, const PipelineConfig& config, const TrainHooks& hooks) {
  config.validate();

  const Dataset standardized = in_stage("standardize", [&] { return standardize(raw); });
  auto [pool, test] = in_stage("split", [&] { return hold_out_test(standardized, config.test_per_class, config.seed); });

  // Test rows are held out before augmentation so they stay real.
  const bool use_gan = config.gan_enabled && !config.supervised_only;
  if (use_gan) {
    pool = in_stage("augment", [&] {
      const auto counts = pool.class_counts();
      const std::size_t target = std::max(config.labels_per_class + config.unlabeled_per_class,
                                          *std::max_element(counts.begin(), counts.end()));
      GanConfig gan = config.gan;
      gan.seed = config.seed;
      return balance_and_expand(pool, target, gan);
    });
  }

  const Split parts = in_stage("split", [&] {
    return split_train(pool, config.labels_per_class, config.unlabeled_per_class, config.seed,
                       /*clamp_unlabeled=*/!use_gan);
  });

  EncoderConfig enc_cfg{pool.dim, config.depth, config.width, config.activation, config.mix_layer, 2};
  RunResult result{Encoder(enc_cfg, config.seed), standardized.norm, {}, {}};
  result.report.seed = config.seed;

  in_stage("stage1", [&] {
    stage1_pretrain(result.encoder, vstack(parts.labeled.features(), parts.unlabeled.features()), config,
                    result.report);
  });
  PipelineConfig stage2_config = config;
  if (config.supervised_only) stage2_config.stage2_epochs += config.stage3_epochs;
  in_stage("stage2", [&] { stage2_supervised(result.encoder, parts.labeled, stage2_config, result.report); });
  if (!config.supervised_only) {
    in_stage("stage3", [&] {
      stage3_semisupervised(result.encoder, parts.labeled, parts.unlabeled, config, result.report, hooks);
    });
  }

  result.metrics = in_stage("evaluate", [&] { return evaluate(result.encoder, test); });
  result.report.final_metrics = result.metrics;
  return result;
}

RunResult run_fpmt(const std::filesystem::path& csv, const PipelineConfig& config) {
  return run_fpmt(load_csv(csv), config);
}

}  // namespace fpmt
