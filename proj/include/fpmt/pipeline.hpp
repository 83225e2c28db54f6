#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fpmt/data.hpp"
#include "fpmt/encoder.hpp"
#include "fpmt/gan.hpp"
#include "fpmt/losses.hpp"
#include "fpmt/metrics.hpp"
#include "fpmt/mixing.hpp"

namespace fpmt {

// MT: Beta λ, no GAN. PMT: confidence λ, no GAN. FPMT: confidence λ + GAN.
enum class Variant { MT, PMT, FPMT };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

struct PipelineConfig {
  std::size_t stage1_epochs = 20;
  std::size_t stage2_epochs = 30;
  std::size_t stage3_epochs = 50;
  std::size_t batch_size = 64;

  // Raw rates are the BERT-scale values; the effective rate is rate·lr_scale.
  double lr_encoder = 1e-5;
  double lr_head = 1e-3;
  double lr_scale = 100.0;

  Variant variant = Variant::FPMT;
  MixPolicy mix_policy = MixPolicy::confidence();
  bool gan_enabled = true;
  bool mixtext_lambda_max = false;
  // Labeled rows only: no GAN, no stage 3; stage 2 runs stage2+stage3 epochs.
  bool supervised_only = false;

  std::size_t mix_layer = 0;  // 0: ceil(0.75·depth)
  std::size_t depth = 6;
  std::size_t width = 32;
  Activation activation = Activation::Tanh;

  double w_max = 1.0;
  double w_ramp_fraction = 0.2;
  KlDirection kl_direction = KlDirection::ModelFirst;

  double mask_rate = 0.15;

  std::size_t labels_per_class = 100;
  std::size_t unlabeled_per_class = 5000;
  std::size_t test_per_class = 500;

  std::uint64_t seed = 1;
  GanConfig gan;

  // Sets gan_enabled and the λ source to match the variant.
  void apply_variant(Variant v);
  void validate() const;

  double trunk_rate() const { return lr_encoder * lr_scale; }
  double head_rate() const { return lr_head * lr_scale; }

  // `key = value`; unknown keys raise ConfigError.
  void set(const std::string& key, const std::string& value);
  static bool is_key(const std::string& key);
};

// Reads `key = value` lines ('#' starts a comment) into `config`.
void read_config(std::istream& in, PipelineConfig& config);
PipelineConfig load_config(const std::filesystem::path& path);

enum class Stage { Pretrain = 1, Supervised = 2, SemiSupervised = 3 };

struct EpochRecord {
  std::size_t epoch = 0;  // global, 1-based
  Stage stage = Stage::Pretrain;
  // Stage 1 reports the masked reconstruction MSE as the supervised term.
  LossBreakdown loss;
};

struct TrainReport {
  std::vector<EpochRecord> history;
  std::array<std::size_t, 3> stage_epochs{};
  std::array<double, 3> stage_seconds{};
  std::optional<Metrics> final_metrics;
  std::uint64_t seed = 0;
  std::vector<std::string> log;
};

// epoch,stage,L_x,L_u,w,L_total rows; wall-clock is not written.
void write_report_csv(const TrainReport& report, std::ostream& out);

struct TrainHooks {
  // Called once per stage-3 batch, after pseudo-labeling, with the number of
  // optimizer steps taken so far in stage 3.
  std::function<void(std::size_t step, const Encoder& encoder)> on_pseudo_label;
};

void stage1_pretrain(Encoder& encoder, const Matrix& features, const PipelineConfig& config, TrainReport& report);
void stage2_supervised(Encoder& encoder, const Dataset& labeled, const PipelineConfig& config, TrainReport& report);
void stage3_semisupervised(Encoder& encoder, const Dataset& labeled, const Dataset& unlabeled,
                           const PipelineConfig& config, TrainReport& report, const TrainHooks& hooks = {});

// w at stage-3 step `step` of `total_steps`: linear ramp 0 → w_max over the
// first w_ramp_fraction of the steps, constant afterwards.
double consistency_weight(const PipelineConfig& config, std::size_t step, std::size_t total_steps);

Metrics evaluate(const Encoder& encoder, const Dataset& test);

struct RunResult {
  Encoder encoder;
  NormStats norm;
  TrainReport report;
  Metrics metrics;
};

// standardize → hold out test → (GAN balance) → labeled/unlabeled split →
// stage 1 → stage 2 → stage 3 → evaluate on the held-out test rows.
RunResult run_fpmt(const Dataset& raw, const PipelineConfig& config, const TrainHooks& hooks = {});
RunResult run_fpmt(const std::filesystem::path& csv, const PipelineConfig& config);

}  // namespace fpmt
