#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>

#include "fpmt/error.hpp"
#include "fpmt/pipeline.hpp"

namespace fpmt {
namespace {

constexpr std::array kKeys{
    "stage1_epochs", "stage2_epochs",  "stage3_epochs",      "batch_size",       "lr_encoder",
    "lr_head",       "lr_scale",       "variant",            "mix_policy",       "beta_alpha",
    "gan_enabled",   "mixtext_lambda_max", "supervised_only", "mix_layer",      "E",                "depth",
    "width",         "activation",     "w_max",              "w_ramp_fraction",  "kl_direction",
    "mask_rate",     "labels_per_class", "unlabeled_per_class", "test_per_class", "seed",
    "gan_steps",     "gan_batch",      "gan_lr",             "gan_latent_dim",
};

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "' expects a real number, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("config key '" + key + "' expects a boolean, got '" + v + "'");
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::MT: return "MT";
    case Variant::PMT: return "PMT";
    case Variant::FPMT: return "FPMT";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  std::string lower = s;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "mt") return Variant::MT;
  if (lower == "pmt") return Variant::PMT;
  if (lower == "fpmt") return Variant::FPMT;
  throw ConfigError("unknown variant '" + s + "' (expected mt, pmt or fpmt)");
}

void PipelineConfig::apply_variant(Variant v) {
  variant = v;
  gan_enabled = v == Variant::FPMT;
  const double alpha = mix_policy.alpha;
  mix_policy = v == Variant::MT ? MixPolicy::beta(alpha) : MixPolicy::confidence();
  mix_policy.alpha = alpha;
}

void PipelineConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr_encoder > 0.0) || !(lr_head > 0.0) || !(lr_scale > 0.0)) throw ConfigError("learning rates must be > 0");
  if (!(w_max >= 0.0)) throw ConfigError("w_max must be >= 0");
  if (!(w_ramp_fraction >= 0.0 && w_ramp_fraction <= 1.0)) throw ConfigError("w_ramp_fraction must lie in [0, 1]");
  if (!(mask_rate > 0.0 && mask_rate < 1.0)) throw ConfigError("mask_rate must lie in (0, 1)");
  if (labels_per_class < 1 || unlabeled_per_class < 1 || test_per_class < 1) {
    throw ConfigError("labels/unlabeled/test per class must be >= 1");
  }
  mix_policy.validate();
  EncoderConfig enc{1, depth, width, activation, mix_layer, 2};
  enc.validate();
  if (gan_enabled && !supervised_only) gan.validate();
}

bool PipelineConfig::is_key(const std::string& key) {
  return std::find(kKeys.begin(), kKeys.end(), key) != kKeys.end();
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "stage1_epochs") stage1_epochs = to_u64(key, v);
  else if (key == "stage2_epochs") stage2_epochs = to_u64(key, v);
  else if (key == "stage3_epochs") stage3_epochs = to_u64(key, v);
  else if (key == "batch_size") batch_size = to_u64(key, v);
  else if (key == "lr_encoder") lr_encoder = to_double(key, v);
  else if (key == "lr_head") lr_head = to_double(key, v);
  else if (key == "lr_scale") lr_scale = to_double(key, v);
  else if (key == "variant") apply_variant(parse_variant(v));
  else if (key == "mix_policy") {
    if (v == "beta") mix_policy.mode = MixMode::BetaRandom;
    else if (v == "confidence") mix_policy.mode = MixMode::ConfidenceRatio;
    else throw ConfigError("mix_policy must be beta or confidence, got '" + v + "'");
  }
  else if (key == "beta_alpha") mix_policy.alpha = to_double(key, v);
  else if (key == "gan_enabled") gan_enabled = to_bool(key, v);
  else if (key == "mixtext_lambda_max") mixtext_lambda_max = to_bool(key, v);
  else if (key == "supervised_only") supervised_only = to_bool(key, v);
  else if (key == "mix_layer" || key == "E") mix_layer = to_u64(key, v);
  else if (key == "depth") depth = to_u64(key, v);
  else if (key == "width") width = to_u64(key, v);
  else if (key == "activation") activation = parse_activation(v);
  else if (key == "w_max") w_max = to_double(key, v);
  else if (key == "w_ramp_fraction") w_ramp_fraction = to_double(key, v);
  else if (key == "kl_direction") {
    if (v == "model_first") kl_direction = KlDirection::ModelFirst;
    else if (v == "target_first" || v == "mixtext") kl_direction = KlDirection::TargetFirst;
    else throw ConfigError("kl_direction must be model_first or target_first, got '" + v + "'");
  }
  else if (key == "mask_rate") mask_rate = to_double(key, v);
  else if (key == "labels_per_class") labels_per_class = to_u64(key, v);
  else if (key == "unlabeled_per_class") unlabeled_per_class = to_u64(key, v);
  else if (key == "test_per_class") test_per_class = to_u64(key, v);
  else if (key == "seed") seed = to_u64(key, v);
  else if (key == "gan_steps") gan.steps = to_u64(key, v);
  else if (key == "gan_batch") gan.batch = to_u64(key, v);
  else if (key == "gan_lr") gan.lr = to_double(key, v);
  else if (key == "gan_latent_dim") gan.latent_dim = to_u64(key, v);
  else throw ConfigError("unknown config key '" + key + "'");
}

void read_config(std::istream& in, PipelineConfig& config) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", lineno);
    try {
      config.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  PipelineConfig config;
  read_config(in, config);
  return config;
}

}  // namespace fpmt
