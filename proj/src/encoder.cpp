#include "fpmt/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "fpmt/error.hpp"
#include "fpmt/random.hpp"

namespace fpmt {

std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "relu"; }

Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  throw ConfigError("unknown activation '" + s + "' (expected tanh or relu)");
}

std::size_t EncoderConfig::default_mix_layer(std::size_t depth) {
  return static_cast<std::size_t>(std::ceil(0.75 * static_cast<double>(depth)));
}

void EncoderConfig::validate() const {
  if (input_dim < 1) throw ConfigError("encoder input_dim must be >= 1");
  if (depth < 1) throw ConfigError("encoder depth must be >= 1");
  if (width < 2) throw ConfigError("encoder width must be >= 2");
  if (class_count < 2) throw ConfigError("encoder class_count must be >= 2");
  const std::size_t e = effective_mix_layer();
  if (e < 1 || e > depth) {
    throw ConfigError("mix layer " + std::to_string(e) + " outside [1, " + std::to_string(depth) + "]");
  }
}

std::size_t argmax_lowest(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::size_t PseudoLabel::argmax() const { return argmax_lowest(probs); }

Encoder::Encoder(EncoderConfig config) : config_(config) { config_.validate(); }

Encoder::Encoder(EncoderConfig config, std::uint64_t seed) : Encoder(config) {
  Rng rng = make_rng(seed, 0xE7C0);
  auto glorot = [&](std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix w(fan_in, fan_out);
    for (double& v : w.data()) v = dist(rng);
    return w;
  };
  std::size_t in = config_.input_dim;
  for (std::size_t i = 1; i <= config_.depth; ++i) {
    params_.add("layer" + std::to_string(i) + ".weight", glorot(in, config_.width));
    params_.add("layer" + std::to_string(i) + ".bias", Matrix(1, config_.width));
    in = config_.width;
  }
  params_.add("class_head.weight", glorot(config_.width, config_.class_count));
  params_.add("class_head.bias", Matrix(1, config_.class_count));
  params_.add("recon_head.weight", glorot(config_.width, config_.input_dim));
  params_.add("recon_head.bias", Matrix(1, config_.input_dim));
}

Encoder Encoder::zeros(EncoderConfig config) {
  Encoder enc(config, 0);
  for (auto& [name, var] : enc.params_) var.mutable_value().fill(0.0);
  return enc;
}

bool Encoder::is_class_head(const std::string& name) { return name.rfind("class_head.", 0) == 0; }
bool Encoder::is_recon_head(const std::string& name) { return name.rfind("recon_head.", 0) == 0; }

Var Encoder::layer(const Var& h, std::size_t index) const {
  const Var& w = params_.at(2 * (index - 1));
  const Var& b = params_.at(2 * (index - 1) + 1);
  Var pre = add_row(matmul(h, w), b);
  return config_.activation == Activation::Tanh ? tanh(pre) : relu(pre);
}

HiddenState Encoder::forward_to_layer(const Var& batch, std::size_t layer_index) const {
  check_input(batch.value());
  if (layer_index < 1 || layer_index > config_.depth) {
    throw ConfigError("forward_to_layer: layer " + std::to_string(layer_index) + " outside [1, " +
                      std::to_string(config_.depth) + "]");
  }
  Var h = batch;
  for (std::size_t i = 1; i <= layer_index; ++i) h = layer(h, i);
  return {layer_index, h};
}

Var Encoder::forward_from_layer(const HiddenState& state) const {
  if (state.layer_index > config_.depth) {
    throw ConfigError("forward_from_layer: layer " + std::to_string(state.layer_index) + " outside [0, " +
                      std::to_string(config_.depth) + "]");
  }
  const std::size_t expected = state.layer_index == 0 ? config_.input_dim : config_.width;
  if (state.activations.cols() != expected) {
    throw DimensionError("forward_from_layer: hidden state has " + std::to_string(state.activations.cols()) +
                         " columns, layer " + std::to_string(state.layer_index) + " expects " +
                         std::to_string(expected));
  }
  Var h = state.activations;
  for (std::size_t i = state.layer_index + 1; i <= config_.depth; ++i) h = layer(h, i);
  const std::size_t head = 2 * config_.depth;
  return add_row(matmul(h, params_.at(head)), params_.at(head + 1));
}

Var Encoder::forward_full(const Var& batch) const {
  return forward_from_layer(forward_to_layer(batch, config_.depth));
}

Var Encoder::reconstruct(const Var& batch) const {
  HiddenState h = forward_to_layer(batch, config_.depth);
  const std::size_t head = 2 * config_.depth + 2;
  return add_row(matmul(h.activations, params_.at(head)), params_.at(head + 1));
}

void Encoder::check_input(const Matrix& batch) const {
  if (batch.cols() != config_.input_dim) {
    throw DimensionError("encoder expects " + std::to_string(config_.input_dim) + " input features, got batch " +
                         batch.shape_string());
  }
}

Matrix Encoder::logits(const Matrix& batch) const {
  NoGradGuard guard;
  return forward_full(Var::constant(batch)).value();
}

Matrix Encoder::predict_proba(const Matrix& batch) const { return softmax_stable(logits(batch)); }

std::vector<PseudoLabel> Encoder::pseudo_label(const Matrix& batch) const {
  const Matrix probs = predict_proba(batch);
  std::vector<PseudoLabel> out(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto r = probs.row(i);
    out[i].probs.assign(r.begin(), r.end());
    out[i].confidence = r[argmax_lowest(r)];
  }
  return out;
}

std::vector<std::size_t> Encoder::predict(const Matrix& batch) const {
  const Matrix l = logits(batch);
  std::vector<std::size_t> out(l.rows());
  for (std::size_t i = 0; i < l.rows(); ++i) out[i] = argmax_lowest(l.row(i));
  return out;
}

}  // namespace fpmt
