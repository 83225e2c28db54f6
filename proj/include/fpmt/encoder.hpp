#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fpmt/autodiff.hpp"

namespace fpmt {

enum class Activation { Tanh, Relu };

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

// Probability vector over C classes.
using ProbVector = std::vector<double>;

struct EncoderConfig {
  std::size_t input_dim = 8;
  std::size_t depth = 6;
  std::size_t width = 32;
  Activation activation = Activation::Tanh;
  // 0 selects default_mix_layer(depth).
  std::size_t mix_layer = 0;
  std::size_t class_count = 2;

  // ceil(0.75 · depth): the 9-of-12 placement scaled to this depth.
  static std::size_t default_mix_layer(std::size_t depth);
  std::size_t effective_mix_layer() const { return mix_layer == 0 ? default_mix_layer(depth) : mix_layer; }
  void validate() const;

  // Mix layers compare by effective value, so 0 equals the explicit default.
  bool operator==(const EncoderConfig& o) const {
    return input_dim == o.input_dim && depth == o.depth && width == o.width && activation == o.activation &&
           effective_mix_layer() == o.effective_mix_layer() && class_count == o.class_count;
  }
};

// Activations after layer `layer_index` (0 = raw input).
struct HiddenState {
  std::size_t layer_index = 0;
  Var activations;
};

struct PseudoLabel {
  ProbVector probs;
  double confidence = 0.0;

  // Lowest index among the maxima.
  std::size_t argmax() const;
};

std::size_t argmax_lowest(std::span<const double> values);

// H-layer perceptron trunk with a softmax classification head and a linear
// reconstruction head. Copies are deep.
class Encoder {
 public:
  Encoder(EncoderConfig config, std::uint64_t seed);

  // Every weight and bias zero.
  static Encoder zeros(EncoderConfig config);

  const EncoderConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  HiddenState forward_to_layer(const Var& batch, std::size_t layer) const;
  // Applies layers h.layer_index+1..H and then the classification head.
  Var forward_from_layer(const HiddenState& h) const;
  Var forward_full(const Var& batch) const;
  Var reconstruct(const Var& batch) const;

  Matrix logits(const Matrix& batch) const;
  Matrix predict_proba(const Matrix& batch) const;
  std::vector<PseudoLabel> pseudo_label(const Matrix& batch) const;
  std::vector<std::size_t> predict(const Matrix& batch) const;

  static bool is_class_head(const std::string& param_name);
  static bool is_recon_head(const std::string& param_name);

  // Incremented by the trainer after every optimizer step.
  std::uint64_t version() const { return version_; }
  void bump_version() { ++version_; }

 private:
  explicit Encoder(EncoderConfig config);
  Var layer(const Var& h, std::size_t index) const;
  void check_input(const Matrix& batch) const;

  EncoderConfig config_;
  ParameterSet params_;
  std::uint64_t version_ = 0;
};

}  // namespace fpmt
