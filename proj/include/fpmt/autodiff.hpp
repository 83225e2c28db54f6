#pragma once

// Reverse-mode differentiation over dense matrices.
//
// A Var is a shared handle to a graph node. Operations build new nodes that
// remember their parents and a local backward rule; backward() walks the
// graph in reverse topological order and accumulates gradients into every
// node that requires them. Leaves created with Var::parameter keep their
// gradients across backward calls until zero_grad().

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fpmt/matrix.hpp"

namespace fpmt {

struct Node {
  Matrix value;
  Matrix grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;
  bool leaf = true;
  std::string op;
};

class Var {
 public:
  Var() = default;

  static Var constant(Matrix value);
  static Var parameter(Matrix value);

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() { return node_->grad; }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->leaf; }
  const std::string& op() const { return node_->op; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  bool valid() const { return static_cast<bool>(node_); }

  // A constant copy of this node's value, cut off from the graph.
  Var detach() const { return constant(node_->value); }

  void zero_grad();

  Node& node() { return *node_; }
  const Node& node() const { return *node_; }
  const std::shared_ptr<Node>& handle() const { return node_; }

  // Builds an operation node. When no parent requires a gradient, or a
  // NoGradGuard is active, the result is a constant and `backward` is
  // discarded. Used by the built-in ops and available for custom ones.
  static Var make_op(std::string op, Matrix value, std::vector<Var> parents,
                     std::function<void(Node&)> backward);

 private:
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

// While alive on a thread, every op produces constants.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Clamp applied by callers before every log.
inline constexpr double kLogEps = 1e-12;

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
// x (n x m) plus a 1 x m row broadcast over rows.
Var add_row(const Var& x, const Var& row);
Var mul(const Var& a, const Var& b);
// x (n x m) with row i multiplied by col(i, 0); col is n x 1.
Var mul_col(const Var& x, const Var& col);
Var scale(const Var& a, double s);
Var tanh(const Var& a);
Var relu(const Var& a);
// n x m -> n x 1, mean across each row.
Var row_mean(const Var& a);
// n x m -> n x 1, sum across each row.
Var row_sum(const Var& a);
// Natural log; any entry <= 0 raises DomainError.
Var log(const Var& a);
Var clamp_min(const Var& a, double floor);
// log(1 + exp(a)) computed without overflow.
Var softplus(const Var& a);
Var softmax(const Var& logits);
// Sum of all entries as a 1x1 node.
Var sum(const Var& a);
Var mean(const Var& a);
Var gather_rows(const Var& a, std::vector<std::size_t> indices);

enum class OpKind { Matmul, Add, Multiply, Scale, Tanh, Relu, RowMean, Log };

// Dispatches one of the named primitives; `scalar` is used by Scale.
Var forward_primitive(OpKind kind, std::span<const Var> inputs, double scalar = 1.0);

// Back-propagates from a 1x1 node. Parameter gradients accumulate across calls.
void backward(const Var& loss);

// Named, ordered collection of parameter leaves. Copies are deep.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet& other);
  ParameterSet& operator=(const ParameterSet& other);
  ParameterSet(ParameterSet&&) noexcept = default;
  ParameterSet& operator=(ParameterSet&&) noexcept = default;

  // Returns a handle sharing the stored node.
  Var add(std::string name, Matrix value);
  const Var& get(const std::string& name) const;
  Var& get(const std::string& name);
  bool contains(const std::string& name) const;
  const Var& at(std::size_t i) const { return entries_[i].second; }
  Var& at(std::size_t i) { return entries_[i].second; }
  const std::string& name_at(std::size_t i) const { return entries_[i].first; }

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad();
  // Parameter values equal entry by entry, names and order included.
  bool values_equal(const ParameterSet& other) const;

 private:
  std::vector<std::pair<std::string, Var>> entries_;
};

}  // namespace fpmt
