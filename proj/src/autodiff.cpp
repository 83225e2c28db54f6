#include "fpmt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "fpmt/error.hpp"

namespace fpmt {
namespace {

thread_local bool g_grad_enabled = true;

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

// Accumulation target for a parent, or nullptr when it takes no gradient.
Matrix* grad_of(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? &p.grad : nullptr;
}

const Matrix& value_of(const Node& self, std::size_t i) { return self.parents[i]->value; }

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var Var::constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = "constant";
  return Var(std::move(node));
}

Var Var::parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->grad = Matrix(value.rows(), value.cols());
  node->value = std::move(value);
  node->requires_grad = true;
  node->op = "parameter";
  return Var(std::move(node));
}

void Var::zero_grad() {
  if (node_->grad.same_shape(node_->value)) {
    node_->grad.fill(0.0);
  } else {
    node_->grad = Matrix(node_->value.rows(), node_->value.cols());
  }
}

Var Var::make_op(std::string op, Matrix value, std::vector<Var> parents, std::function<void(Node&)> backward) {
  if (!all_finite(value)) throw DomainError(op + ": produced a non-finite value");
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = std::move(op);
  node->leaf = false;
  const bool any = g_grad_enabled && std::any_of(parents.begin(), parents.end(),
                                                 [](const Var& p) { return p.requires_grad(); });
  if (any) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_);
    node->backward_fn = std::move(backward);
  }
  return Var(std::move(node));
}

Var matmul(const Var& a, const Var& b) {
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  if (A.cols() != B.rows()) {
    throw DimensionError("matmul: shape mismatch " + A.shape_string() + " vs " + B.shape_string());
  }
  const std::size_t n = A.rows(), k = A.cols(), m = B.cols();
  Matrix C(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double* c = C.row(i).data();
    const double* arow = A.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = B.row(p).data();
      for (std::size_t j = 0; j < m; ++j) c[j] += av * brow[j];
    }
  }
  return Var::make_op("matmul", std::move(C), {a, b}, [n, k, m](Node& self) {
    const Matrix& G = self.grad;
    const Matrix& A = value_of(self, 0);
    const Matrix& B = value_of(self, 1);
    if (Matrix* gA = grad_of(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) {
        const double* g = G.row(i).data();
        double* out = gA->row(i).data();
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = B.row(p).data();
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += g[j] * brow[j];
          out[p] += acc;
        }
      }
    }
    if (Matrix* gB = grad_of(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) {
        const double* g = G.row(i).data();
        const double* arow = A.row(i).data();
        for (std::size_t p = 0; p < k; ++p) {
          const double av = arow[p];
          double* out = gB->row(p).data();
          for (std::size_t j = 0; j < m; ++j) out[j] += av * g[j];
        }
      }
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return Var::make_op("add", std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (Matrix* g = grad_of(self, k)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return Var::make_op("sub", std::move(out), {a, b}, [](Node& self) {
    if (Matrix* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (Matrix* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

Var add_row(const Var& x, const Var& row) {
  const Matrix& X = x.value();
  const Matrix& R = row.value();
  if (R.rows() != 1 || R.cols() != X.cols()) {
    throw DimensionError("add_row: shape mismatch " + X.shape_string() + " vs " + R.shape_string());
  }
  Matrix out = X;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto o = out.row(i);
    for (std::size_t j = 0; j < o.size(); ++j) o[j] += R[j];
  }
  return Var::make_op("add_row", std::move(out), {x, row}, [](Node& self) {
    if (Matrix* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (Matrix* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.rows(); ++i) {
        auto src = self.grad.row(i);
        for (std::size_t j = 0; j < src.size(); ++j) (*g)[j] += src[j];
      }
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape("mul", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return Var::make_op("mul", std::move(out), {a, b}, [](Node& self) {
    const Matrix& A = value_of(self, 0);
    const Matrix& B = value_of(self, 1);
    if (Matrix* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * B[i];
    }
    if (Matrix* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * A[i];
    }
  });
}

Var mul_col(const Var& x, const Var& col) {
  const Matrix& X = x.value();
  const Matrix& C = col.value();
  if (C.cols() != 1 || C.rows() != X.rows()) {
    throw DimensionError("mul_col: shape mismatch " + X.shape_string() + " vs " + C.shape_string());
  }
  Matrix out = X;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (double& v : out.row(i)) v *= C[i];
  }
  return Var::make_op("mul_col", std::move(out), {x, col}, [](Node& self) {
    const Matrix& X = value_of(self, 0);
    const Matrix& C = value_of(self, 1);
    if (Matrix* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < X.rows(); ++i) {
        auto src = self.grad.row(i);
        auto dst = g->row(i);
        for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j] * C[i];
      }
    }
    if (Matrix* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < X.rows(); ++i) {
        auto src = self.grad.row(i);
        auto xr = X.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < src.size(); ++j) acc += src[j] * xr[j];
        (*g)[i] += acc;
      }
    }
  });
}

Var scale(const Var& a, double s) {
  Matrix out = a.value();
  for (double& v : out.data()) v *= s;
  return Var::make_op("scale", std::move(out), {a}, [s](Node& self) {
    if (Matrix* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * s;
    }
  });
}

Var tanh(const Var& a) {
  Matrix out = a.value();
  for (double& v : out.data()) v = std::tanh(v);
  return Var::make_op("tanh", std::move(out), {a}, [](Node& self) {
    if (Matrix* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        const double y = self.value[i];
        (*g)[i] += self.grad[i] * (1.0 - y * y);
      }
    }
  });
}

Var relu(const Var& a) {
  Matrix out = a.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return Var::make_op("relu", std::move(out), {a}, [](Node& self) {
    const Matrix& A = value_of(self, 0);
    if (Matrix* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        if (A[i] > 0.0) (*g)[i] += self.grad[i];
      }
    }
  });
}

Var row_mean(const Var& a) {
  const Matrix& A = a.value();
  if (A.cols() == 0) throw DimensionError("row_mean: no columns in " + A.shape_string());
  Matrix out(A.rows(), 1);
  for (std::size_t i = 0; i < A.rows(); ++i) {
    double acc = 0.0;
    for (double v : A.row(i)) acc += v;
    out[i] = acc / static_cast<double>(A.cols());
  }
  return Var::make_op("row_mean", std::move(out), {a}, [](Node& self) {
    if (Matrix* g = grad_of(self, 0)) {
      const double inv = 1.0 / static_cast<double>(g->cols());
      for (std::size_t i = 0; i < g->rows(); ++i) {
        for (double& v : g->row(i)) v += self.grad[i] * inv;
      }
    }
  });
}

Var row_sum(const Var& a) {
  const Matrix& A = a.value();
  Matrix out(A.rows(), 1);
  for (std::size_t i = 0; i < A.rows(); ++i) {
    double acc = 0.0;
    for (double v : A.row(i)) acc += v;
    out[i] = acc;
  }
  return Var::make_op("row_sum", std::move(out), {a}, [](Node& self) {
    if (Matrix* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->rows(); ++i) {
        for (double& v : g->row(i)) v += self.grad[i];
      }
    }
  });
}

Var log(const Var& a) {
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(out[i] > 0.0)) {
      throw DomainError("log: non-positive entry " + std::to_string(out[i]) + " at flat index " + std::to_string(i));
    }
    out[i] = std::log(out[i]);
  }
  return Var::make_op("log", std::move(out), {a}, [](Node& self) {
    const Matrix& A = value_of(self, 0);
    if (Matrix* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] / A[i];
    }
  });
}

Var clamp_min(const Var& a, double floor) {
  Matrix out = a.value();
  for (double& v : out.data()) v = std::max(v, floor);
  return Var::make_op("clamp_min", std::move(out), {a}, [floor](Node& self) {
    const Matrix& A = value_of(self, 0);
    if (Matrix* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        if (A[i] > floor) (*g)[i] += self.grad[i];
      }
    }
  });
}

Var softplus(const Var& a) {
  Matrix out = a.value();
  for (double& v : out.data()) v = std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
  return Var::make_op("softplus", std::move(out), {a}, [](Node& self) {
    const Matrix& A = value_of(self, 0);
    if (Matrix* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        const double x = A[i];
        const double sig = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        (*g)[i] += self.grad[i] * sig;
      }
    }
  });
}

Var softmax(const Var& logits) {
  return Var::make_op("softmax", softmax_stable(logits.value()), {logits}, [](Node& self) {
    if (Matrix* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.value.rows(); ++i) {
        auto y = self.value.row(i);
        auto up = self.grad.row(i);
        double dot = 0.0;
        for (std::size_t j = 0; j < y.size(); ++j) dot += up[j] * y[j];
        auto dst = g->row(i);
        for (std::size_t j = 0; j < y.size(); ++j) dst[j] += y[j] * (up[j] - dot);
      }
    }
  });
}

Var sum(const Var& a) {
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  return Var::make_op("sum", Matrix(1, 1, acc), {a}, [](Node& self) {
    if (Matrix* g = grad_of(self, 0)) {
      const double up = self.grad[0];
      for (double& v : g->data()) v += up;
    }
  });
}

Var mean(const Var& a) {
  if (a.value().empty()) throw DimensionError("mean of empty matrix");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var gather_rows(const Var& a, std::vector<std::size_t> indices) {
  Matrix out = select_rows(a.value(), indices);
  return Var::make_op("gather_rows", std::move(out), {a}, [idx = std::move(indices)](Node& self) {
    if (Matrix* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < idx.size(); ++i) {
        auto src = self.grad.row(i);
        auto dst = g->row(idx[i]);
        for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
      }
    }
  });
}

Var forward_primitive(OpKind kind, std::span<const Var> inputs, double scalar) {
  auto arity = [&](std::size_t n, const char* name) {
    if (inputs.size() != n) {
      throw DimensionError(std::string(name) + " expects " + std::to_string(n) + " inputs, got " +
                           std::to_string(inputs.size()));
    }
  };
  switch (kind) {
    case OpKind::Matmul: arity(2, "matmul"); return matmul(inputs[0], inputs[1]);
    case OpKind::Add: arity(2, "add"); return add(inputs[0], inputs[1]);
    case OpKind::Multiply: arity(2, "mul"); return mul(inputs[0], inputs[1]);
    case OpKind::Scale: arity(1, "scale"); return scale(inputs[0], scalar);
    case OpKind::Tanh: arity(1, "tanh"); return tanh(inputs[0]);
    case OpKind::Relu: arity(1, "relu"); return relu(inputs[0]);
    case OpKind::RowMean: arity(1, "row_mean"); return row_mean(inputs[0]);
    case OpKind::Log: arity(1, "log"); return log(inputs[0]);
  }
  throw DomainError("unknown op kind");
}

void backward(const Var& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw DimensionError("backward: loss must be 1x1, got " + loss.value().shape_string());
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; `order` ends up parents-before-children.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  Node* root = loss.handle().get();
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->leaf) {
      n->grad = Matrix(n->value.rows(), n->value.cols());
    } else if (!n->grad.same_shape(n->value)) {
      n->grad = Matrix(n->value.rows(), n->value.cols());
    }
  }
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
  // Release intermediate gradients; leaves keep theirs.
  for (Node* n : order) {
    if (!n->leaf && n != root) n->grad = Matrix();
  }
}

ParameterSet::ParameterSet(const ParameterSet& other) {
  entries_.reserve(other.entries_.size());
  for (const auto& [name, var] : other.entries_) {
    Var copy = Var::parameter(var.value());
    copy.mutable_grad() = var.grad();
    entries_.emplace_back(name, std::move(copy));
  }
}

ParameterSet& ParameterSet::operator=(const ParameterSet& other) {
  if (this != &other) {
    ParameterSet tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

Var ParameterSet::add(std::string name, Matrix value) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  entries_.emplace_back(std::move(name), Var::parameter(std::move(value)));
  return entries_.back().second;
}

const Var& ParameterSet::get(const std::string& name) const {
  for (const auto& [n, v] : entries_) {
    if (n == name) return v;
  }
  throw ConfigError("no parameter named '" + name + "'");
}

Var& ParameterSet::get(const std::string& name) {
  return const_cast<Var&>(static_cast<const ParameterSet&>(*this).get(name));
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : entries_) n += v.value().size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [name, v] : entries_) v.zero_grad();
}

bool ParameterSet::values_equal(const ParameterSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first != other.entries_[i].first) return false;
    if (!(entries_[i].second.value() == other.entries_[i].second.value())) return false;
  }
  return true;
}

}  // namespace fpmt
