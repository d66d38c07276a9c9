#pragma once

// Dense 2-D tensors, a reverse-mode computation record and Adam.
//
// Everything is double precision and row-major. A Graph is an append-only
// tape: every op records its inputs and caches its forward value, so the
// tape can be replayed after a leaf changes and differentiated in one
// reverse sweep. Only first-order derivatives are supported; quantities that
// look like second-order ones (the critic input gradient inside a gradient
// penalty) are built explicitly from primitives so their derivative is again
// first order.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wiae/error.hpp"

namespace wiae {

class Tensor {
 public:
  Tensor() = default;

  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    if (!std::isfinite(fill)) throw ContractViolation("Tensor: non-finite fill value");
  }

  Tensor(std::size_t rows, std::size_t cols, const std::vector<double>& data)
      : rows_(rows), cols_(cols), data_(data.begin(), data.end()) {
    if (data_.size() != rows_ * cols_)
      throw ContractViolation("Tensor: data length " + std::to_string(data_.size()) +
                              " does not match shape " + std::to_string(rows_) + "x" +
                              std::to_string(cols_));
    check_finite();
  }

  static Tensor scalar(double v) { return Tensor(1, 1, std::vector<double>{v}); }
  static Tensor row(std::vector<double> v) {
    const auto n = v.size();
    return Tensor(1, n, std::move(v));
  }
  static Tensor column(std::vector<double> v) {
    const auto n = v.size();
    return Tensor(n, 1, std::move(v));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double> values() const { return std::vector<double>(data_.begin(), data_.end()); }

  // Scalar value of a 1x1 tensor.
  double item() const {
    if (size() != 1) throw ContractViolation("Tensor::item on non-scalar tensor");
    return data_[0];
  }

  std::span<const double> row_span(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }

  void check_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) throw ContractViolation("Tensor: non-finite entry");
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  // Aligned so that vectorized reductions split their work the same way
  // every run; with plain vector storage the split follows the address.
  std::vector<double, Eigen::aligned_allocator<double>> data_;
};

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

inline ConstMap view(const Tensor& t) {
  return ConstMap(t.data().data(), Eigen::Index(t.rows()), Eigen::Index(t.cols()));
}
inline MutMap view(Tensor& t) {
  return MutMap(t.data().data(), Eigen::Index(t.rows()), Eigen::Index(t.cols()));
}

// tanh through the vectorized exponential, 1 - 2 / (exp(2x) + 1). Absolute
// error stays within a few ulp of 1 and overflow of exp gives exactly +-1;
// std::tanh is several times slower and dominates training time otherwise.
template <typename Derived>
inline void tanh_inplace(Eigen::ArrayBase<Derived>& x) {
  x = 1.0 - 2.0 / ((2.0 * x).exp() + 1.0);
}

}  // namespace detail

// Handle to a node in a Graph.
struct Var {
  std::size_t id = 0;
};

enum class Op {
  leaf,
  add,
  sub,
  mul,
  scale_shift,  // a * x + b, elementwise
  matmul,
  affine,  // X W^T + b, bias broadcast over rows
  tanh,
  sum,
  mean,
  l2norm,     // Frobenius norm, 1x1
  row_norms,  // per-row L2 norm, rows x 1
  gather,     // out.flat[k] = in.flat[index[k]]
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale_shift: return "scale_shift";
    case Op::matmul: return "matmul";
    case Op::affine: return "affine";
    case Op::tanh: return "tanh";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::l2norm: return "l2norm";
    case Op::row_norms: return "row_norms";
    case Op::gather: return "gather";
  }
  return "unknown";
}

// Gradients of one backward sweep, keyed by node id. Only nodes created
// with Graph::parameter receive an entry.
class Gradients {
 public:
  explicit Gradients(std::size_t nodes) : grads_(nodes) {}

  bool has(Var v) const { return v.id < grads_.size() && grads_[v.id].has_value(); }
  const Tensor& operator[](Var v) const {
    if (!has(v)) throw ContractViolation("Gradients: node is not a parameter");
    return *grads_[v.id];
  }
  void set(Var v, Tensor t) { grads_[v.id] = std::move(t); }

 private:
  std::vector<std::optional<Tensor>> grads_;
};

// Append-only computation record.
class Graph {
 public:
  struct Node {
    Op op = Op::leaf;
    std::size_t a = 0, b = 0, c = 0;  // input node ids (meaningful per op)
    double alpha = 0.0, beta = 0.0;   // scale_shift coefficients
    std::vector<std::size_t> index;   // gather indices
    Tensor value;
    bool is_parameter = false;
    bool needs_grad = false;
  };

  // Leaf that never receives a gradient.
  Var constant(Tensor t) { return push_leaf(std::move(t), false); }
  // Leaf whose gradient backward() reports.
  Var parameter(Tensor t) { return push_leaf(std::move(t), true); }

  Var add(Var x, Var y) { return binary(Op::add, x, y); }
  Var sub(Var x, Var y) { return binary(Op::sub, x, y); }
  Var mul(Var x, Var y) { return binary(Op::mul, x, y); }

  Var scale_shift(Var x, double alpha, double beta) {
    Node n;
    n.op = Op::scale_shift;
    n.a = x.id;
    n.alpha = alpha;
    n.beta = beta;
    return push(std::move(n));
  }
  Var scale(Var x, double alpha) { return scale_shift(x, alpha, 0.0); }

  Var matmul(Var x, Var y) {
    detail::require(value(x).cols() == value(y).rows(), "matmul: inner dimensions differ");
    Node n;
    n.op = Op::matmul;
    n.a = x.id;
    n.b = y.id;
    return push(std::move(n));
  }

  // x: rows x in, w: out x in, bias: 1 x out.
  Var affine(Var x, Var w, Var bias) {
    detail::require(value(x).cols() == value(w).cols(), "affine: input width does not match weight");
    detail::require(value(bias).rows() == 1 && value(bias).cols() == value(w).rows(),
                    "affine: bias must be 1 x out");
    Node n;
    n.op = Op::affine;
    n.a = x.id;
    n.b = w.id;
    n.c = bias.id;
    return push(std::move(n));
  }

  Var tanh(Var x) { return unary(Op::tanh, x); }
  Var sum(Var x) { return unary(Op::sum, x); }
  Var mean(Var x) { return unary(Op::mean, x); }
  Var l2norm(Var x) { return unary(Op::l2norm, x); }
  Var row_norms(Var x) { return unary(Op::row_norms, x); }

  Var gather(Var x, std::vector<std::size_t> index, std::size_t rows, std::size_t cols) {
    detail::require(index.size() == rows * cols, "gather: index count does not match output shape");
    const auto limit = value(x).size();
    for (auto i : index) detail::require(i < limit, "gather: index out of range");
    Node n;
    n.op = Op::gather;
    n.a = x.id;
    n.index = std::move(index);
    n.alpha = double(rows);
    n.beta = double(cols);
    return push(std::move(n));
  }

  const Tensor& value(Var v) const { return node(v).value; }
  const Node& node(Var v) const {
    detail::require(v.id < nodes_.size(), "Graph: unknown node id");
    return nodes_[v.id];
  }
  std::size_t size() const { return nodes_.size(); }

  // Replace a leaf value; call replay() to refresh dependent values.
  void set_value(Var leaf, Tensor t) {
    auto& n = nodes_.at(leaf.id);
    detail::require(n.op == Op::leaf, "set_value: node is not a leaf");
    detail::require(n.value.same_shape(t), "set_value: shape mismatch");
    n.value = std::move(t);
  }

  // Recompute every non-leaf value from the leaves, in recording order.
  void replay() {
    for (auto& n : nodes_)
      if (n.op != Op::leaf) n.value = evaluate(n);
  }

  Gradients backward(Var output) const;

 private:
  Var push_leaf(Tensor t, bool param) {
    Node n;
    n.op = Op::leaf;
    n.value = std::move(t);
    n.is_parameter = param;
    n.needs_grad = param;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  Var unary(Op op, Var x) {
    Node n;
    n.op = op;
    n.a = x.id;
    return push(std::move(n));
  }

  Var binary(Op op, Var x, Var y) {
    detail::require(value(x).same_shape(value(y)), std::string(op_name(op)) + ": shape mismatch");
    Node n;
    n.op = op;
    n.a = x.id;
    n.b = y.id;
    return push(std::move(n));
  }

  Var push(Node n) {
    n.needs_grad = input_needs_grad(n);
    n.value = evaluate(n);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  bool input_needs_grad(const Node& n) const {
    switch (n.op) {
      case Op::add:
      case Op::sub:
      case Op::mul:
      case Op::matmul:
        return nodes_[n.a].needs_grad || nodes_[n.b].needs_grad;
      case Op::affine:
        return nodes_[n.a].needs_grad || nodes_[n.b].needs_grad || nodes_[n.c].needs_grad;
      default:
        return nodes_[n.a].needs_grad;
    }
  }

  Tensor evaluate(const Node& n) const;
  static void accumulate(std::optional<Tensor>& slot, const Tensor& like) {
    if (!slot) slot = Tensor(like.rows(), like.cols());
  }

  std::vector<Node> nodes_;
};

inline Tensor Graph::evaluate(const Node& n) const {
  using detail::view;
  const Tensor& x = nodes_[n.a].value;
  switch (n.op) {
    case Op::leaf:
      return n.value;
    case Op::add: {
      Tensor out = x;
      view(out).array() += view(nodes_[n.b].value).array();
      return out;
    }
    case Op::sub: {
      Tensor out = x;
      view(out).array() -= view(nodes_[n.b].value).array();
      return out;
    }
    case Op::mul: {
      Tensor out = x;
      view(out).array() *= view(nodes_[n.b].value).array();
      return out;
    }
    case Op::scale_shift: {
      Tensor out = x;
      view(out).array() = view(out).array() * n.alpha + n.beta;
      return out;
    }
    case Op::matmul: {
      const Tensor& y = nodes_[n.b].value;
      Tensor out(x.rows(), y.cols());
      view(out).noalias() = view(x) * view(y);
      return out;
    }
    case Op::affine: {
      const Tensor& w = nodes_[n.b].value;
      const Tensor& bias = nodes_[n.c].value;
      Tensor out(x.rows(), w.rows());
      auto o = view(out);
      o.noalias() = view(x) * view(w).transpose();
      o.rowwise() += view(bias).row(0);
      return out;
    }
    case Op::tanh: {
      Tensor out = x;
      auto a = view(out).array();
      detail::tanh_inplace(a);
      return out;
    }
    case Op::sum:
      return Tensor::scalar(view(x).sum());
    case Op::mean:
      detail::require(x.size() > 0, "mean of empty tensor");
      return Tensor::scalar(view(x).sum() / double(x.size()));
    case Op::l2norm:
      return Tensor::scalar(view(x).norm());
    case Op::row_norms: {
      Tensor out(x.rows(), 1);
      view(out).col(0) = view(x).rowwise().norm();
      return out;
    }
    case Op::gather: {
      Tensor out(std::size_t(n.alpha), std::size_t(n.beta));
      for (std::size_t k = 0; k < n.index.size(); ++k) out[k] = x[n.index[k]];
      return out;
    }
  }
  throw Unimplemented(std::string("forward not implemented for op ") + op_name(n.op));
}

inline Gradients Graph::backward(Var output) const {
  using detail::view;
  detail::require(output.id < nodes_.size(), "backward: unknown output node");
  const Tensor& out_value = nodes_[output.id].value;
  if (out_value.size() != 1) throw ContractViolation("backward: output node is not scalar-valued");

  std::vector<std::optional<Tensor>> adj(output.id + 1);
  adj[output.id] = Tensor::scalar(1.0);

  auto grad_of = [&](std::size_t id) -> std::optional<Tensor>* {
    if (!nodes_[id].needs_grad) return nullptr;
    accumulate(adj[id], nodes_[id].value);
    return &adj[id];
  };

  for (std::size_t i = output.id + 1; i-- > 0;) {
    if (!adj[i] || !nodes_[i].needs_grad) continue;
    const Node& n = nodes_[i];
    const Tensor& g = *adj[i];
    const auto G = view(g);
    switch (n.op) {
      case Op::leaf:
        break;
      case Op::add:
        if (auto* s = grad_of(n.a)) view(**s) += G;
        if (auto* s = grad_of(n.b)) view(**s) += G;
        break;
      case Op::sub:
        if (auto* s = grad_of(n.a)) view(**s) += G;
        if (auto* s = grad_of(n.b)) view(**s) -= G;
        break;
      case Op::mul:
        if (auto* s = grad_of(n.a)) view(**s).array() += G.array() * view(nodes_[n.b].value).array();
        if (auto* s = grad_of(n.b)) view(**s).array() += G.array() * view(nodes_[n.a].value).array();
        break;
      case Op::scale_shift:
        if (auto* s = grad_of(n.a)) view(**s) += n.alpha * G;
        break;
      case Op::matmul:
        if (auto* s = grad_of(n.a)) view(**s).noalias() += G * view(nodes_[n.b].value).transpose();
        if (auto* s = grad_of(n.b)) view(**s).noalias() += view(nodes_[n.a].value).transpose() * G;
        break;
      case Op::affine:
        if (auto* s = grad_of(n.a)) view(**s).noalias() += G * view(nodes_[n.b].value);
        if (auto* s = grad_of(n.b)) view(**s).noalias() += G.transpose() * view(nodes_[n.a].value);
        if (auto* s = grad_of(n.c)) view(**s) += G.colwise().sum();
        break;
      case Op::tanh:
        if (auto* s = grad_of(n.a)) {
          const auto y = view(n.value).array();
          view(**s).array() += G.array() * (1.0 - y * y);
        }
        break;
      case Op::sum:
        if (auto* s = grad_of(n.a)) view(**s).array() += g[0];
        break;
      case Op::mean:
        if (auto* s = grad_of(n.a)) view(**s).array() += g[0] / double(nodes_[n.a].value.size());
        break;
      case Op::l2norm:
        if (auto* s = grad_of(n.a)) {
          const double norm = n.value[0];
          if (norm > 0.0) view(**s) += (g[0] / norm) * view(nodes_[n.a].value);
        }
        break;
      case Op::row_norms:
        if (auto* s = grad_of(n.a)) {
          const auto X = view(nodes_[n.a].value);
          auto S = view(**s);
          for (Eigen::Index r = 0; r < X.rows(); ++r) {
            const double norm = n.value[std::size_t(r)];
            if (norm > 0.0) S.row(r) += (G(r, 0) / norm) * X.row(r);
          }
        }
        break;
      case Op::gather:
        if (auto* s = grad_of(n.a)) {
          Tensor& dst = **s;
          for (std::size_t k = 0; k < n.index.size(); ++k) dst[n.index[k]] += g[k];
        }
        break;
      default:
        throw Unimplemented(std::string("backward not implemented for op ") + op_name(n.op));
    }
  }

  Gradients result(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].is_parameter) continue;
    if (i < adj.size() && adj[i])
      result.set(Var{i}, std::move(*adj[i]));
    else
      result.set(Var{i}, Tensor(nodes_[i].value.rows(), nodes_[i].value.cols()));
  }
  return result;
}

// Builds a scalar function of one input into a fresh graph.
using ScalarFn = std::function<Var(Graph&, Var)>;

// Largest relative discrepancy between reverse-mode and central-difference
// gradients of f at point. Denominator is max(1, |analytic|).
inline double grad_check(const ScalarFn& f, const Tensor& point, double h = 1e-5) {
  Graph g;
  const Var x = g.parameter(point);
  const Var y = f(g, x);
  const Tensor analytic = g.backward(y)[x];

  double worst = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    Tensor probe = point;
    probe[i] = point[i] + h;
    g.set_value(x, probe);
    g.replay();
    const double up = g.value(y).item();
    probe[i] = point[i] - h;
    g.set_value(x, probe);
    g.replay();
    const double down = g.value(y).item();
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  g.set_value(x, point);
  g.replay();
  return worst;
}

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::size_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

// One bias-corrected Adam step. Moments are created on the first call.
inline void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
                      const AdamConfig& cfg) {
  detail::require(cfg.lr > 0.0, "adam_step: learning rate must be positive");
  detail::require(params.size() == grads.size(), "adam_step: parameter and gradient counts differ");
  if (state.step == 0 && state.first_moment.empty()) {
    for (const Tensor* p : params) {
      state.first_moment.emplace_back(p->rows(), p->cols());
      state.second_moment.emplace_back(p->rows(), p->cols());
    }
  }
  detail::require(state.first_moment.size() == params.size() && state.second_moment.size() == params.size(),
                  "adam_step: state does not match parameter set");
  for (std::size_t i = 0; i < params.size(); ++i) {
    detail::require(params[i]->same_shape(grads[i]) && params[i]->same_shape(state.first_moment[i]) &&
                        params[i]->same_shape(state.second_moment[i]),
                    "adam_step: shape mismatch at parameter " + std::to_string(i));
  }

  state.step += 1;
  const double t = double(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i].data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      p[k] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

}  // namespace wiae
