#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "seqfn/errors.hpp"

namespace seqfn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace detail {

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

template <class T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

}  // namespace detail

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major array with optional participation in reverse-mode differentiation.
///
/// Tensor is a shared handle: copies refer to the same storage. Values are
/// immutable once created; the only mutation paths are `update_data()` (used
/// by optimizers and finite-difference probes on leaf parameters) and the
/// gradient buffer.
template <class T>
class Tensor {
 public:
  using value_type = T;
  using NodeT = detail::Node<T>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<NodeT> node) : node_(std::move(node)) {}

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
    for (auto d : shape) {
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != values.size()) {
      throw DimensionError("shape " + shape_str(shape) + " needs " + std::to_string(shape_numel(shape)) +
                           " values, got " + std::to_string(values.size()));
    }
    auto n = std::make_shared<NodeT>();
    n->shape = std::move(shape);
    n->data = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }
  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    std::vector<T> v(shape_numel(shape), value);
    return from(std::move(shape), std::move(v), requires_grad);
  }
  static Tensor zeros(Shape shape, bool requires_grad = false) { return full(std::move(shape), T(0), requires_grad); }
  static Tensor scalar(T value, bool requires_grad = false) { return from({1}, {value}, requires_grad); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  /// Write access for parameter updates. Never call on a tensor that is an
  /// input to a live graph you still intend to differentiate.
  std::span<T> update_data() { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) {
    if (!node_->is_leaf()) throw GraphError("requires_grad can only be set on leaf tensors");
    node_->requires_grad = on;
  }
  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  T item() const {
    if (numel() != 1) throw DimensionError("item() needs a single-element tensor, got " + shape_str(shape()));
    return node_->data[0];
  }
  T at(std::initializer_list<std::size_t> index) const {
    if (index.size() != rank()) throw DimensionError("index rank does not match tensor rank");
    std::size_t flat = 0;
    std::size_t i = 0;
    for (auto v : index) {
      if (v >= node_->shape[i]) throw DimensionError("index out of range for " + shape_str(shape()));
      flat = flat * node_->shape[i] + v;
      ++i;
    }
    return node_->data[flat];
  }

  /// Copy of the values without any graph connection.
  Tensor detach(bool requires_grad = false) const { return from(shape(), node_->data, requires_grad); }

  const char* op_name() const { return node_->op; }
  const std::shared_ptr<NodeT>& node() const { return node_; }

 private:
  std::shared_ptr<NodeT> node_;
};

namespace detail {

template <class T>
using BackwardFn = std::function<void(Node<T>&)>;

template <class T>
Tensor<T> make_op(const char* op, Shape shape, std::vector<T> data, std::initializer_list<Tensor<T>> inputs,
                  BackwardFn<T> backward) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->op = op;
  bool needs = false;
  if (grad_mode()) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    n->requires_grad = true;
    for (const auto& in : inputs) n->parents.push_back(in.node());
    n->backward = std::move(backward);
  }
  return Tensor<T>(std::move(n));
}

// Gradient buffer of a parent, or nullptr when that parent does not take gradients.
template <class T>
T* grad_of(Node<T>& self, std::size_t i) {
  auto& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return p.grad.data();
}

template <class T>
const std::vector<T>& data_of(const Node<T>& self, std::size_t i) {
  return self.parents[i]->data;
}

// Post-order DFS: parents precede children, so reverse iteration is a valid
// reverse-topological replay.
template <class T>
std::vector<Node<T>*> topo_order(Node<T>* root) {
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace detail

/// Reverse-mode sweep from a scalar loss.
///
/// Intermediate gradients are reset on every call; leaf gradients accumulate,
/// so two calls without `zero_grad` double the leaf gradients.
template <class T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw GraphError("backward() needs a scalar loss, got " + (loss.defined() ? shape_str(loss.shape()) : "undefined"));
  }
  auto* root = loss.node().get();
  if (!root->requires_grad) throw GraphError("backward() on a loss with no recorded operations");
  auto order = detail::topo_order(root);
  for (auto* n : order) {
    if (n->is_leaf()) {
      n->ensure_grad();
    } else {
      n->grad.assign(n->data.size(), T(0));
    }
  }
  root->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward(**it);
  }
}

// ---------------------------------------------------------------------------
// Elementwise ops

namespace detail {

template <class T, class F, class D>
Tensor<T> unary(const char* op, const Tensor<T>& a, F f, D dfdx) {
  const auto& x = a.data();
  std::vector<T> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return make_op<T>(op, a.shape(), std::move(y), {a}, [dfdx](Node<T>& self) {
    T* ga = grad_of(self, 0);
    if (!ga) return;
    const auto& xs = data_of(self, 0);
    for (std::size_t i = 0; i < xs.size(); ++i) ga[i] += self.grad[i] * dfdx(xs[i], self.data[i]);
  });
}

template <class T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  T e = std::exp(x);
  return e / (T(1) + e);
}

template <class T>
T stable_softplus(T x) {
  if (x > T(30)) return x;
  return std::log1p(std::exp(x));
}

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> a_strides;
  std::vector<std::size_t> b_strides;
  bool same = false;
};

inline BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan plan;
  if (a == b) {
    plan.out = a;
    plan.same = true;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  plan.out.assign(rank, 1);
  Shape ap(rank, 1), bp(rank, 1);
  std::copy(a.begin(), a.end(), ap.begin() + (rank - a.size()));
  std::copy(b.begin(), b.end(), bp.begin() + (rank - b.size()));
  for (std::size_t i = 0; i < rank; ++i) {
    if (ap[i] != bp[i] && ap[i] != 1 && bp[i] != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    plan.out[i] = std::max(ap[i], bp[i]);
  }
  plan.a_strides.assign(rank, 0);
  plan.b_strides.assign(rank, 0);
  std::size_t sa = 1, sb = 1;
  for (std::size_t i = rank; i-- > 0;) {
    plan.a_strides[i] = ap[i] == 1 ? 0 : sa;
    plan.b_strides[i] = bp[i] == 1 ? 0 : sb;
    sa *= ap[i];
    sb *= bp[i];
  }
  return plan;
}

template <class F>
void for_each_broadcast(const BroadcastPlan& plan, F&& fn) {
  const std::size_t total = shape_numel(plan.out);
  if (plan.same) {
    for (std::size_t i = 0; i < total; ++i) fn(i, i, i);
    return;
  }
  const std::size_t rank = plan.out.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < total; ++o) {
    fn(o, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += plan.a_strides[d];
      ib += plan.b_strides[d];
      if (idx[d] < plan.out[d]) break;
      ia -= plan.a_strides[d] * idx[d];
      ib -= plan.b_strides[d] * idx[d];
      idx[d] = 0;
    }
  }
}

enum class BinaryKind { add, sub, mul };

template <class T>
Tensor<T> binary(BinaryKind kind, const Tensor<T>& a, const Tensor<T>& b) {
  static constexpr const char* names[] = {"add", "sub", "mul"};
  const char* op = names[static_cast<int>(kind)];
  auto plan = plan_broadcast(a.shape(), b.shape(), op);
  const auto& x = a.data();
  const auto& y = b.data();
  std::vector<T> out(shape_numel(plan.out));
  for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
    switch (kind) {
      case BinaryKind::add: out[o] = x[ia] + y[ib]; break;
      case BinaryKind::sub: out[o] = x[ia] - y[ib]; break;
      case BinaryKind::mul: out[o] = x[ia] * y[ib]; break;
    }
  });
  return make_op<T>(op, plan.out, std::move(out), {a, b}, [kind, plan](Node<T>& self) {
    T* ga = grad_of(self, 0);
    T* gb = grad_of(self, 1);
    const auto& xa = data_of(self, 0);
    const auto& xb = data_of(self, 1);
    const auto& g = self.grad;
    for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      switch (kind) {
        case BinaryKind::add:
          if (ga) ga[ia] += g[o];
          if (gb) gb[ib] += g[o];
          break;
        case BinaryKind::sub:
          if (ga) ga[ia] += g[o];
          if (gb) gb[ib] -= g[o];
          break;
        case BinaryKind::mul:
          if (ga) ga[ia] += g[o] * xb[ib];
          if (gb) gb[ib] += g[o] * xa[ia];
          break;
      }
    });
  });
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(detail::BinaryKind::add, a, b);
}
template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(detail::BinaryKind::sub, a, b);
}
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(detail::BinaryKind::mul, a, b);
}

template <class T>
Tensor<T> neg(const Tensor<T>& a) {
  return detail::unary<T>("neg", a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return detail::unary<T>("scale", a, [factor](T x) { return factor * x; }, [factor](T, T) { return factor; });
}

template <class T>
Tensor<T> exp(const Tensor<T>& a) {
  return detail::unary<T>("exp", a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

/// log(1 + e^x); returns x itself above 30 so large inputs never overflow.
template <class T>
Tensor<T> softplus(const Tensor<T>& a) {
  return detail::unary<T>("softplus", a, [](T x) { return detail::stable_softplus(x); },
                          [](T x, T) { return x > T(30) ? T(1) : detail::stable_sigmoid(x); });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return detail::unary<T>("sigmoid", a, [](T x) { return detail::stable_sigmoid(x); },
                          [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> silu(const Tensor<T>& a) {
  return detail::unary<T>(
      "silu", a, [](T x) { return x * detail::stable_sigmoid(x); },
      [](T x, T) {
        T s = detail::stable_sigmoid(x);
        return s * (T(1) + x * (T(1) - s));
      });
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  return detail::unary<T>("relu", a, [](T x) { return x > T(0) ? x : T(0); },
                          [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

enum class Elementwise { add, mul, sub, exp, softplus, silu, sigmoid, neg };

/// Dispatching entry point over the elementwise family; `b` is required for
/// the binary ops and ignored otherwise.
template <class T>
Tensor<T> elementwise(Elementwise op, const Tensor<T>& a, const Tensor<T>& b = {}) {
  auto need_b = [&] {
    if (!b.defined()) throw DimensionError("binary elementwise op requires two operands");
  };
  switch (op) {
    case Elementwise::add: need_b(); return add(a, b);
    case Elementwise::mul: need_b(); return mul(a, b);
    case Elementwise::sub: need_b(); return sub(a, b);
    case Elementwise::exp: return exp(a);
    case Elementwise::softplus: return softplus(a);
    case Elementwise::silu: return silu(a);
    case Elementwise::sigmoid: return sigmoid(a);
    case Elementwise::neg: return neg(a);
  }
  throw DimensionError("unknown elementwise op");
}

// ---------------------------------------------------------------------------
// Shape ops

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape) + " changes element count");
  }
  std::vector<T> v(a.data().begin(), a.data().end());
  return detail::make_op<T>("reshape", std::move(shape), std::move(v), {a}, [](detail::Node<T>& self) {
    T* ga = detail::grad_of(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions

enum class Reduce { sum, mean, max };

/// Reduction over one axis, or over everything when `axis` is negative.
/// The reduced axis is dropped; a fully reduced tensor has shape [1]. For max,
/// the gradient goes to the first maximal element.
template <class T>
Tensor<T> reduce(Reduce op, const Tensor<T>& a, int axis = -1) {
  std::size_t outer = 1, len = a.numel(), inner = 1;
  Shape out_shape{1};
  if (axis >= 0) {
    if (static_cast<std::size_t>(axis) >= a.rank()) {
      throw DimensionError("reduce: axis " + std::to_string(axis) + " out of range for " + shape_str(a.shape()));
    }
    const auto ax = static_cast<std::size_t>(axis);
    outer = shape_numel(Shape(a.shape().begin(), a.shape().begin() + ax));
    len = a.shape()[ax];
    inner = shape_numel(Shape(a.shape().begin() + ax + 1, a.shape().end()));
    out_shape = a.shape();
    out_shape.erase(out_shape.begin() + ax);
    if (out_shape.empty()) out_shape = {1};
  }
  const auto& x = a.data();
  std::vector<T> out(outer * inner);
  std::vector<std::size_t> argmax;
  if (op == Reduce::max) argmax.resize(out.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      if (op == Reduce::max) {
        std::size_t best = base;
        for (std::size_t k = 1; k < len; ++k) {
          const std::size_t idx = base + k * inner;
          if (x[idx] > x[best]) best = idx;
        }
        out[o * inner + i] = x[best];
        argmax[o * inner + i] = best;
      } else {
        T acc = 0;
        for (std::size_t k = 0; k < len; ++k) acc += x[base + k * inner];
        out[o * inner + i] = op == Reduce::mean ? acc / static_cast<T>(len) : acc;
      }
    }
  }
  static constexpr const char* names[] = {"sum", "mean", "max"};
  return detail::make_op<T>(
      names[static_cast<int>(op)], std::move(out_shape), std::move(out), {a},
      [op, outer, len, inner, argmax = std::move(argmax)](detail::Node<T>& self) {
        T* ga = detail::grad_of(self, 0);
        if (!ga) return;
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t i = 0; i < inner; ++i) {
            const T g = self.grad[o * inner + i];
            if (op == Reduce::max) {
              ga[argmax[o * inner + i]] += g;
              continue;
            }
            const T share = op == Reduce::mean ? g / static_cast<T>(len) : g;
            const std::size_t base = o * len * inner + i;
            for (std::size_t k = 0; k < len; ++k) ga[base + k * inner] += share;
          }
        }
      });
}

template <class T>
Tensor<T> sum(const Tensor<T>& a, int axis = -1) {
  return reduce(Reduce::sum, a, axis);
}
template <class T>
Tensor<T> mean(const Tensor<T>& a, int axis = -1) {
  return reduce(Reduce::mean, a, axis);
}
template <class T>
Tensor<T> max(const Tensor<T>& a, int axis = -1) {
  return reduce(Reduce::max, a, axis);
}

// ---------------------------------------------------------------------------
// Linear algebra

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const auto& x = a.data();
  const auto& y = b.data();
  std::vector<T> out(m * n, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    T* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T xv = x[i * k + p];
      const T* yrow = y.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += xv * yrow[j];
    }
  }
  return detail::make_op<T>("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](detail::Node<T>& self) {
    T* ga = detail::grad_of(self, 0);
    T* gb = detail::grad_of(self, 1);
    const auto& xa = detail::data_of(self, 0);
    const auto& xb = detail::data_of(self, 1);
    const auto& g = self.grad;
    if (ga) {
      // dA = G * B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          T acc = 0;
          const T* brow = xb.data() + p * n;
          const T* grow = g.data() + i * n;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (gb) {
      // dB = A^T * G
      for (std::size_t i = 0; i < m; ++i) {
        const T* grow = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const T av = xa[i * k + p];
          T* gbrow = gb + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
}

template <class T>
bool all_finite(const Tensor<T>& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](T v) { return std::isfinite(v); });
}

}  // namespace seqfn
