#pragma once

// Reverse-mode automatic differentiation over Tensor.
//
// Every operation returns a Var that owns its value and, when any input
// requires a gradient, a closure that pushes the output gradient back into
// its parents. The graph is held by shared_ptr, so it lives exactly as long
// as some Var refers to its tail. A graph must be built and differentiated
// on one thread.

#include <cassert>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "imt/tensor.hpp"

namespace imt {

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>::zeros(value.shape());
    return grad;
  }
};

template <class T>
class Var {
 public:
  using NodePtr = std::shared_ptr<Node<T>>;

  Var() = default;
  explicit Var(NodePtr n) : node_(std::move(n)) {}

  static Var constant(Tensor<T> v) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    return Var(std::move(n));
  }
  static Var parameter(Tensor<T> v) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    n->requires_grad = true;
    return Var(std::move(n));
  }

  bool valid() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t a) const { return node_->value.dim(a); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  /// Gradient accumulated by backward(); zeros when none reached this node.
  const Tensor<T>& grad() const { return node_->grad_buffer(); }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad = Tensor<T>(); }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

namespace detail {

template <class T>
void check_finite_debug([[maybe_unused]] const Tensor<T>& t) {
#ifndef NDEBUG
  assert(t.all_finite() && "non-finite value produced by differentiable op");
#endif
}

}  // namespace detail

/// Wrap an op result. `fn` receives the output node and must add into the
/// parents' grad buffers; it is only attached when some input needs grad.
template <class T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> fn) {
  detail::check_finite_debug(value);
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  bool any = false;
  for (const auto& v : inputs) any = any || v.requires_grad();
  if (any) {
    n->requires_grad = true;
    n->parents.reserve(inputs.size());
    for (auto& v : inputs) n->parents.push_back(v.node());
    n->backward_fn = std::move(fn);
  }
  return Var<T>(std::move(n));
}

/// Run reverse accumulation from a scalar (or seeded) output.
template <class T>
void backward(const Var<T>& root, const Tensor<T>* seed = nullptr) {
  if (!root.requires_grad()) return;
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node<T>* p = n->parents[i++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  Node<T>& r = *root.node();
  if (seed) {
    r.grad_buffer() += *seed;
  } else {
    if (r.value.size() != 1) throw DimensionError("backward() without seed needs a scalar output");
    r.grad_buffer()[0] += T(1);
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

/// Leaf nodes (no parents) that feed `root` and require grad.
template <class T>
std::unordered_set<const Node<T>*> collect_leaves(const Var<T>& root) {
  std::unordered_set<const Node<T>*> leaves, seen;
  std::vector<const Node<T>*> stack{root.node().get()};
  while (!stack.empty()) {
    const Node<T>* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    if (n->parents.empty() && n->requires_grad) leaves.insert(n);
    for (const auto& p : n->parents) stack.push_back(p.get());
  }
  return leaves;
}

template <class T>
Var<T> detach(const Var<T>& x) {
  return Var<T>::constant(x.value());
}

// ---------------------------------------------------------------------------
// Elementwise

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  a.value().check_same(b.value(), "add");
  Tensor<T> out = a.value();
  out += b.value();
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& n) {
    for (auto& p : n.parents)
      if (p->requires_grad) p->grad_buffer() += n.grad;
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  a.value().check_same(b.value(), "sub");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->grad_buffer() += n.grad;
    if (n.parents[1]->requires_grad) {
      auto& g = n.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  a.value().check_same(b.value(), "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& n) {
    const auto& av = n.parents[0]->value;
    const auto& bv = n.parents[1]->value;
    if (n.parents[0]->requires_grad) {
      auto& g = n.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bv[i];
    }
    if (n.parents[1]->requires_grad) {
      auto& g = n.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * av[i];
    }
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.vec()) v *= s;
  return make_result<T>(std::move(out), {a}, [s](Node<T>& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * n.grad[i];
  });
}

/// Shared plumbing for y = f(x) applied per element with derivative f'(x, y).
template <class T, class F, class DF>
Var<T> unary(const Var<T>& x, F f, DF df) {
  Tensor<T> out = x.value();
  for (auto& v : out.vec()) v = f(v);
  return make_result<T>(std::move(out), {x}, [df](Node<T>& n) {
    const auto& xv = n.parents[0]->value;
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * df(xv[i], n.value[i]);
  });
}

template <class T>
Var<T> leaky_relu(const Var<T>& x, T slope = T(0.2)) {
  return unary(
      x, [slope](T v) { return v > 0 ? v : slope * v; },
      [slope](T v, T) { return v > 0 ? T(1) : slope; });
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  return unary(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); }, [](T, T y) { return y * (T(1) - y); });
}

/// Exact (erf-based) GELU.
template <class T>
Var<T> gelu(const Var<T>& x) {
  constexpr T kInvSqrt2 = T(0.70710678118654752440);
  constexpr T kInvSqrt2Pi = T(0.39894228040143267794);
  return unary(
      x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v * kInvSqrt2)); },
      [](T v, T) { return T(0.5) * (T(1) + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(T(-0.5) * v * v); });
}

template <class T>
Var<T> reshape(const Var<T>& x, Shape s) {
  Tensor<T> out = x.value().reshaped(std::move(s));
  return make_result<T>(std::move(out), {x}, [](Node<T>& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions to scalars

template <class T>
Var<T> mean(const Var<T>& x) {
  const T inv = T(1) / static_cast<T>(x.value().size());
  double s = 0;  // wide accumulator for every scalar reduction below
  for (T v : x.value().vec()) s += v;
  return make_result<T>(Tensor<T>({1}, static_cast<T>(s * inv)), {x}, [inv](Node<T>& n) {
    auto& g = n.parents[0]->grad_buffer();
    const T go = n.grad[0] * inv;
    for (auto& v : g.vec()) v += go;
  });
}

/// mean(|a - b|)
template <class T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b) {
  a.value().check_same(b.value(), "mean_abs_diff");
  const std::size_t count = a.value().size();
  const T inv = T(1) / static_cast<T>(count);
  double s = 0;
  for (std::size_t i = 0; i < count; ++i) s += std::abs(a.value()[i] - b.value()[i]);
  return make_result<T>(Tensor<T>({1}, static_cast<T>(s * inv)), {a, b}, [inv](Node<T>& n) {
    const auto& av = n.parents[0]->value;
    const auto& bv = n.parents[1]->value;
    const T go = n.grad[0] * inv;
    for (int side = 0; side < 2; ++side) {
      if (!n.parents[side]->requires_grad) continue;
      auto& g = n.parents[side]->grad_buffer();
      const T sign = side == 0 ? T(1) : T(-1);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T d = av[i] - bv[i];
        g[i] += sign * go * (d > 0 ? T(1) : (d < 0 ? T(-1) : T(0)));
      }
    }
  });
}

/// mean((x - target)^2) with a constant target.
template <class T>
Var<T> mean_sq_to(const Var<T>& x, T target) {
  const std::size_t count = x.value().size();
  const T inv = T(1) / static_cast<T>(count);
  double s = 0;
  for (T v : x.value().vec()) s += (v - target) * (v - target);
  return make_result<T>(Tensor<T>({1}, static_cast<T>(s * inv)), {x}, [inv, target](Node<T>& n) {
    const auto& xv = n.parents[0]->value;
    auto& g = n.parents[0]->grad_buffer();
    const T go = n.grad[0] * inv * T(2);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += go * (xv[i] - target);
  });
}

/// sum(x * w) for a constant weight tensor; scalarizes outputs for gradient checks.
template <class T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& w) {
  x.value().check_same(w, "weighted_sum");
  double s = 0;
  for (std::size_t i = 0; i < w.size(); ++i) s += x.value()[i] * w[i];
  return make_result<T>(Tensor<T>({1}, static_cast<T>(s)), {x}, [w](Node<T>& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0] * w[i];
  });
}

/// Sum of scalars with constant coefficients: sum_i c_i * x_i.
template <class T>
Var<T> linear_combination(const std::vector<Var<T>>& xs, const std::vector<T>& coeffs) {
  if (xs.size() != coeffs.size()) throw DimensionError("linear_combination: arity mismatch");
  T s = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].value().size() != 1) throw DimensionError("linear_combination expects scalars");
    s += coeffs[i] * xs[i].value()[0];
  }
  return make_result<T>(Tensor<T>({1}, s), xs, [coeffs](Node<T>& n) {
    for (std::size_t i = 0; i < n.parents.size(); ++i)
      if (n.parents[i]->requires_grad) n.parents[i]->grad_buffer()[0] += coeffs[i] * n.grad[0];
  });
}

}  // namespace imt
