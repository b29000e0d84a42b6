#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hstg/error.hpp"

namespace hstg::num {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

namespace detail {
inline thread_local bool grad_mode = true;
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode; }

/// Disables tape recording for its lifetime (inference, finite differences).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode) { detail::grad_mode = false; }
  ~NoGradGuard() { detail::grad_mode = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// One value on the gradient tape. Interior nodes own their parents and a
/// closure that pushes `grad` into them; leaves (parameters) just accumulate.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

/// Dense row-major float64 array with reverse-mode autodiff. Copies share the
/// underlying node; use `clone()` for an independent value.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    for (std::size_t e : shape) {
      if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (shape_size(shape) != values.size()) {
      throw DimensionError("shape " + shape_str(shape) + " does not match " +
                           std::to_string(values.size()) + " values");
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    const std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) { return Tensor({1}, {v}, requires_grad); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }
  /// Direct write access; intended for parameters and optimizers.
  std::span<double> mutable_values() { return node_->value; }
  double at(std::size_t i) const { return node_->value.at(i); }

  double item() const {
    if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }

  Tensor clone(bool requires_grad = false) const { return Tensor(shape(), node_->value, requires_grad); }

  /// Runs reverse-mode accumulation from this scalar root into every
  /// reachable node that requires a gradient.
  void backward() const {
    if (size() != 1) throw DimensionError("backward() needs a scalar root, got " + shape_str(shape()));
    if (!requires_grad()) throw ValidationError("backward() on a tensor that does not require grad");
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node* p = n->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    node_->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward && !n->grad.empty()) n->backward();
    }
  }

  const std::shared_ptr<Node>& node() const { return node_; }
  Node* raw() const { return node_.get(); }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

inline void check_finite(const char* op, std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

/// Wraps freshly computed values as an op result. The result is put on the
/// tape when recording is enabled and any input requires a gradient.
inline Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                          std::initializer_list<const Tensor*> inputs) {
  check_finite(op, value);
  Tensor out(std::move(shape), std::move(value));
  if (!grad_enabled()) return out;
  bool needs = false;
  for (const Tensor* t : inputs) needs = needs || t->requires_grad();
  if (!needs) return out;
  Node* n = out.raw();
  n->requires_grad = true;
  n->op = op;
  for (const Tensor* t : inputs) n->parents.push_back(t->node());
  return out;
}

inline Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                          const std::vector<Tensor>& inputs) {
  check_finite(op, value);
  Tensor out(std::move(shape), std::move(value));
  if (!grad_enabled()) return out;
  bool needs = false;
  for (const Tensor& t : inputs) needs = needs || t.requires_grad();
  if (!needs) return out;
  Node* n = out.raw();
  n->requires_grad = true;
  n->op = op;
  for (const Tensor& t : inputs) n->parents.push_back(t.node());
  return out;
}

/// Gradient buffer of `n` if it participates in backprop, else null.
inline double* grad_of(Node* n) { return n->requires_grad ? n->grad_buffer().data() : nullptr; }

}  // namespace detail

}  // namespace hstg::num
