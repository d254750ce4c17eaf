#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "hwnas/autodiff/tensor.hpp"

namespace hwnas {

template <class T>
class Tape;

/// Handle to a node recorded on a Tape.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(id); }
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  T item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar " + to_string(shape()));
    return value()[0];
  }
};

/// Ordered record of executed primitives for one reverse sweep.
///
/// Nodes are appended as operations run, so parents always precede children
/// and a reverse scan is a valid topological traversal. Parameters are
/// registered by reference; backward() adds their gradients into the
/// tensor's own grad buffer.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::span<const T>)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return push(std::move(value), {}, nullptr, nullptr, false); }

  Var<T> parameter(Tensor<T>& param) { return push(param, {}, nullptr, &param, true); }

  /// Records an operation. The node tracks gradients iff some parent does.
  Var<T> record(Tensor<T> value, std::vector<std::size_t> parents, BackwardFn fn) {
    bool needs = false;
    for (auto p : parents) needs = needs || nodes_.at(p).requires_grad;
    if (!needs) return push(std::move(value), {}, nullptr, nullptr, false);
    return push(std::move(value), std::move(parents), std::move(fn), nullptr, true);
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  bool requires_grad(Var<T> v) const { return requires_grad(v.id); }
  const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_.at(id).parents; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient accumulator of a node, or nullptr when the node is not tracked.
  std::vector<T>* grad_sink(std::size_t id) {
    auto& n = nodes_.at(id);
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty()) n.grad.assign(n.value.size(), T{0});
    return &n.grad;
  }

  /// Reverse sweep from a scalar; accumulates into registered parameters.
  void backward(Var<T> loss) {
    propagate(loss);
    for (std::size_t i = 0; i <= loss.id; ++i) {
      auto& n = nodes_[i];
      if (n.param == nullptr || n.grad.empty()) continue;
      auto& g = n.param->grad();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
    }
  }

  /// Gradient of `loss` with respect to `param` without touching param.grad().
  std::vector<T> gradient(Var<T> loss, const Tensor<T>& param) {
    propagate(loss);
    std::vector<T> out(param.size(), T{0});
    for (std::size_t i = 0; i <= loss.id; ++i) {
      auto& n = nodes_[i];
      if (n.param != &param || n.grad.empty()) continue;
      for (std::size_t k = 0; k < out.size(); ++k) out[k] += n.grad[k];
    }
    return out;
  }

 private:
  struct Node {
    Tensor<T> value;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    Tensor<T>* param = nullptr;
    bool requires_grad = false;
    std::vector<T> grad;
  };

  Var<T> push(Tensor<T> value, std::vector<std::size_t> parents, BackwardFn fn, Tensor<T>* param,
              bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.value.clear_grad();
    n.parents = std::move(parents);
    n.backward = std::move(fn);
    n.param = param;
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var<T>{this, nodes_.size() - 1};
  }

  void propagate(Var<T> loss) {
    if (loss.tape != this) throw std::invalid_argument("loss belongs to another tape");
    if (value(loss.id).size() != 1) throw ShapeError("backward requires a scalar loss");
    for (auto& n : nodes_) n.grad.clear();
    auto* seed = grad_sink(loss.id);
    if (seed == nullptr) return;
    (*seed)[0] = T{1};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.backward || n.grad.empty()) continue;
      n.backward(*this, std::span<const T>(n.grad));
    }
  }

  std::deque<Node> nodes_;
};

}  // namespace hwnas
