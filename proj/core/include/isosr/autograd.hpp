#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "isosr/error.hpp"
#include "isosr/tensor.hpp"

namespace isosr {

// One value in a define-by-run graph. backward_fn reads this node's grad and
// accumulates into its parents' grads; nodes without a backward_fn are leaves.
template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::function<void()> backward_fn;
  std::string name;

  void ensure_grad() {
    if (grad.shape() != value.shape()) grad = Tensor<T>::zeros(value.shape());
  }
};

// Owns the nodes of one forward pass in creation order. Creation order is a
// topological order because every op's parents exist before the op runs, so
// the reverse sweep visits children before parents.
template <class T>
class Tape {
 public:
  Node<T>* leaf(Tensor<T> value, bool requires_grad, std::string name = {}) {
    auto node = std::make_unique<Node<T>>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    node->name = std::move(name);
    nodes_.push_back(std::move(node));
    return nodes_.back().get();
  }

  // Generic op node. requires_grad is inherited from any parent; the closure
  // captures parent pointers itself.
  Node<T>* make(Tensor<T> value, bool requires_grad, std::function<void()> backward_fn) {
    auto node = std::make_unique<Node<T>>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    node->backward_fn = std::move(backward_fn);
    nodes_.push_back(std::move(node));
    return nodes_.back().get();
  }

  // Reverse-mode sweep from a scalar loss. Grad accumulators start at zero on
  // every call; accumulation is summation over all paths.
  void backward(Node<T>* loss) {
    if (loss->value.numel() != 1) {
      throw DataError("backward: loss must be scalar, got shape " + shape_str(loss->value.shape()));
    }
    for (auto& node : nodes_) {
      if (node->requires_grad) {
        node->ensure_grad();
        auto g = node->grad.flat();
        for (auto& v : g) v = T{0};
      }
    }
    if (!loss->requires_grad) return;
    loss->grad[0] = T{1};
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<T>* node = it->get();
      if (node->requires_grad && node->backward_fn) node->backward_fn();
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::unique_ptr<Node<T>>> nodes_;
};

// Central-difference gradient of a scalar function of one tensor:
// g_i = (f(x + step*e_i) - f(x - step*e_i)) / (2*step).
template <class F>
Tensor<double> finite_diff_grad(F&& f, const Tensor<double>& x, double step) {
  Tensor<double> g = Tensor<double>::zeros(x.shape());
  Tensor<double> probe = x;
  for (i64 i = 0; i < x.numel(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double hi = f(probe);
    probe[i] = orig - step;
    const double lo = f(probe);
    probe[i] = orig;
    g[i] = (hi - lo) / (2.0 * step);
  }
  return g;
}

}  // namespace isosr
