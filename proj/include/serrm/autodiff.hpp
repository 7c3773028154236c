#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "serrm/tensor.hpp"

namespace serrm {

template <typename T>
struct Node {
  Tensor<T> value;
  // Empty until something flows into this node during backward.
  Tensor<T> grad;
  bool requires_grad = false;
  // Non-empty for named leaves (parameters).
  std::string name;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  Tensor<T>& ensure_grad();
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> constant(Tensor<T> value);

template <typename T>
Var<T> parameter(Tensor<T> value, std::string name);

// Copy of the value with no history.
template <typename T>
Var<T> detach(const Var<T>& v);

template <typename T>
using GradientMap = std::map<std::string, Tensor<T>>;

// Records differentiable operations executed on the current thread while it
// is installed. A tape is single-use: backward() consumes it.
template <typename T>
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(const Var<T>& node);
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  // Reverse sweep from a scalar loss. Returns the gradient of every named
  // leaf reached and resets those leaves' accumulators.
  GradientMap<T> backward(const Var<T>& loss);

 private:
  std::vector<Var<T>> nodes_;
  Tape* previous_ = nullptr;
  bool consumed_ = false;
};

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Creates the output node of an operation. The node is recorded, and keeps
// its inputs and backward closure, only if a tape is active, gradients are
// enabled and at least one input requires a gradient.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backward_fn);

extern template struct Node<float>;
extern template struct Node<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace serrm
