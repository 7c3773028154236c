#include "serrm/autodiff.hpp"

#include <stdexcept>

namespace serrm {

namespace {

thread_local bool g_grad_enabled = true;
thread_local Tape<float>* g_tape_f32 = nullptr;
thread_local Tape<double>* g_tape_f64 = nullptr;

template <typename T>
Tape<T>*& tape_slot();

template <>
Tape<float>*& tape_slot<float>() {
  return g_tape_f32;
}

template <>
Tape<double>*& tape_slot<double>() {
  return g_tape_f64;
}

}  // namespace

template <typename T>
Tensor<T>& Node<T>::ensure_grad() {
  if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
  return grad;
}

template <typename T>
Var<T> constant(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  return n;
}

template <typename T>
Var<T> parameter(Tensor<T> value, std::string name) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->name = std::move(name);
  return n;
}

template <typename T>
Var<T> detach(const Var<T>& v) {
  return constant(v->value);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tape<T>::Tape() : previous_(tape_slot<T>()) {
  tape_slot<T>() = this;
}

template <typename T>
Tape<T>::~Tape() {
  tape_slot<T>() = previous_;
}

template <typename T>
Tape<T>* Tape<T>::active() {
  return tape_slot<T>();
}

template <typename T>
void Tape<T>::record(const Var<T>& node) {
  if (consumed_) throw std::logic_error("recording onto a consumed tape");
  nodes_.push_back(node);
}

template <typename T>
GradientMap<T> Tape<T>::backward(const Var<T>& loss) {
  if (consumed_) throw std::logic_error("backward called twice on the same tape");
  if (loss->value.size() != 1) {
    throw std::invalid_argument("backward requires a scalar loss, got shape " + shape_str(loss->value.shape()));
  }
  consumed_ = true;
  GradientMap<T> out;
  if (!loss->requires_grad) {
    nodes_.clear();
    return out;
  }
  loss->ensure_grad()[0] = T(1);

  std::vector<Node<T>*> leaves;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node<T>& n = **it;
    if (n.grad.size() == 0 || !n.backward_fn) continue;
    n.backward_fn(n);
    for (auto& in : n.inputs) {
      if (!in->name.empty() && in->requires_grad) leaves.push_back(in.get());
    }
  }
  for (Node<T>* leaf : leaves) {
    if (leaf->grad.size() == 0) continue;
    out[leaf->name] = std::move(leaf->grad);
    leaf->grad = Tensor<T>();
  }
  // Releasing the nodes frees saved activations and cuts every path back to
  // the parameters.
  for (auto& n : nodes_) {
    n->backward_fn = nullptr;
    n->inputs.clear();
    n->grad = Tensor<T>();
  }
  nodes_.clear();
  return out;
}

template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  Tape<T>* tape = Tape<T>::active();
  if (tape == nullptr || !g_grad_enabled) return n;
  bool any = false;
  for (const auto& in : inputs) any = any || in->requires_grad;
  if (!any) return n;
  n->requires_grad = true;
  n->inputs = std::move(inputs);
  n->backward_fn = std::move(backward_fn);
  tape->record(n);
  return n;
}

template struct Node<float>;
template struct Node<double>;
template class Tape<float>;
template class Tape<double>;

template Var<float> constant(Tensor<float>);
template Var<double> constant(Tensor<double>);
template Var<float> parameter(Tensor<float>, std::string);
template Var<double> parameter(Tensor<double>, std::string);
template Var<float> detach(const Var<float>&);
template Var<double> detach(const Var<double>&);
template Var<float> make_result(Tensor<float>, std::vector<Var<float>>, std::function<void(Node<float>&)>);
template Var<double> make_result(Tensor<double>, std::vector<Var<double>>, std::function<void(Node<double>&)>);

}  // namespace serrm
