#include "serrm/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace serrm {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int e : shape) {
    if (e < 0) throw std::invalid_argument("negative extent in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  if (shape_.size() > kMaxRank) throw std::invalid_argument("tensor rank exceeds 4");
  values_.assign(shape_numel(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, const std::vector<T>& values)
    : shape_(std::move(shape)), values_(values.begin(), values.end()) {
  if (shape_.size() > kMaxRank) throw std::invalid_argument("tensor rank exceeds 4");
  if (shape_numel(shape_) != values_.size()) {
    throw std::invalid_argument("shape " + shape_str(shape_) + " does not match " +
                                std::to_string(values_.size()) + " values");
  }
}

template <typename T>
Tensor<T> Tensor<T>::uninitialized(Shape shape) {
  if (shape.size() > kMaxRank) throw std::invalid_argument("tensor rank exceeds 4");
  Tensor<T> t;
  t.values_.resize(shape_numel(shape));
  t.shape_ = std::move(shape);
  return t;
}

template <typename T>
int Tensor<T>::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw std::out_of_range("axis out of range for shape " + shape_str(shape_));
  return shape_[static_cast<std::size_t>(axis)];
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape_numel(shape) != values_.size()) {
    throw std::invalid_argument("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

template <typename T>
void Tensor<T>::fill(T value) {
  for (auto& v : values_) v = value;
}

template <typename T>
bool Tensor<T>::all_finite() const {
  for (T v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace serrm
