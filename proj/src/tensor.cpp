#include "drnet/tensor.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>

#include "drnet/error.hpp"

namespace drnet {

std::size_t Shape::numel() const {
  return std::accumulate(dims_.begin(), dims_.end(), std::size_t{1}, std::multiplies<>());
}

std::string Shape::str() const { return fmt::format("[{}]", fmt::join(dims_, ",")); }

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) throw ShapeError(fmt::format("{}: shape mismatch {} vs {}", what, a.str(), b.str()));
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_.numel(), fill) {
  for (std::size_t d : shape_.dims())
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_.str());
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (std::size_t d : shape_.dims())
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_.str());
  if (data_.size() != shape_.numel())
    throw ShapeError(fmt::format("tensor data length {} does not match shape {}", data_.size(), shape_.str()));
}

template <typename T>
Tensor<T> Tensor<T>::uniform(Shape shape, RngStream& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (auto& v : t.data_) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::normal(Shape shape, RngStream& rng, double mean, double stddev) {
  Tensor t(std::move(shape));
  for (auto& v : t.data_) v = static_cast<T>(rng.normal(mean, stddev));
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape.numel() != numel())
    throw ShapeError(fmt::format("cannot reshape {} to {}", shape_.str(), shape.str()));
  return Tensor(std::move(shape), data_);
}

template <typename T>
T Tensor<T>::item() const {
  if (data_.size() != 1) throw ShapeError("item() needs a single-element tensor, got " + shape_.str());
  return data_[0];
}

template <typename T>
T Tensor<T>::sum() const {
  return std::accumulate(data_.begin(), data_.end(), T(0));
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace drnet
