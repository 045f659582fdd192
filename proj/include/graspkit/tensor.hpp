#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "graspkit/error.hpp"

namespace graspkit {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

// Dense row-major tensor of arbitrary rank. Images are stored CHW, batches
// NCHW, 2-D maps HxW.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{}) : shape_(std::move(shape)) {
    data_.assign(count(shape_), fill);
  }
  Tensor(std::initializer_list<std::size_t> shape, T fill = T{})
      : Tensor(Shape(shape), fill) {}
  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != count(shape_))
      throw config_error("tensor: " + std::to_string(data_.size()) +
                         " values do not fill shape " + shape_string(shape_));
  }

  static std::size_t count(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  T& operator()(std::size_t c, std::size_t i, std::size_t j) {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }
  const T& operator()(std::size_t c, std::size_t i, std::size_t j) const {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }
  T& operator()(std::size_t n, std::size_t c, std::size_t i, std::size_t j) {
    return data_[((n * shape_[1] + c) * shape_[2] + i) * shape_[3] + j];
  }
  const T& operator()(std::size_t n, std::size_t c, std::size_t i, std::size_t j) const {
    return data_[((n * shape_[1] + c) * shape_[2] + i) * shape_[3] + j];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape s) const {
    if (count(s) != data_.size())
      throw config_error("tensor: cannot reshape " + shape_string(shape_) + " to " +
                         shape_string(s));
    return Tensor(std::move(s), data_);
  }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

// Copies sample `n` of an NCHW batch into a CHW tensor.
template <class T>
Tensor<T> batch_item(const Tensor<T>& batch, std::size_t n) {
  const std::size_t per = batch.size() / batch.dim(0);
  Shape s(batch.shape().begin() + 1, batch.shape().end());
  std::vector<T> v(batch.data() + n * per, batch.data() + (n + 1) * per);
  return Tensor<T>(std::move(s), std::move(v));
}

// Stacks equally shaped tensors along a new leading axis.
template <class T>
Tensor<T> stack(std::span<const Tensor<T>* const> items) {
  if (items.empty()) throw config_error("stack: no items");
  Shape s = items.front()->shape();
  s.insert(s.begin(), items.size());
  Tensor<T> out(s);
  const std::size_t per = items.front()->size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i]->shape() != items.front()->shape())
      throw config_error("stack: shape mismatch " + shape_string(items[i]->shape()));
    std::copy(items[i]->data(), items[i]->data() + per, out.data() + i * per);
  }
  return out;
}

template <class T>
Tensor<T> stack(const std::vector<Tensor<T>>& items) {
  std::vector<const Tensor<T>*> ptrs;
  for (const auto& t : items) ptrs.push_back(&t);
  return stack<T>(std::span<const Tensor<T>* const>(ptrs));
}

}  // namespace graspkit
