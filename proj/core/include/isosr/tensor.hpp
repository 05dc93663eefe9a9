#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "isosr/error.hpp"

namespace isosr {

using i64 = std::int64_t;
using Shape = std::vector<std::int64_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (const std::int64_t e : s) {
    if (e < 0) throw ShapeError("negative extent in shape " + shape_str(s));
    if (e != 0 && n > std::numeric_limits<std::int64_t>::max() / (e == 0 ? 1 : e)) {
      throw ShapeError("extent overflow in shape " + shape_str(s));
    }
    n *= e;
  }
  return n;
}

// Dense row-major N-d array. The last axis is contiguous. Network activations
// use the fixed 5-axis order (batch, channel, x, y, z).
template <class T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size())) {
      throw ShapeError("data length does not match shape " + shape_str(shape_));
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T{0}); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T{1}); }
  static Tensor full(Shape shape, T value) { return Tensor(std::move(shape), value); }

  const Shape& shape() const { return shape_; }
  std::int64_t ndim() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t extent(std::int64_t axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> flat() { return {data_.data(), data_.size()}; }
  std::span<const T> flat() const { return {data_.data(), data_.size()}; }

  void fill(T value) { data_.assign(data_.size(), value); }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // Row-major flat index: ((i0*s1 + i1)*s2 + ...).
  std::int64_t index(std::span<const std::int64_t> idx) const {
    std::int64_t flat = 0;
    for (std::size_t a = 0; a < shape_.size(); ++a) flat = flat * shape_[a] + idx[a];
    return flat;
  }

  T& at(std::initializer_list<std::int64_t> idx) {
    return data_[static_cast<std::size_t>(index(std::span<const std::int64_t>(idx.begin(), idx.size())))];
  }
  const T& at(std::initializer_list<std::int64_t> idx) const {
    return data_[static_cast<std::size_t>(index(std::span<const std::int64_t>(idx.begin(), idx.size())))];
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[static_cast<std::int64_t>(i)] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] - b[i];
  return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
  return out;
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * s;
  return out;
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + s;
  return out;
}

// Mean over all elements, fixed left-to-right order, double accumulator.
template <class T>
double reduce_mean(const Tensor<T>& a) {
  if (a.empty()) throw DataError("reduce_mean: empty tensor");
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) acc += static_cast<double>(a[i]);
  return acc / static_cast<double>(a.numel());
}

template <class T>
double reduce_max(const Tensor<T>& a) {
  if (a.empty()) throw DataError("reduce_max: empty tensor");
  double best = static_cast<double>(a[0]);
  for (std::int64_t i = 1; i < a.numel(); ++i) {
    const double v = static_cast<double>(a[i]);
    if (v > best) best = v;
  }
  return best;
}

// Copy of the sub-block given per-axis [begin, end) ranges.
template <class T>
Tensor<T> crop(const Tensor<T>& a, std::span<const std::pair<std::int64_t, std::int64_t>> ranges) {
  if (static_cast<std::int64_t>(ranges.size()) != a.ndim()) {
    throw ShapeError("crop: rank mismatch");
  }
  Shape out_shape(ranges.size());
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    const auto [b, e] = ranges[i];
    if (b < 0 || e < b || e > a.extent(static_cast<std::int64_t>(i))) {
      throw ShapeError("crop: range out of bounds on axis " + std::to_string(i));
    }
    out_shape[i] = e - b;
  }
  Tensor<T> out(out_shape);
  if (out.empty()) return out;
  // Iterate output multi-indices in row-major order.
  std::vector<std::int64_t> idx(ranges.size(), 0);
  std::vector<std::int64_t> src(ranges.size());
  for (std::int64_t flat = 0; flat < out.numel(); ++flat) {
    for (std::size_t i = 0; i < ranges.size(); ++i) src[i] = ranges[i].first + idx[i];
    out[flat] = a[a.index(src)];
    for (std::int64_t axis = static_cast<std::int64_t>(ranges.size()) - 1; axis >= 0; --axis) {
      if (++idx[static_cast<std::size_t>(axis)] < out_shape[static_cast<std::size_t>(axis)]) break;
      idx[static_cast<std::size_t>(axis)] = 0;
    }
  }
  return out;
}

template <class T>
Tensor<T> crop(const Tensor<T>& a, std::initializer_list<std::pair<std::int64_t, std::int64_t>> ranges) {
  return crop(a, std::span<const std::pair<std::int64_t, std::int64_t>>(ranges.begin(), ranges.size()));
}

}  // namespace isosr
