#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cnnf/error.hpp"
#include "cnnf/rng.hpp"

namespace cnnf {

struct Shape4 {
  std::size_t n = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t c = 0;

  friend bool operator==(const Shape4&, const Shape4&) = default;

  // Total element count; throws ShapeError on a zero dimension or size_t overflow.
  std::size_t count() const {
    if (n == 0 || h == 0 || w == 0 || c == 0)
      throw ShapeError("invalid shape " + to_string() + ": every dimension must be >= 1");
    std::size_t total = 1;
    for (std::size_t d : {n, h, w, c}) {
      if (total > std::numeric_limits<std::size_t>::max() / d)
        throw ShapeError("invalid shape " + to_string() + ": element count overflows");
      total *= d;
    }
    return total;
  }

  std::string to_string() const {
    return "(" + std::to_string(n) + "," + std::to_string(h) + "," + std::to_string(w) + "," +
           std::to_string(c) + ")";
  }
};

inline std::ostream& operator<<(std::ostream& os, const Shape4& s) { return os << s.to_string(); }

// Dense N x H x W x C array, channel fastest. Offsets follow ((i*h + y)*w + x)*c + k.
template <class T>
class Tensor4 {
public:
  using value_type = T;

  Tensor4() = default;

  explicit Tensor4(Shape4 shape, T fill = T(0)) : shape_(shape), data_(shape.count(), fill) {}

  Tensor4(Shape4 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.count())
      throw ShapeError("buffer of " + std::to_string(data_.size()) + " elements does not match shape " +
                       shape_.to_string());
  }

  const Shape4& shape() const noexcept { return shape_; }
  std::size_t n() const noexcept { return shape_.n; }
  std::size_t h() const noexcept { return shape_.h; }
  std::size_t w() const noexcept { return shape_.w; }
  std::size_t c() const noexcept { return shape_.c; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t offset(std::size_t i, std::size_t y, std::size_t x, std::size_t k) const noexcept {
    return ((i * shape_.h + y) * shape_.w + x) * shape_.c + k;
  }

  T& operator()(std::size_t i, std::size_t y, std::size_t x, std::size_t k) noexcept {
    return data_[offset(i, y, x, k)];
  }
  const T& operator()(std::size_t i, std::size_t y, std::size_t x, std::size_t k) const noexcept {
    return data_[offset(i, y, x, k)];
  }

  T& operator[](std::size_t idx) noexcept { return data_[idx]; }
  const T& operator[](std::size_t idx) const noexcept { return data_[idx]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& buffer() const noexcept { return data_; }
  std::vector<T> release() && noexcept {
    shape_ = {};
    return std::move(data_);
  }

  // One batch item, as a contiguous span of h*w*c elements.
  std::span<T> item(std::size_t i) noexcept {
    const std::size_t stride = shape_.h * shape_.w * shape_.c;
    return std::span<T>(data_).subspan(i * stride, stride);
  }
  std::span<const T> item(std::size_t i) const noexcept {
    const std::size_t stride = shape_.h * shape_.w * shape_.c;
    return std::span<const T>(data_).subspan(i * stride, stride);
  }

  friend bool operator==(const Tensor4& a, const Tensor4& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

private:
  Shape4 shape_{};
  std::vector<T> data_;
};

template <class T>
Tensor4<T> zeros(Shape4 shape) {
  return Tensor4<T>(shape, T(0));
}

// I.i.d. normal samples drawn in offset order from Rng(seed).
template <class T>
Tensor4<T> fill_gaussian(Shape4 shape, double mean, double variance, std::uint64_t seed) {
  if (!(variance >= 0.0)) throw InvalidArgument("fill_gaussian: variance must be >= 0");
  Tensor4<T> out(shape);
  if (variance == 0.0) {
    for (auto& v : out.data()) v = static_cast<T>(mean);
    return out;
  }
  const double sd = std::sqrt(variance);
  Rng rng(seed);
  for (auto& v : out.data()) v = static_cast<T>(mean + sd * rng.normal());
  return out;
}

template <class T>
Tensor4<T> reshape(const Tensor4<T>& t, Shape4 shape) {
  if (shape.count() != t.size())
    throw ShapeError("reshape " + t.shape().to_string() + " -> " + shape.to_string() +
                     ": element counts differ");
  return Tensor4<T>(shape, t.buffer());
}

template <class T>
Tensor4<T> reshape(Tensor4<T>&& t, Shape4 shape) {
  if (shape.count() != t.size())
    throw ShapeError("reshape " + t.shape().to_string() + " -> " + shape.to_string() +
                     ": element counts differ");
  return Tensor4<T>(shape, std::move(t).release());
}

template <class To, class From>
Tensor4<To> tensor_cast(const Tensor4<From>& t) {
  std::vector<To> buf(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) buf[i] = static_cast<To>(t[i]);
  return Tensor4<To>(t.shape(), std::move(buf));
}

}  // namespace cnnf
