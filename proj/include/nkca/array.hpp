#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "nkca/error.hpp"

namespace nkca {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_to_string(const Shape& shape);

/// Dense row-major array. `NumericArray` (float) is the storage type;
/// `NumericArray64` is used by oracles and finite-difference checks.
template <typename T>
class BasicArray {
 public:
  using value_type = T;

  BasicArray() = default;

  explicit BasicArray(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

  BasicArray(Shape shape, std::vector<T> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    if (shape_size(shape_) != values_.size()) {
      throw ShapeError("array shape " + shape_to_string(shape_) + " holds " +
                       std::to_string(shape_size(shape_)) + " values, got " +
                       std::to_string(values_.size()));
    }
    for (const T& v : values_) {
      if (!std::isfinite(static_cast<double>(v))) {
        throw DomainError("array contains a non-finite value");
      }
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t rank() const noexcept { return shape_.size(); }

  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }
  std::vector<T>& storage() noexcept { return values_; }
  const std::vector<T>& storage() const noexcept { return values_; }
  T* data() noexcept { return values_.data(); }
  const T* data() const noexcept { return values_.data(); }

  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  bool all_finite() const {
    for (const T& v : values_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  template <typename U>
  BasicArray<U> cast() const {
    BasicArray<U> out(shape_);
    for (std::size_t i = 0; i < values_.size(); ++i) {
      out[i] = static_cast<U>(values_[i]);
    }
    return out;
  }

  friend bool operator==(const BasicArray& a, const BasicArray& b) = default;

 private:
  Shape shape_;
  std::vector<T> values_;
};

using NumericArray = BasicArray<float>;
using NumericArray64 = BasicArray<double>;

/// Named tensors in deterministic (sorted) order.
template <typename T>
using TensorMap = std::map<std::string, BasicArray<T>>;

template <typename U, typename T>
TensorMap<U> cast_tensors(const TensorMap<T>& in) {
  TensorMap<U> out;
  for (const auto& [name, array] : in) out.emplace(name, array.template cast<U>());
  return out;
}

/// Same names, same shapes; all values zero.
template <typename T>
TensorMap<T> zeros_like(const TensorMap<T>& in) {
  TensorMap<T> out;
  for (const auto& [name, array] : in) out.emplace(name, BasicArray<T>(array.shape()));
  return out;
}

template <typename A, typename B>
void require_same_layout(const TensorMap<A>& a, const TensorMap<B>& b,
                         const std::string& context) {
  if (a.size() != b.size()) {
    throw ShapeError(context + ": tensor count mismatch (" +
                     std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
  auto ia = a.begin();
  auto ib = b.begin();
  for (; ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first) {
      throw ShapeError(context + ": tensor name mismatch ('" + ia->first +
                       "' vs '" + ib->first + "')");
    }
    if (ia->second.shape() != ib->second.shape()) {
      throw ShapeError(context + ": shape mismatch for '" + ia->first + "' " +
                       shape_to_string(ia->second.shape()) + " vs " +
                       shape_to_string(ib->second.shape()));
    }
  }
}

template <typename T>
std::size_t parameter_count(const TensorMap<T>& tensors) {
  std::size_t n = 0;
  for (const auto& [name, array] : tensors) n += array.size();
  return n;
}

}  // namespace nkca
