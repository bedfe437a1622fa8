#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "radartrack/common.hpp"

namespace radartrack::nn {

/// Dense row-major tensor with an optional gradient buffer of the same shape.
template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> values;
  std::vector<T> grad;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, T fill = T(0))
      : shape(std::move(dims)), values(element_count(shape), fill) {}

  static std::size_t element_count(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  T& operator[](std::size_t i) { return values[i]; }
  const T& operator[](std::size_t i) const { return values[i]; }

  bool has_grad() const { return grad.size() == values.size() && !values.empty(); }
  /// Allocates the gradient buffer if needed and fills it with zeros.
  void zero_grad() { grad.assign(values.size(), T(0)); }

  std::span<T> data() { return values; }
  std::span<const T> data() const { return values; }
};

inline std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace radartrack::nn
