#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <vector>

#include "oens/error.hpp"

namespace oens {

/// Dense n-dimensional array of 64-bit floats in row-major order.
/// Invariant: product(shape) == data.size(), every shape entry positive.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;

  Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in)
      : shape(std::move(shape_in)), data(std::move(data_in)) {
    if (element_count(shape) != data.size()) {
      throw ShapeError("tensor data length does not match shape");
    }
  }

  static std::size_t element_count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive");
      n *= d;
    }
    return shape.empty() ? 0 : n;
  }

  static Tensor zeros(std::vector<std::size_t> shape) {
    const std::size_t n = element_count(shape);
    Tensor t;
    t.shape = std::move(shape);
    t.data.assign(n, 0.0);
    return t;
  }

  std::size_t size() const { return data.size(); }

  // 2-d accessors; callers ensure rank 2.
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  bool all_finite() const {
    for (double v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  /// Bit-exact comparison (not tolerance-based); used by determinism checks.
  bool same_bits(const Tensor& other) const {
    if (shape != other.shape) return false;
    return std::memcmp(data.data(), other.data.data(), data.size() * sizeof(double)) == 0;
  }
};

}  // namespace oens
