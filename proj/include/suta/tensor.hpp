#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace suta {

// Dense row-major matrix of doubles. Sequences are time-major: one frame per row.
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
  Tensor(std::size_t r, std::size_t c, std::vector<double> v);

  static Tensor zeros(std::size_t r, std::size_t c) { return Tensor(r, c, 0.0); }
  static Tensor scalar(double v) { return Tensor(1, 1, v); }

  std::size_t size() const noexcept { return values.size(); }
  bool same_shape(const Tensor& other) const noexcept {
    return rows == other.rows && cols == other.cols;
  }

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {values.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }

  double item() const;
  std::string shape_string() const;

  bool operator==(const Tensor&) const = default;
};

// Index of the largest entry of a row; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> row);

bool all_finite(const Tensor& t);

}  // namespace suta
