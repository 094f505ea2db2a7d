#include "suta/tensor.hpp"

#include <cmath>

#include "suta/errors.hpp"

namespace suta {

Tensor::Tensor(std::size_t r, std::size_t c, std::vector<double> v)
    : rows(r), cols(c), values(std::move(v)) {
  SUTA_REQUIRE(values.size() == rows * cols, "tensor value count does not match shape");
}

double Tensor::item() const {
  SUTA_REQUIRE(rows == 1 && cols == 1, "item() requires a 1x1 tensor, got " + shape_string());
  return values[0];
}

std::string Tensor::shape_string() const {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

std::size_t argmax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

bool all_finite(const Tensor& t) {
  for (double v : t.values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace suta
