#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace revis {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles; rows are state vectors.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

  template <typename T>
  void append_row(std::span<const T> values) {
    if (rows == 0 && cols == 0) cols = values.size();
    data.insert(data.end(), values.begin(), values.end());
    ++rows;
  }

  bool empty() const noexcept { return rows == 0; }
  bool operator==(const Matrix&) const = default;
};

}  // namespace revis
