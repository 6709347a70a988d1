#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fairfed {

/// Dense row-major matrix of doubles.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, 0.0) {}

  double* row(int i) { return values.data() + static_cast<std::size_t>(i) * cols; }
  const double* row(int i) const { return values.data() + static_cast<std::size_t>(i) * cols; }

  std::span<const double> row_span(int i) const { return {row(i), static_cast<std::size_t>(cols)}; }

  double& at(int i, int j) { return values[static_cast<std::size_t>(i) * cols + j]; }
  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * cols + j]; }
};

}  // namespace fairfed
