#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace psr {

using Real = double;

/// Discretization of the measurement window.
/// Spacings are SI (meters, seconds); counts are >= 1.
struct Grid {
  int n_x = 1;
  int n_y = 1;
  int n_t = 1;
  Real dx = 1e-4;  // m / pixel
  Real dy = 1e-4;  // m / pixel
  Real dt = 0.1;   // s / frame

  void validate() const {
    if (n_x < 1 || n_y < 1 || n_t < 1)
      throw std::invalid_argument("Grid: all counts must be >= 1");
    if (dx <= 0 || dy <= 0 || dt <= 0)
      throw std::invalid_argument("Grid: all spacings must be > 0");
  }
};

/// Dense row-major matrix. Rows index measurements, columns index pixels
/// throughout the solver code (the l2,1 block is a column).
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<Real> v;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}

  Real& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  Real at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  Real* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
  const Real* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  void fill(Real x) { std::fill(v.begin(), v.end(), x); }

  Real frob_sq() const {
    Real s = 0;
    for (Real x : v) s += x * x;
    return s;
  }
};

inline void check_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                std::to_string(a.rows) + "x" + std::to_string(a.cols) + " vs " +
                                std::to_string(b.rows) + "x" + std::to_string(b.cols) + ")");
}

}  // namespace psr
