#pragma once

#include <vector>

#include "psr/types.hpp"

namespace psr {

/// Centered 1D convolution kernel over x. `center` is the index of the
/// kernel origin; a symmetric kernel of odd length L has center (L-1)/2.
struct Filter {
  std::vector<Real> k;
  int center = 0;

  Filter() = default;
  Filter(std::vector<Real> taps, int c) : k(std::move(taps)), center(c) {}
  int len() const { return static_cast<int>(k.size()); }
};

/// Identity (discrete delta) filter of length 1.
Filter delta_filter();

// All spatial operators below share one boundary rule: the signal is
// zero-padded, the linear convolution is evaluated on the full line, and
// the output is read off the window [0, n). Large kernels go through an
// FFT path that is checked against the direct sums in the test suite.

/// out[i] = sum_j k[j] * x[i - j + center], i in [0, n).
void conv_same(const Filter& f, const Real* x, int n, Real* out);

/// Adjoint of conv_same: out[j] = sum_i k[i] * x[j + i - center].
void corr_same(const Filter& f, const Real* x, int n, Real* out);

/// Full linear convolution, length a.size() + b.size() - 1.
std::vector<Real> conv_full(const std::vector<Real>& a, const std::vector<Real>& b);

/// Accumulate d(sum_i gbar[i] * conv_same(k, x)[i]) / dk[j] into gk[0..L).
/// gk[j] += sum_i gbar[i] * x[i - j + center].
void kernel_grad_accum(const Real* x, const Real* gbar, int n, int len, int center, Real* gk);

// Row-wise wrappers over (n_meas, n_x) matrices.
void conv_same_rows(const Filter& f, const Matrix& x, Matrix& out);
void conv_same_rows_add(const Filter& f, const Matrix& x, Matrix& out);
void corr_same_rows(const Filter& f, const Matrix& x, Matrix& out);
void kernel_grad_rows_accum(const Matrix& x, const Matrix& gbar, int len, int center, Real* gk);

/// Force the O(n*L) direct path (used by oracle tests).
void conv_same_direct(const Filter& f, const Real* x, int n, Real* out);
void corr_same_direct(const Filter& f, const Real* x, int n, Real* out);

}  // namespace psr
