#include "psr/conv.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <mutex>

namespace psr {

Filter delta_filter() { return Filter({1.0}, 0); }

// ---------------------------------------------------------------------------
// Direct sums. Tap-major loops so the inner loop is a contiguous axpy.
// ---------------------------------------------------------------------------

void conv_same_direct(const Filter& f, const Real* x, int n, Real* out) {
  std::fill(out, out + n, 0.0);
  const int len = f.len();
  const int c = f.center;
  for (int j = 0; j < len; ++j) {
    const Real kj = f.k[j];
    if (kj == 0.0) continue;
    // x index i - j + c must lie in [0, n)
    const int i0 = std::max(0, j - c);
    const int i1 = std::min(n, n + j - c);
    const Real* xs = x + (i0 - j + c);
    for (int i = i0; i < i1; ++i) out[i] += kj * xs[i - i0];
  }
}

void corr_same_direct(const Filter& f, const Real* x, int n, Real* out) {
  std::fill(out, out + n, 0.0);
  const int len = f.len();
  const int c = f.center;
  for (int j = 0; j < len; ++j) {
    const Real kj = f.k[j];
    if (kj == 0.0) continue;
    // x index i + j - c must lie in [0, n)
    const int i0 = std::max(0, c - j);
    const int i1 = std::min(n, n + c - j);
    const Real* xs = x + (i0 + j - c);
    for (int i = i0; i < i1; ++i) out[i] += kj * xs[i - i0];
  }
}

static void kernel_grad_direct(const Real* x, const Real* gbar, int n, int len, int c,
                               Real* gk) {
  for (int j = 0; j < len; ++j) {
    const int i0 = std::max(0, j - c);
    const int i1 = std::min(n, n + j - c);
    const Real* xs = x + (i0 - j + c);
    Real acc = 0;
    for (int i = i0; i < i1; ++i) acc += gbar[i] * xs[i - i0];
    gk[j] += acc;
  }
}

// ---------------------------------------------------------------------------
// FFT path. One r2c/c2r plan pair per padded size, created under a mutex
// with FFTW_ESTIMATE so the plan depends only on the size, never on timing.
// Execution uses per-thread aligned scratch via the new-array interface.
// ---------------------------------------------------------------------------

namespace {

struct FftPlanPair {
  fftw_plan fwd = nullptr;
  fftw_plan inv = nullptr;
};

std::mutex g_plan_mutex;

const FftPlanPair& plans_for(int n) {
  static std::map<int, FftPlanPair> table;
  std::lock_guard<std::mutex> lock(g_plan_mutex);
  auto it = table.find(n);
  if (it != table.end()) return it->second;
  FftPlanPair p;
  double* re = fftw_alloc_real(n);
  fftw_complex* cx = fftw_alloc_complex(n / 2 + 1);
  p.fwd = fftw_plan_dft_r2c_1d(n, re, cx, FFTW_ESTIMATE);
  p.inv = fftw_plan_dft_c2r_1d(n, cx, re, FFTW_ESTIMATE);
  fftw_free(re);
  fftw_free(cx);
  return table.emplace(n, p).first->second;
}

struct Scratch {
  int n = 0;
  double* re = nullptr;
  fftw_complex* sa = nullptr;
  fftw_complex* sb = nullptr;

  void ensure(int want) {
    if (n >= want) return;
    release();
    n = want;
    re = fftw_alloc_real(n);
    sa = fftw_alloc_complex(n / 2 + 1);
    sb = fftw_alloc_complex(n / 2 + 1);
  }
  void release() {
    if (re) fftw_free(re);
    if (sa) fftw_free(sa);
    if (sb) fftw_free(sb);
    re = nullptr;
    sa = sb = nullptr;
    n = 0;
  }
  ~Scratch() { release(); }
};

thread_local Scratch tl_scratch;

int padded_size(int need) {
  int n = 16;
  while (n < need) n <<= 1;
  return n;
}

// Crossover is a pure function of the two lengths so both paths stay
// reproducible run to run.
bool use_fft(int n, int len) {
  const double direct = static_cast<double>(n) * static_cast<double>(len);
  const int nf = padded_size(n + len - 1);
  const double fft = 10.0 * nf * std::max(1.0, std::log2(static_cast<double>(nf)));
  return direct > fft;
}

void load_padded(const Real* seq, int len, int nf, double* rebuf) {
  std::memcpy(rebuf, seq, sizeof(double) * static_cast<size_t>(len));
  std::memset(rebuf + len, 0, sizeof(double) * static_cast<size_t>(nf - len));
}

// out[i] = fullconv(a, b)[i + off] for i in [0, nout), zero outside the
// support [0, la + lb - 1).
void fft_conv_window(const Real* a, int la, const Real* b, int lb, int off, int nout,
                     Real* out) {
  const int support = la + lb - 1;
  const int nf = padded_size(support);
  Scratch& s = tl_scratch;
  s.ensure(nf);
  const FftPlanPair& p = plans_for(nf);

  load_padded(a, la, nf, s.re);
  fftw_execute_dft_r2c(p.fwd, s.re, s.sa);
  load_padded(b, lb, nf, s.re);
  fftw_execute_dft_r2c(p.fwd, s.re, s.sb);

  const double scale = 1.0 / nf;
  const int nh = nf / 2 + 1;
  for (int i = 0; i < nh; ++i) {
    const double ar = s.sa[i][0], ai = s.sa[i][1];
    const double br = s.sb[i][0], bi = s.sb[i][1];
    s.sa[i][0] = (ar * br - ai * bi) * scale;
    s.sa[i][1] = (ar * bi + ai * br) * scale;
  }
  fftw_execute_dft_c2r(p.inv, s.sa, s.re);

  for (int i = 0; i < nout; ++i) {
    const int src = i + off;
    out[i] = (src >= 0 && src < support) ? s.re[src] : 0.0;
  }
}

}  // namespace

void conv_same(const Filter& f, const Real* x, int n, Real* out) {
  if (!use_fft(n, f.len())) {
    conv_same_direct(f, x, n, out);
    return;
  }
  // out[i] = fullconv(k, x)[i + center]
  fft_conv_window(f.k.data(), f.len(), x, n, f.center, n, out);
}

void corr_same(const Filter& f, const Real* x, int n, Real* out) {
  if (!use_fft(n, f.len())) {
    corr_same_direct(f, x, n, out);
    return;
  }
  // out[j] = fullconv(rev(k), x)[j + len - 1 - center]
  std::vector<Real> rk(f.k.rbegin(), f.k.rend());
  fft_conv_window(rk.data(), f.len(), x, n, f.len() - 1 - f.center, n, out);
}

std::vector<Real> conv_full(const std::vector<Real>& a, const std::vector<Real>& b) {
  if (a.empty() || b.empty()) return {};
  const int la = static_cast<int>(a.size());
  const int lb = static_cast<int>(b.size());
  std::vector<Real> out(static_cast<size_t>(la + lb - 1), 0.0);
  if (use_fft(lb, la)) {
    fft_conv_window(a.data(), la, b.data(), lb, 0, la + lb - 1, out.data());
    return out;
  }
  for (int j = 0; j < la; ++j) {
    const Real aj = a[j];
    if (aj == 0.0) continue;
    for (int i = 0; i < lb; ++i) out[j + i] += aj * b[i];
  }
  return out;
}

void kernel_grad_accum(const Real* x, const Real* gbar, int n, int len, int center,
                       Real* gk) {
  if (!use_fft(n, len)) {
    kernel_grad_direct(x, gbar, n, len, center, gk);
    return;
  }
  // gk[j] += fullconv(gbar, rev(x))[n - 1 - center + j]
  std::vector<Real> xr(x, x + n);
  std::reverse(xr.begin(), xr.end());
  std::vector<Real> tmp(static_cast<size_t>(len));
  fft_conv_window(gbar, n, xr.data(), n, n - 1 - center, len, tmp.data());
  for (int j = 0; j < len; ++j) gk[j] += tmp[j];
}

void conv_same_rows(const Filter& f, const Matrix& x, Matrix& out) {
  check_shape(x, out, "conv_same_rows");
  for (int r = 0; r < x.rows; ++r) conv_same(f, x.row(r), x.cols, out.row(r));
}

void conv_same_rows_add(const Filter& f, const Matrix& x, Matrix& out) {
  check_shape(x, out, "conv_same_rows_add");
  std::vector<Real> tmp(static_cast<size_t>(x.cols));
  for (int r = 0; r < x.rows; ++r) {
    conv_same(f, x.row(r), x.cols, tmp.data());
    Real* o = out.row(r);
    for (int i = 0; i < x.cols; ++i) o[i] += tmp[i];
  }
}

void corr_same_rows(const Filter& f, const Matrix& x, Matrix& out) {
  check_shape(x, out, "corr_same_rows");
  for (int r = 0; r < x.rows; ++r) corr_same(f, x.row(r), x.cols, out.row(r));
}

void kernel_grad_rows_accum(const Matrix& x, const Matrix& gbar, int len, int center,
                            Real* gk) {
  check_shape(x, gbar, "kernel_grad_rows_accum");
  for (int r = 0; r < x.rows; ++r)
    kernel_grad_accum(x.row(r), gbar.row(r), x.cols, len, center, gk);
}

}  // namespace psr
