#include "psr/thermal.hpp"

#include <cmath>
#include <fstream>

#include "psr/tensor_io.hpp"

namespace psr {

void MaterialParams::validate() const {
  if (rho <= 0 || c_p <= 0 || alpha <= 0)
    throw std::invalid_argument("MaterialParams: rho, c_p, alpha must be > 0");
  if (reflectance < 0 || reflectance > 1)
    throw std::invalid_argument("MaterialParams: reflectance must be in [0, 1]");
  if (thickness <= 0) throw std::invalid_argument("MaterialParams: thickness must be > 0");
  if (depth != 0 && depth != thickness)
    throw std::invalid_argument("MaterialParams: depth must be 0 or thickness");
  if (p_max < 1) throw std::invalid_argument("MaterialParams: p_max must be >= 1");
}

void PulseProfile::validate() const {
  if (duration <= 0 || amplitude <= 0)
    throw std::invalid_argument("PulseProfile: duration and amplitude must be > 0");
}

Real eval_green(Real x, Real y, Real t, const MaterialParams& params) {
  params.validate();
  if (t <= 0) throw std::domain_error("eval_green: t must be > 0");
  const Real four_at = 4.0 * params.alpha * t;
  const Real front = 2.0 / (4.0 * M_PI * params.alpha * params.rho * params.c_p);
  const Real radial = std::exp(-(x * x + y * y) / four_at);
  Real sum = 0;
  Real r_pow = 1.0;  // reflectance^(2(p-1))
  const Real r2 = params.reflectance * params.reflectance;
  for (int p = 1; p <= params.p_max; ++p) {
    const Real d = 2.0 * p * params.thickness + params.depth;
    sum += r_pow * std::exp(-(d * d) / four_at);
    r_pow *= r2;
  }
  return front * radial * sum;
}

PsfKernel build_psf(const Grid& grid, const MaterialParams& params) {
  grid.validate();
  params.validate();
  PsfKernel psf;
  psf.grid = grid;
  psf.values.resize(static_cast<size_t>(grid.n_x) * grid.n_y * grid.n_t);
  const int cx = psf.c_x();
  const int cy = psf.c_y();
  for (int k = 0; k < grid.n_t; ++k) {
    const Real t = (k + 1) * grid.dt;
    for (int j = 0; j < grid.n_y; ++j) {
      const Real y = (j - cy) * grid.dy;
      for (int i = 0; i < grid.n_x; ++i) {
        const Real x = (i - cx) * grid.dx;
        psf.at(i, j, k) = eval_green(x, y, t, params);
      }
    }
  }
  return psf;
}

PsfKernel convolve_pulse(const PsfKernel& psf, const PulseProfile& pulse) {
  pulse.validate();
  const Grid& g = psf.grid;
  if (pulse.duration < g.dt)
    throw std::invalid_argument("convolve_pulse: pulse shorter than one frame");
  const int n_p = static_cast<int>(std::llround(pulse.duration / g.dt));
  PsfKernel out;
  out.grid = g;
  out.pulse_convolved = true;
  out.values.assign(psf.values.size(), 0.0);
  const size_t slice = static_cast<size_t>(g.n_x) * g.n_y;
  const Real w = pulse.amplitude * g.dt;
  for (int k = 0; k < g.n_t; ++k) {
    Real* dst = out.values.data() + slice * k;
    const int taps = std::min(n_p, k + 1);
    for (int i = 0; i < taps; ++i) {
      const Real* src = psf.values.data() + slice * (k - i);
      for (size_t s = 0; s < slice; ++s) dst[s] += w * src[s];
    }
  }
  return out;
}

PsfKernel psf_slice_1d(const PsfKernel& psf) {
  if (psf.grid.n_y == 1) return psf;
  PsfKernel out;
  out.grid = psf.grid;
  out.grid.n_y = 1;
  out.pulse_convolved = psf.pulse_convolved;
  out.values.resize(static_cast<size_t>(out.grid.n_x) * out.grid.n_t);
  const int cy = psf.c_y();
  for (int k = 0; k < psf.grid.n_t; ++k)
    for (int i = 0; i < psf.grid.n_x; ++i) out.at(i, 0, k) = psf.at(i, cy, k);
  return out;
}

Filter spatial_filter(const PsfKernel& psf, TimeCollapse mode, int frame, int max_radius) {
  const Grid& g = psf.grid;
  if (g.n_y != 1)
    throw std::invalid_argument("spatial_filter: collapse the y axis first (psf_slice_1d)");
  if (mode == TimeCollapse::Frame && (frame < 0 || frame >= g.n_t))
    throw std::invalid_argument("spatial_filter: frame out of range");

  std::vector<Real> prof(g.n_x, 0.0);
  if (mode == TimeCollapse::Integrate) {
    for (int k = 0; k < g.n_t; ++k)
      for (int i = 0; i < g.n_x; ++i) prof[i] += psf.at(i, 0, k) * g.dt;
  } else {
    for (int i = 0; i < g.n_x; ++i) prof[i] = psf.at(i, 0, frame);
  }

  const int cx = g.n_x / 2;
  // symmetric odd-length support: the widest radius present on both sides
  int radius = std::min(cx, g.n_x - 1 - cx);
  if (max_radius > 0) radius = std::min(radius, max_radius);
  Filter f;
  f.center = radius;
  f.k.resize(2 * radius + 1);
  for (int d = -radius; d <= radius; ++d) f.k[radius + d] = prof[cx + d];
  bool nonzero = false;
  for (Real v : f.k) nonzero |= (v != 0.0);
  if (!nonzero) throw std::invalid_argument("spatial_filter: kernel is identically zero");
  return f;
}

PsfKernel normalize_peak(const PsfKernel& psf) {
  Real peak = 0;
  for (Real v : psf.values)
    if (v > peak) peak = v;
  if (!(peak > 0)) throw std::invalid_argument("normalize_peak: kernel has no positive value");
  PsfKernel out = psf;
  for (Real& v : out.values) v /= peak;
  return out;
}

void write_psf(const std::string& path, const PsfKernel& psf) {
  Tensor3 t;
  t.a = static_cast<uint32_t>(psf.grid.n_x);
  t.b = static_cast<uint32_t>(psf.grid.n_y);
  t.c = static_cast<uint32_t>(psf.grid.n_t);
  t.da = psf.grid.dx;
  t.db = psf.grid.dy;
  t.dc = psf.grid.dt;
  t.values = psf.values;
  write_tensor3(path, t);
}

PsfKernel read_psf(const std::string& path) {
  Tensor3 t = read_tensor3(path);
  PsfKernel psf;
  psf.grid.n_x = static_cast<int>(t.a);
  psf.grid.n_y = static_cast<int>(t.b);
  psf.grid.n_t = static_cast<int>(t.c);
  psf.grid.dx = t.da;
  psf.grid.dy = t.db;
  psf.grid.dt = t.dc;
  psf.grid.validate();
  // the container does not record pulse state; callers track it
  psf.values = std::move(t.values);
  return psf;
}

void write_psf_csv(const std::string& path, const PsfKernel& psf) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  for (int k = 0; k < psf.grid.n_t; ++k)
    for (int j = 0; j < psf.grid.n_y; ++j) {
      os << j << ',' << k;
      for (int i = 0; i < psf.grid.n_x; ++i) os << ',' << format_real(psf.at(i, j, k));
      os << '\n';
    }
  if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace psr
