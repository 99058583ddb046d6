#pragma once

#include <string>
#include <vector>

#include "psr/conv.hpp"
#include "psr/types.hpp"

namespace psr {

/// Plate material and observation geometry for the diffusion kernel.
/// depth selects the observed face: 0 (same side as the source) or
/// thickness (opposite side).
struct MaterialParams {
  Real rho = 7800.0;        // kg/m^3
  Real c_p = 440.0;         // J/kg/K
  Real alpha = 1.6e-5;      // m^2/s
  Real reflectance = 1.0;   // 0..1
  Real thickness = 3e-3;    // m
  Real depth = 3e-3;        // m, 0 or thickness
  int p_max = 5;            // reflection terms in the image sum

  void validate() const;
};

/// Rectangular excitation pulse: constant amplitude while on, zero after.
struct PulseProfile {
  Real duration = 0.5;      // s
  Real amplitude = 1.0;     // W/m^2

  void validate() const;
};

/// Discretized diffusion kernel, sampled on a centered spatial grid and a
/// time axis starting at dt. Layout is x-fastest, then y, then t.
struct PsfKernel {
  Grid grid;
  bool pulse_convolved = false;
  std::vector<Real> values;

  int c_x() const { return grid.n_x / 2; }
  int c_y() const { return grid.n_y / 2; }

  Real& at(int i, int j, int k) {
    return values[(static_cast<size_t>(k) * grid.n_y + j) * grid.n_x + i];
  }
  Real at(int i, int j, int k) const {
    return values[(static_cast<size_t>(k) * grid.n_y + j) * grid.n_x + i];
  }
};

/// Point response of the plate at lateral offset (x, y) and time t > 0,
/// truncated to p_max reflection terms. Throws std::domain_error for t <= 0.
Real eval_green(Real x, Real y, Real t, const MaterialParams& params);

/// Sample eval_green on the grid: value(i,j,k) at x=(i-c_x)dx, y=(j-c_y)dy,
/// t=(k+1)dt. The first frame sits at t=dt, never at the t=0 singularity.
PsfKernel build_psf(const Grid& grid, const MaterialParams& params);

/// Causal convolution along t with the discrete pulse (amplitude over
/// round(duration/dt) frames, scaled by dt), truncated to the input length.
/// Throws if duration < dt.
PsfKernel convolve_pulse(const PsfKernel& psf, const PulseProfile& pulse);

/// Central-y slice: the (x, t) kernel with y fixed at 0. Identity for
/// already-1D kernels.
PsfKernel psf_slice_1d(const PsfKernel& psf);

/// How the time axis is collapsed when a purely spatial operator is needed.
enum class TimeCollapse { Integrate, Frame };

/// Reduce an (x, t) kernel to a centered spatial filter: rectangle-rule time
/// integration (sum * dt) by default, or a single frame. The returned filter
/// has odd length (the unpaired leftmost tap of an even grid is dropped) so
/// that convolution and correlation with it coincide. max_radius > 0
/// truncates the support to that many taps each side.
Filter spatial_filter(const PsfKernel& psf, TimeCollapse mode = TimeCollapse::Integrate,
                      int frame = 0, int max_radius = 0);

/// Kernel scaled so its peak value is 1, for conditioning experiments.
/// Physical amplitudes are the default everywhere else.
PsfKernel normalize_peak(const PsfKernel& psf);

/// Flat binary kernel container; see README for the header layout.
void write_psf(const std::string& path, const PsfKernel& psf);
PsfKernel read_psf(const std::string& path);

/// One CSV row per (y, t) pair: y_index, t_index, then n_x values.
void write_psf_csv(const std::string& path, const PsfKernel& psf);

}  // namespace psr
