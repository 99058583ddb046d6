#pragma once

#include <string>
#include <vector>

#include "psr/classical.hpp"
#include "psr/synth.hpp"
#include "psr/unfolding.hpp"

namespace psr {

/// Time-collapsed scan film: one value per (measurement, x, y). Rows over x
/// are contiguous, so the (n_meas, n_x) slice of any y line is cheap to
/// extract and the y lines can be processed independently.
struct Stack2D {
  int n_meas = 0, n_x = 0, n_y = 0;
  Real dx = 1e-4, dy = 1e-4;
  std::vector<Real> v;  // index (m * n_y + y) * n_x + x

  Stack2D() = default;
  Stack2D(int m, int nx, int ny, Real dx_ = 1e-4, Real dy_ = 1e-4)
      : n_meas(m), n_x(nx), n_y(ny), dx(dx_), dy(dy_) {
    if (m < 1 || nx < 1 || ny < 1) throw std::invalid_argument("Stack2D: empty shape");
    v.assign(static_cast<size_t>(m) * nx * ny, 0.0);
  }

  Real& at(int m, int x, int y) { return v[(static_cast<size_t>(m) * n_y + y) * n_x + x]; }
  Real at(int m, int x, int y) const {
    return v[(static_cast<size_t>(m) * n_y + y) * n_x + x];
  }

  Matrix row_slice(int y) const;
  void set_row_slice(int y, const Matrix& rows);
};

struct Image2D {
  int n_x = 0, n_y = 0;
  Real dx = 1e-4, dy = 1e-4;
  std::vector<Real> v;  // index y * n_x + x

  Image2D() = default;
  Image2D(int nx, int ny, Real dx_ = 1e-4, Real dy_ = 1e-4)
      : n_x(nx), n_y(ny), dx(dx_), dy(dy_) {
    if (nx < 1 || ny < 1) throw std::invalid_argument("Image2D: empty shape");
    v.assign(static_cast<size_t>(nx) * ny, 0.0);
  }

  Real& at(int x, int y) { return v[static_cast<size_t>(y) * n_x + x]; }
  Real at(int x, int y) const { return v[static_cast<size_t>(y) * n_x + x]; }
};

/// y-constant film from a single line scan, for studies over the y axis.
Stack2D replicate_rows(const MeasurementStack& stack, int n_y, Real dy);

/// Mean-reduce groups of `factor` adjacent y rows. factor must divide n_y;
/// the error message lists the valid divisors. Averaging (not summing)
/// keeps the temperature scale.
Stack2D bin_pixels_y(const Stack2D& stack, int factor);

/// Per-y-row inference; output holds the per-measurement estimates. Rows
/// are independent, so `threads` > 1 splits the y range; results do not
/// depend on the thread count.
Stack2D reconstruct_stack(const UnfoldedNetwork& net, const Stack2D& stack,
                          int threads = 1);
Stack2D reconstruct_stack(const SolverConfig& config, const Filter& phi,
                          const Stack2D& stack, int threads = 1);

/// Sum over measurements in fixed m order, then divide by the global
/// maximum; the output peaks at exactly 1. Errors when no positive value
/// exists (all-zero input cannot be normalized).
Image2D aggregate_and_normalize(const Stack2D& per_measurement);

/// reconstruct_stack then aggregate_and_normalize.
Image2D reconstruct_2d(const UnfoldedNetwork& net, const Stack2D& stack, int threads = 1);
Image2D reconstruct_2d(const SolverConfig& config, const Filter& phi, const Stack2D& stack,
                       int threads = 1);

/// Textbook sample correlation; throws when either vector is constant.
Real pearson(const std::vector<Real>& a, const std::vector<Real>& b);

/// Half-open y index window [y0, y1).
struct RoiY {
  int y0 = 0, y1 = 0;
};

/// Index window covering [y_min, y_max) meters on an n_y-row grid with
/// spacing dy, clamped to the grid; errors when the window is empty.
RoiY roi_from_meters(Real y_min, Real y_max, int n_y, Real dy);

struct QualityScore {
  Real pearson_r = 0;
  RoiY roi;
};

/// Mean over the ROI rows gives a 1D x profile; score it against the
/// scene's absorptance pattern.
QualityScore pearson_quality(const Image2D& image, const DefectScene& scene, RoiY roi);

struct BinningRow {
  int factor = 1;
  Real pearson_r = 0;
  double wall_ms = 0;  // bin + reconstruct time, excludes scoring
};

/// Per factor: bin, reconstruct, score against the scene over the fixed
/// physical ROI [roi_y_min, roi_y_max) meters.
std::vector<BinningRow> binning_study(const UnfoldedNetwork& net, const Stack2D& stack,
                                      const DefectScene& scene,
                                      const std::vector<int>& factors, Real roi_y_min,
                                      Real roi_y_max, int threads = 1);

/// CSV with header factor,pearson_r,wall_ms.
void write_binning_csv(const std::string& path, const std::vector<BinningRow>& rows);

/// Tensor container with axes (a=x, b=y, c=measurement); values must be
/// finite.
void write_stack(const std::string& path, const Stack2D& stack);
Stack2D read_stack(const std::string& path);

/// Renderings. PGM clamps negatives to black; CSV rows run over y.
void write_image_pgm(const std::string& path, const Image2D& image);
void write_image_csv(const std::string& path, const Image2D& image);
Image2D read_image_csv(const std::string& path);

}  // namespace psr
