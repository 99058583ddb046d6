#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "psr/thermal.hpp"
#include "psr/types.hpp"

namespace psr {

/// One rectangular defect: width pixels starting at center - (width-1)/2,
/// absorptance level in (0, 1].
struct SlitSpec {
  int center = 0;
  int width = 1;
  Real level = 1.0;
};

/// Ground-truth absorptance pattern over x.
struct DefectScene {
  std::vector<Real> a;           // n_x values in [0, 1]
  std::vector<SlitSpec> slits;
  Grid grid;
  Real sparsity = 0;             // fraction of nonzero pixels
};

/// Scan plan: where each measurement's illumination line sits. Solvers
/// never see this type; the blind model only hands them MeasurementStack.
struct IlluminationPlan {
  int n_meas = 1;
  int line_width = 1;
  std::vector<int> line_positions;
  PulseProfile pulse;
  bool gaussian_profile = false;
};

/// Temperature signals as handed to solvers: one row per measurement,
/// columns over x. Deliberately carries no illumination geometry.
struct MeasurementStack {
  Matrix data;
  Grid grid;
  std::optional<Real> snr_db;

  int n_meas() const { return data.rows; }
};

struct TrainingBatch {
  Matrix u;            // ground-truth flux, (n_meas, n_x)
  MeasurementStack T;
};

struct SynthConfig {
  Grid grid;                 // n_y = 1 for the training form
  int n_meas = 16;
  int batches = 16;
  int line_width = 3;
  int jitter = 0;            // max absolute position shift in pixels
  bool gaussian_line = false;
  int max_slits = 3;
  int slit_min_width = 2;
  int slit_max_width = 6;
  Real absorptance_min = 0.5;
  Real sparsity_max = 0.25;  // 0 means: generate empty scenes
  std::optional<Real> snr_db;
  PulseProfile pulse;

  void validate() const;
};

struct TrainingSet {
  std::vector<TrainingBatch> batches;
  SynthConfig config;
  uint64_t seed = 0;
};

/// Deterministic scene from explicit slit specs. Slits must fit the grid
/// and must not overlap.
DefectScene make_scene(const std::vector<SlitSpec>& slits, const Grid& grid);

/// Random scene drawn from the config's ranges using the given stream.
DefectScene random_scene(const SynthConfig& cfg, uint64_t stream_seed);

/// Evenly stepped line positions covering the grid, optional jitter drawn
/// from the seed.
IlluminationPlan make_illumination(int n_meas, int line_width, const Grid& grid,
                                   const PulseProfile& pulse, uint64_t seed,
                                   int jitter = 0, bool gaussian_profile = false);

/// Per-measurement illumination mask row (boxcar or Gaussian profile).
std::vector<Real> line_mask(const IlluminationPlan& plan, int m, int n_x);

struct SynthesizedPair {
  Matrix u;
  MeasurementStack T;
};

/// Forward model: u^m = mask_m . a, T^m = conv(phi, u^m) + noise scaled to
/// snr_db per measurement (rows with zero signal get no noise).
SynthesizedPair synthesize(const DefectScene& scene, const IlluminationPlan& plan,
                           const PsfKernel& psf, std::optional<Real> snr_db,
                           uint64_t noise_seed = 0);

/// B batches of randomized scenes measured through the kernel; per-batch
/// streams are derived from (seed, batch) so generation order never matters.
TrainingSet generate_training_set(const SynthConfig& cfg, const PsfKernel& psf,
                                  uint64_t seed);

/// Empirical SNR in dB of (clean, noisy) signal rows, for audits.
Real measure_snr_db(const Matrix& clean, const Matrix& noisy);

/// Dataset directory: manifest.json plus per-batch tensor files.
void save_training_set(const std::string& dir, const TrainingSet& set);
TrainingSet load_training_set(const std::string& dir);

}  // namespace psr
