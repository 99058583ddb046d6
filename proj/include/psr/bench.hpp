#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psr/pipeline.hpp"
#include "psr/synth.hpp"
#include "psr/thermal.hpp"
#include "psr/training.hpp"
#include "psr/unfolding.hpp"

namespace psr {

/// Everything a comparative run needs: data generation, kernel, the cell
/// axes, and the optimizer settings. Cells of the grid are the cross
/// product of variants, modes, and relu_modes.
struct ExperimentSpec {
  SynthConfig synth;
  MaterialParams material;
  bool apply_pulse = true;       // convolve the kernel with synth.pulse
  int filter_max_radius = 0;     // spatial filter truncation, taps per side
  std::vector<Variant> variants = {Variant::LBISTA};
  std::vector<WeightMode> modes = {WeightMode::Tied};
  std::vector<bool> relu_modes = {false};
  int K = 4;                     // depth for the variant grid
  std::vector<int> k_list;       // depths for the layer study
  std::vector<int> binning_factors;
  int test_n_y = 1;              // y replication of the scoring scene
  uint64_t seed = 1;
  TrainConfig train;
  int threads = 1;

  void validate() const;
};

struct GridRow {
  std::string variant, mode;
  bool relu = false;
  Real pearson_r = 0;
  Real final_loss = 0;
  std::string status;  // "ok" or the error text
  std::string config_hash;
};

struct LayerRow {
  int K = 0;
  Real pearson_r = 0;
  double train_time_ms = 0;
  double infer_time_ms = 0;
  std::string status;
  std::string config_hash;
};

/// FNV-1a over the canonical spec + cell serialization; 16 hex digits.
uint64_t fnv1a64(const std::string& s);
std::string hash_hex(uint64_t h);

/// Train every (variant, mode, relu) cell on one shared training set and
/// score it on one shared test scene. A failing cell is recorded with its
/// error text, never dropped.
std::vector<GridRow> run_variant_grid(const ExperimentSpec& spec);

/// Per depth in k_list: train a fresh network, score it, and time both
/// training and single-row inference.
std::vector<LayerRow> run_layer_study(const ExperimentSpec& spec);

/// Median over max(21, reps) single-row forward passes, in milliseconds.
double time_row_inference(const UnfoldedNetwork& net, const Matrix& row_T, int reps = 21);

void write_grid_csv(const std::string& path, const std::vector<GridRow>& rows);
void write_layer_csv(const std::string& path, const std::vector<LayerRow>& rows);

/// Full suite into out_dir: grid.csv, layers.csv (when k_list nonempty),
/// binning.csv (when binning_factors nonempty), and manifest.json listing
/// every produced file and cell.
void run_bench(const ExperimentSpec& spec, const std::string& out_dir);

}  // namespace psr
