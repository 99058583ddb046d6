#include "psr/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "psr/rng.hpp"
#include "psr/tensor_io.hpp"

namespace psr {

void ExperimentSpec::validate() const {
  synth.validate();
  material.validate();
  train.validate();
  if (variants.empty() || modes.empty() || relu_modes.empty())
    throw std::invalid_argument("ExperimentSpec: empty cell axis");
  if (K < 1) throw std::invalid_argument("ExperimentSpec: K >= 1");
  for (int k : k_list)
    if (k < 1) throw std::invalid_argument("ExperimentSpec: k_list entries >= 1");
  if (test_n_y < 1) throw std::invalid_argument("ExperimentSpec: test_n_y >= 1");
  if (threads < 1) throw std::invalid_argument("ExperimentSpec: threads >= 1");
  if (filter_max_radius < 0)
    throw std::invalid_argument("ExperimentSpec: filter_max_radius >= 0");
}

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

std::string spec_string(const ExperimentSpec& spec) {
  std::ostringstream os;
  const auto& g = spec.synth.grid;
  os << g.n_x << '|' << g.n_y << '|' << g.n_t << '|' << format_real(g.dx) << '|'
     << format_real(g.dy) << '|' << format_real(g.dt);
  os << '|' << spec.synth.n_meas << '|' << spec.synth.batches << '|'
     << spec.synth.line_width << '|' << spec.synth.jitter << '|'
     << spec.synth.gaussian_line << '|' << spec.synth.max_slits << '|'
     << spec.synth.slit_min_width << '|' << spec.synth.slit_max_width << '|'
     << format_real(spec.synth.absorptance_min) << '|'
     << format_real(spec.synth.sparsity_max) << '|'
     << (spec.synth.snr_db ? format_real(*spec.synth.snr_db) : std::string("none"));
  os << '|' << format_real(spec.material.rho) << '|' << format_real(spec.material.c_p)
     << '|' << format_real(spec.material.alpha) << '|'
     << format_real(spec.material.reflectance) << '|'
     << format_real(spec.material.thickness) << '|' << format_real(spec.material.depth)
     << '|' << spec.material.p_max;
  os << '|' << spec.apply_pulse << '|' << format_real(spec.synth.pulse.duration) << '|'
     << format_real(spec.synth.pulse.amplitude) << '|' << spec.filter_max_radius;
  os << '|' << spec.K << '|' << spec.seed << '|' << spec.train.max_adam_iters << '|'
     << format_real(spec.train.learning_rate) << '|'
     << format_real(spec.train.refinement_factor) << '|' << spec.train.n_refinements
     << '|' << format_real(spec.train.initial_alpha);
  return os.str();
}

std::string cell_hash(const ExperimentSpec& spec, const std::string& cell) {
  return hash_hex(fnv1a64(spec_string(spec) + '|' + cell));
}

struct Prepared {
  PsfKernel psf;
  Filter phi;
  Real gamma = 0;
  TrainingSet set;
  DefectScene test_scene;
  MeasurementStack test_T;
};

Prepared prepare(const ExperimentSpec& spec) {
  spec.validate();
  Prepared p;
  p.psf = build_psf(spec.synth.grid, spec.material);
  if (spec.apply_pulse) p.psf = convolve_pulse(p.psf, spec.synth.pulse);
  p.phi = spatial_filter(psf_slice_1d(p.psf), TimeCollapse::Integrate, 0,
                         spec.filter_max_radius);
  p.gamma = 1.0 / (2.0 * operator_norm_sq(p.phi, spec.synth.grid.n_x));
  p.set = generate_training_set(spec.synth, p.psf, spec.seed);

  // scoring scene from a stream index far above any batch index
  const uint64_t test_stream = derive_stream(spec.seed, 0x7e57);
  p.test_scene = random_scene(spec.synth, derive_stream(test_stream, 1));
  const IlluminationPlan plan = make_illumination(
      spec.synth.n_meas, spec.synth.line_width, spec.synth.grid, spec.synth.pulse,
      derive_stream(test_stream, 2), spec.synth.jitter, spec.synth.gaussian_line);
  p.test_T = synthesize(p.test_scene, plan, p.psf, spec.synth.snr_db,
                        derive_stream(test_stream, 3))
                 .T;
  return p;
}

Real score_net(const UnfoldedNetwork& net, const Prepared& p, int threads) {
  const Stack2D stack = replicate_rows(p.test_T, 1, p.test_T.grid.dy);
  const Image2D img = reconstruct_2d(net, stack, threads);
  return pearson_quality(img, p.test_scene, RoiY{0, 1}).pearson_r;
}

}  // namespace

std::vector<GridRow> run_variant_grid(const ExperimentSpec& spec) {
  const Prepared p = prepare(spec);
  std::vector<GridRow> rows;
  for (Variant v : spec.variants)
    for (WeightMode m : spec.modes)
      for (bool relu : spec.relu_modes) {
        GridRow row;
        row.variant = variant_name(v);
        row.mode = weight_mode_name(m);
        row.relu = relu;
        row.config_hash = cell_hash(
            spec, row.variant + '|' + row.mode + '|' + (relu ? "relu" : "plain"));
        try {
          UnfoldedNetwork net = make_network(v, m, relu, spec.K, p.phi, p.gamma,
                                             spec.train.initial_alpha);
          const TrainReport rep = train(net, p.set, spec.train);
          row.final_loss = rep.final_loss;
          row.pearson_r = score_net(net, p, spec.threads);
          row.status = "ok";
        } catch (const std::exception& e) {
          row.pearson_r = std::nan("");
          row.final_loss = std::nan("");
          row.status = sanitize(e.what());
        }
        rows.push_back(std::move(row));
      }
  return rows;
}

std::vector<LayerRow> run_layer_study(const ExperimentSpec& spec) {
  const Prepared p = prepare(spec);
  const Variant v = spec.variants.front();
  const WeightMode m = spec.modes.front();
  const bool relu = spec.relu_modes.front();
  std::vector<LayerRow> rows;
  for (int k : spec.k_list) {
    LayerRow row;
    row.K = k;
    row.config_hash = cell_hash(spec, "layers|" + std::to_string(k));
    try {
      UnfoldedNetwork net =
          make_network(v, m, relu, k, p.phi, p.gamma, spec.train.initial_alpha);
      const TrainReport rep = train(net, p.set, spec.train);
      row.train_time_ms = rep.wall_seconds * 1000.0;
      row.infer_time_ms = time_row_inference(net, p.test_T.data);
      row.pearson_r = score_net(net, p, spec.threads);
      row.status = "ok";
    } catch (const std::exception& e) {
      row.pearson_r = std::nan("");
      row.status = sanitize(e.what());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

double time_row_inference(const UnfoldedNetwork& net, const Matrix& row_T, int reps) {
  reps = std::max(reps, 21);
  Real sink = 0;
  sink += infer(net, row_T).v[0];  // warm caches and the plan table
  std::vector<double> ms(reps);
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const Matrix u = infer(net, row_T);
    ms[r] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
    sink += u.v[0];
  }
  if (!std::isfinite(sink))
    std::fprintf(stderr, "time_row_inference: non-finite output\n");
  std::sort(ms.begin(), ms.end());
  return ms[reps / 2];
}

void write_grid_csv(const std::string& path, const std::vector<GridRow>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "variant,mode,relu,pearson_r,final_loss,status,config_hash\n";
  for (const auto& r : rows)
    os << r.variant << ',' << r.mode << ',' << (r.relu ? 1 : 0) << ','
       << format_real(r.pearson_r) << ',' << format_real(r.final_loss) << ',' << r.status
       << ',' << r.config_hash << '\n';
  if (!os) throw std::runtime_error("write failed: " + path);
}

void write_layer_csv(const std::string& path, const std::vector<LayerRow>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "K,pearson_r,train_time_ms,infer_time_ms,status,config_hash\n";
  for (const auto& r : rows)
    os << r.K << ',' << format_real(r.pearson_r) << ',' << format_real(r.train_time_ms)
       << ',' << format_real(r.infer_time_ms) << ',' << r.status << ',' << r.config_hash
       << '\n';
  if (!os) throw std::runtime_error("write failed: " + path);
}

void run_bench(const ExperimentSpec& spec, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  nlohmann::json manifest;
  manifest["format"] = "psr-bench/1";
  manifest["spec_hash"] = hash_hex(fnv1a64(spec_string(spec)));
  auto files = nlohmann::json::array();
  auto cells = nlohmann::json::array();

  const std::vector<GridRow> grid = run_variant_grid(spec);
  write_grid_csv(out_dir + "/grid.csv", grid);
  files.push_back("grid.csv");
  for (const auto& r : grid)
    cells.push_back({{"variant", r.variant},
                     {"mode", r.mode},
                     {"relu", r.relu},
                     {"status", r.status},
                     {"config_hash", r.config_hash}});

  if (!spec.k_list.empty()) {
    const std::vector<LayerRow> layers = run_layer_study(spec);
    write_layer_csv(out_dir + "/layers.csv", layers);
    files.push_back("layers.csv");
    for (const auto& r : layers)
      cells.push_back({{"K", r.K}, {"status", r.status}, {"config_hash", r.config_hash}});
  }

  if (!spec.binning_factors.empty()) {
    // the binning sweep only needs a fixed reconstruction operator; the
    // analytically initialized network keeps it independent of training
    const Prepared p = prepare(spec);
    const UnfoldedNetwork net =
        make_network(spec.variants.front(), spec.modes.front(), spec.relu_modes.front(),
                     spec.K, p.phi, p.gamma, spec.train.initial_alpha);
    const Stack2D stack = replicate_rows(p.test_T, spec.test_n_y, p.test_T.grid.dy);
    const auto rows =
        binning_study(net, stack, p.test_scene, spec.binning_factors, 0.0,
                      spec.test_n_y * p.test_T.grid.dy, spec.threads);
    write_binning_csv(out_dir + "/binning.csv", rows);
    files.push_back("binning.csv");
  }

  manifest["files"] = files;
  manifest["cells"] = cells;
  std::ofstream os(out_dir + "/manifest.json");
  if (!os) throw std::runtime_error("cannot open for writing: " + out_dir + "/manifest.json");
  os << manifest.dump(2) << '\n';
  if (!os) throw std::runtime_error("write failed: " + out_dir + "/manifest.json");
}

}  // namespace psr
