#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "psr/bench.hpp"
#include "psr/classical.hpp"
#include "psr/config.hpp"
#include "psr/pipeline.hpp"
#include "psr/synth.hpp"
#include "psr/tensor_io.hpp"
#include "psr/thermal.hpp"
#include "psr/training.hpp"
#include "psr/unfolding.hpp"

namespace fs = std::filesystem;
using namespace psr;

namespace {

struct Options {
  std::string config_path;
  std::string out;
  std::string csv_out;
  std::string report;
  std::string data_dir;
  std::string net_path;
  std::string psf_path;
  std::string stack_path;
  std::string out_prefix;
  uint64_t seed = 0;
  bool seed_given = false;
  int bin_factor = 1;
  int threads = 0;
  int verbose = 0;
};

void require_parent_dir(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (parent.empty()) return;
  if (!fs::is_directory(parent))
    throw std::invalid_argument("output directory does not exist: " + parent.string());
}

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path))
    throw std::invalid_argument("no such file: " + path);
}

ConfigReader load_config(const std::string& path) {
  if (path.empty()) return ConfigReader(ConfigFile{});
  require_file(path);
  return ConfigReader(ConfigFile::load(path));
}

Grid read_grid(ConfigReader& cfg) {
  Grid g;
  g.n_x = cfg.get_int("grid", "n_x", g.n_x);
  g.n_y = cfg.get_int("grid", "n_y", g.n_y);
  g.n_t = cfg.get_int("grid", "n_t", g.n_t);
  g.dx = cfg.get_real("grid", "dx", g.dx);
  g.dy = cfg.get_real("grid", "dy", g.dy);
  g.dt = cfg.get_real("grid", "dt", g.dt);
  g.validate();
  return g;
}

MaterialParams read_material(ConfigReader& cfg) {
  MaterialParams m;
  m.rho = cfg.get_real("material", "rho", m.rho);
  m.c_p = cfg.get_real("material", "c_p", m.c_p);
  m.alpha = cfg.get_real("material", "alpha", m.alpha);
  m.reflectance = cfg.get_real("material", "reflectance", m.reflectance);
  m.thickness = cfg.get_real("material", "thickness", m.thickness);
  m.depth = cfg.get_real("material", "depth", m.depth);
  m.p_max = cfg.get_int("material", "p_max", m.p_max);
  m.validate();
  return m;
}

PulseProfile read_pulse(ConfigReader& cfg) {
  PulseProfile p;
  p.duration = cfg.get_real("pulse", "duration", p.duration);
  p.amplitude = cfg.get_real("pulse", "amplitude", p.amplitude);
  p.validate();
  return p;
}

SynthConfig read_synth(ConfigReader& cfg, const Grid& grid) {
  SynthConfig s;
  s.grid = grid;
  s.n_meas = cfg.get_int("synth", "n_meas", s.n_meas);
  s.batches = cfg.get_int("synth", "batches", s.batches);
  s.line_width = cfg.get_int("synth", "line_width", s.line_width);
  s.jitter = cfg.get_int("synth", "jitter", s.jitter);
  s.gaussian_line = cfg.get_bool("synth", "gaussian_line", s.gaussian_line);
  s.max_slits = cfg.get_int("synth", "max_slits", s.max_slits);
  s.slit_min_width = cfg.get_int("synth", "slit_min_width", s.slit_min_width);
  s.slit_max_width = cfg.get_int("synth", "slit_max_width", s.slit_max_width);
  s.absorptance_min = cfg.get_real("synth", "absorptance_min", s.absorptance_min);
  s.sparsity_max = cfg.get_real("synth", "sparsity_max", s.sparsity_max);
  if (cfg.has("synth", "snr_db")) s.snr_db = cfg.get_real("synth", "snr_db", 0);
  s.pulse = read_pulse(cfg);
  s.validate();
  return s;
}

TrainConfig read_train(ConfigReader& cfg) {
  TrainConfig t;
  t.max_adam_iters = cfg.get_int("train", "max_adam_iters", t.max_adam_iters);
  t.learning_rate = cfg.get_real("train", "learning_rate", t.learning_rate);
  t.refinement_factor = cfg.get_real("train", "refinement_factor", t.refinement_factor);
  t.n_refinements = cfg.get_int("train", "n_refinements", t.n_refinements);
  t.initial_alpha = cfg.get_real("train", "initial_alpha", t.initial_alpha);
  t.adam_beta1 = cfg.get_real("train", "adam_beta1", t.adam_beta1);
  t.adam_beta2 = cfg.get_real("train", "adam_beta2", t.adam_beta2);
  t.adam_eps = cfg.get_real("train", "adam_eps", t.adam_eps);
  t.early_stop_window = cfg.get_int("train", "early_stop_window", t.early_stop_window);
  t.early_stop_eps = cfg.get_real("train", "early_stop_eps", t.early_stop_eps);
  t.divergence_factor = cfg.get_real("train", "divergence_factor", t.divergence_factor);
  t.divergence_window = cfg.get_int("train", "divergence_window", t.divergence_window);
  t.seed = cfg.get_u64("train", "seed", t.seed);
  t.batches = cfg.get_int("train", "batches", t.batches);
  t.validate();
  return t;
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& text, Parse parse) {
  std::vector<T> out;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    std::string item = text.substr(pos, comma - pos);
    const size_t b = item.find_first_not_of(" \t");
    if (b != std::string::npos) {
      const size_t e = item.find_last_not_of(" \t");
      out.push_back(parse(item.substr(b, e - b + 1)));
    }
    pos = comma + 1;
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  return parse_list<int>(text, [](const std::string& s) {
    size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument("not an integer: " + s);
    return v;
  });
}

PsfKernel build_kernel(const Grid& grid, const MaterialParams& material,
                       const PulseProfile& pulse, bool apply_pulse) {
  PsfKernel psf = build_psf(grid, material);
  if (apply_pulse) psf = convolve_pulse(psf, pulse);
  return psf;
}

Filter kernel_filter(const PsfKernel& psf, int max_radius) {
  return spatial_filter(psf_slice_1d(psf), TimeCollapse::Integrate, 0, max_radius);
}

int run_psf(Options& opt) {
  ConfigReader cfg = load_config(opt.config_path);
  const Grid grid = read_grid(cfg);
  const MaterialParams material = read_material(cfg);
  const bool with_pulse = cfg.has("pulse", "duration") || cfg.has("pulse", "amplitude");
  const PulseProfile pulse = read_pulse(cfg);
  cfg.finish();
  require_parent_dir(opt.out);
  if (!opt.csv_out.empty()) require_parent_dir(opt.csv_out);

  const PsfKernel psf = build_kernel(grid, material, pulse, with_pulse);
  write_psf(opt.out, psf);
  if (!opt.csv_out.empty()) write_psf_csv(opt.csv_out, psf);
  if (opt.verbose)
    std::printf("kernel %dx%dx%d -> %s%s\n", grid.n_x, grid.n_y, grid.n_t,
                opt.out.c_str(), with_pulse ? " (pulse applied)" : "");
  return 0;
}

int run_synth(Options& opt) {
  ConfigReader cfg = load_config(opt.config_path);
  const Grid grid = read_grid(cfg);
  const MaterialParams material = read_material(cfg);
  const SynthConfig synth = read_synth(cfg, grid);
  const bool apply_pulse = cfg.get_bool("synth", "apply_pulse", true);
  const uint64_t seed = opt.seed_given ? opt.seed : cfg.get_u64("synth", "seed", 1);
  cfg.finish();
  require_parent_dir(opt.out);

  const PsfKernel psf = build_kernel(grid, material, synth.pulse, apply_pulse);
  const TrainingSet set = generate_training_set(synth, psf, seed);
  fs::create_directories(opt.out);
  save_training_set(opt.out, set);
  if (opt.verbose)
    std::printf("dataset: %d batches, %d measurements x %d pixels -> %s\n",
                synth.batches, synth.n_meas, grid.n_x, opt.out.c_str());
  return 0;
}

int run_train(Options& opt) {
  ConfigReader cfg = load_config(opt.config_path);
  const MaterialParams material = read_material(cfg);
  TrainConfig train_cfg = read_train(cfg);

  const std::string variant_name_s = cfg.get_string("network", "variant", "lbfista");
  const std::string mode_name = cfg.get_string("network", "mode", "tied");
  const bool relu = cfg.get_bool("network", "relu_after_gradient", false);
  const int K = cfg.get_int("network", "K", 6);
  const Real gamma_cfg = cfg.get_real("network", "gamma", 0);
  const int max_radius = cfg.get_int("network", "max_radius", 0);
  const Real alpha_init = cfg.get_real("network", "alpha_init", train_cfg.initial_alpha);
  const Variant variant = variant_from_name(variant_name_s);
  const WeightMode mode = weight_mode_from_name(mode_name);

  TrainingSet set;
  PsfKernel psf;
  if (!opt.data_dir.empty()) {
    cfg.finish();
    set = load_training_set(opt.data_dir);
    const bool apply_pulse = true;
    psf = build_kernel(set.config.grid, material, set.config.pulse, apply_pulse);
  } else {
    const Grid grid = read_grid(cfg);
    SynthConfig synth = read_synth(cfg, grid);
    const bool apply_pulse = cfg.get_bool("synth", "apply_pulse", true);
    cfg.finish();
    synth.batches = train_cfg.batches;
    psf = build_kernel(grid, material, synth.pulse, apply_pulse);
    set = generate_training_set(synth, psf, train_cfg.seed);
  }
  require_parent_dir(opt.out);
  if (!opt.report.empty()) require_parent_dir(opt.report);

  const Filter phi = kernel_filter(psf, max_radius);
  const Real gamma = gamma_cfg > 0
                         ? gamma_cfg
                         : 1.0 / (2.0 * operator_norm_sq(phi, set.config.grid.n_x));
  UnfoldedNetwork net = make_network(variant, mode, relu, K, phi, gamma, alpha_init);
  const TrainReport report = train(net, set, train_cfg);
  save_network(opt.out, net);
  if (!opt.report.empty()) write_train_report_csv(opt.report, report);
  if (opt.verbose)
    std::printf("trained %s/%s K=%d, final loss %.6g -> %s\n", variant_name_s.c_str(),
                mode_name.c_str(), K, report.final_loss, opt.out.c_str());
  return 0;
}

int run_reconstruct(Options& opt) {
  ConfigReader cfg = load_config(opt.config_path);
  const bool classical = opt.net_path.empty();
  if (classical && opt.psf_path.empty())
    throw std::invalid_argument("reconstruct needs --net, or --psf with a [solver] config");

  require_file(opt.stack_path);
  if (!opt.net_path.empty()) require_file(opt.net_path);
  if (!opt.psf_path.empty()) require_file(opt.psf_path);
  require_parent_dir(opt.out_prefix + ".pgm");

  SolverConfig solver;
  int max_radius = 0;
  if (classical) {
    solver.variant = [&] {
      const std::string name = cfg.get_string("solver", "variant", "fista");
      if (name == "ista") return SolverVariant::ISTA;
      if (name == "fista") return SolverVariant::FISTA;
      if (name == "enet") return SolverVariant::ENET;
      if (name == "fenet") return SolverVariant::FENET;
      throw std::invalid_argument("unknown solver variant: " + name);
    }();
    solver.lambda1 = cfg.get_real("solver", "lambda1", 0);
    solver.lambda2 = cfg.get_real("solver", "lambda2", 0);
    solver.max_iters = cfg.get_int("solver", "max_iters", 100);
    solver.gamma = cfg.get_real("solver", "gamma", 0);
    solver.tolerance = cfg.get_real("solver", "tolerance", 0);
    max_radius = cfg.get_int("solver", "max_radius", 0);
  }
  cfg.finish();

  Stack2D stack = read_stack(opt.stack_path);
  if (opt.bin_factor != 1) stack = bin_pixels_y(stack, opt.bin_factor);

  Image2D image;
  if (classical) {
    const Filter phi = kernel_filter(read_psf(opt.psf_path), max_radius);
    if (!(solver.gamma > 0))
      solver.gamma = 1.0 / (2.0 * operator_norm_sq(phi, stack.n_x));
    image = reconstruct_2d(solver, phi, stack, opt.threads);
  } else {
    const UnfoldedNetwork net = load_network(opt.net_path);
    image = reconstruct_2d(net, stack, opt.threads);
  }
  write_image_pgm(opt.out_prefix + ".pgm", image);
  write_image_csv(opt.out_prefix + ".csv", image);
  if (opt.verbose)
    std::printf("image %dx%d -> %s.{pgm,csv}\n", image.n_x, image.n_y,
                opt.out_prefix.c_str());
  return 0;
}

int run_bench_cmd(Options& opt) {
  ConfigReader cfg = load_config(opt.config_path);
  ExperimentSpec spec;
  const Grid grid = read_grid(cfg);
  spec.synth = read_synth(cfg, grid);
  spec.material = read_material(cfg);
  spec.apply_pulse = cfg.get_bool("bench", "apply_pulse", true);
  spec.filter_max_radius = cfg.get_int("bench", "filter_max_radius", 0);
  spec.variants = parse_list<Variant>(cfg.get_string("bench", "variants", "lbista"),
                                      variant_from_name);
  spec.modes = parse_list<WeightMode>(cfg.get_string("bench", "modes", "tied"),
                                      weight_mode_from_name);
  spec.relu_modes = parse_list<bool>(cfg.get_string("bench", "relus", "false"),
                                     [](const std::string& s) {
                                       if (s == "true" || s == "1") return true;
                                       if (s == "false" || s == "0") return false;
                                       throw std::invalid_argument("not a boolean: " + s);
                                     });
  spec.K = cfg.get_int("bench", "K", 4);
  spec.k_list = parse_int_list(cfg.get_string("bench", "k_list", ""));
  spec.binning_factors = parse_int_list(cfg.get_string("bench", "binning_factors", ""));
  spec.test_n_y = cfg.get_int("bench", "test_n_y", 1);
  spec.seed = opt.seed_given ? opt.seed : cfg.get_u64("bench", "seed", 1);
  spec.train = read_train(cfg);
  spec.threads = opt.threads;
  cfg.finish();
  require_parent_dir(opt.out);

  run_bench(spec, opt.out);
  if (opt.verbose) std::printf("bench results -> %s\n", opt.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  opt.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  CLI::App app{"Sparse defect-map reconstruction from diffusion-blurred line scans"};
  app.set_version_flag("--version", "psrnet 1.0.0");
  app.require_subcommand(1);
  app.add_flag("-v,--verbose", opt.verbose, "print progress to stdout");

  CLI::App* psf = app.add_subcommand("psf", "build and export the thermal kernel");
  psf->fallthrough();
  psf->add_option("--config", opt.config_path, "config file ([grid], [material], [pulse])");
  psf->add_option("--out", opt.out, "output kernel file")->required();
  psf->add_option("--csv", opt.csv_out, "also export the kernel as CSV");

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic training set");
  synth->fallthrough();
  synth->add_option("--config", opt.config_path, "config file ([grid], [material], [synth])");
  synth->add_option("--out", opt.out, "output dataset directory")->required();
  synth->add_option("--seed", opt.seed, "override the dataset seed");

  CLI::App* train = app.add_subcommand("train", "train an unrolled network");
  train->fallthrough();
  train->add_option("--config", opt.config_path,
                    "config file ([network], [train], data sections)");
  train->add_option("--data", opt.data_dir, "existing dataset directory");
  train->add_option("--out", opt.out, "output network file")->required();
  train->add_option("--report", opt.report, "training curve CSV");

  CLI::App* rec = app.add_subcommand("reconstruct", "reconstruct a 2D defect map");
  rec->fallthrough();
  rec->add_option("--config", opt.config_path, "config file ([solver] for baselines)");
  rec->add_option("--net", opt.net_path, "trained network file");
  rec->add_option("--psf", opt.psf_path, "kernel file (classical route)");
  rec->add_option("--stack", opt.stack_path, "input stack file")->required();
  rec->add_option("--bin", opt.bin_factor, "y binning factor before reconstruction");
  rec->add_option("--out-prefix", opt.out_prefix, "output path prefix")->required();
  rec->add_option("--threads", opt.threads, "worker threads over y rows");

  CLI::App* bench = app.add_subcommand("bench", "run the comparison suites");
  bench->fallthrough();
  bench->add_option("--config", opt.config_path, "config file ([bench] + data sections)");
  bench->add_option("--out", opt.out, "results directory")->required();
  bench->add_option("--seed", opt.seed, "override the suite seed");
  bench->add_option("--threads", opt.threads, "worker threads over y rows");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  opt.seed_given = synth->count("--seed") > 0 || bench->count("--seed") > 0;

  try {
    if (app.got_subcommand(psf)) return run_psf(opt);
    if (app.got_subcommand(synth)) return run_synth(opt);
    if (app.got_subcommand(train)) return run_train(opt);
    if (app.got_subcommand(rec)) return run_reconstruct(opt);
    if (app.got_subcommand(bench)) return run_bench_cmd(opt);
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::domain_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
