#include "psr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "psr/rng.hpp"
#include "psr/tensor_io.hpp"

namespace fs = std::filesystem;

namespace psr {

void SynthConfig::validate() const {
  grid.validate();
  if (n_meas < 1) throw std::invalid_argument("SynthConfig: n_meas must be >= 1");
  if (batches < 1) throw std::invalid_argument("SynthConfig: batches must be >= 1");
  if (line_width < 1 || line_width > grid.n_x)
    throw std::invalid_argument("SynthConfig: line_width must be in [1, n_x]");
  if (jitter < 0) throw std::invalid_argument("SynthConfig: jitter must be >= 0");
  if (slit_min_width < 1 || slit_max_width < slit_min_width)
    throw std::invalid_argument("SynthConfig: slit width range is empty");
  if (absorptance_min <= 0 || absorptance_min > 1)
    throw std::invalid_argument("SynthConfig: absorptance_min must be in (0, 1]");
  if (sparsity_max < 0 || sparsity_max > 1)
    throw std::invalid_argument("SynthConfig: sparsity_max must be in [0, 1]");
  if (max_slits < 1) throw std::invalid_argument("SynthConfig: max_slits must be >= 1");
  if (sparsity_max > 0 &&
      static_cast<Real>(slit_min_width) / grid.n_x > sparsity_max)
    throw std::invalid_argument(
        "SynthConfig: sparsity_max admits no slit of slit_min_width");
}

DefectScene make_scene(const std::vector<SlitSpec>& slits, const Grid& grid) {
  grid.validate();
  DefectScene scene;
  scene.grid = grid;
  scene.slits = slits;
  scene.a.assign(grid.n_x, 0.0);
  for (const auto& s : slits) {
    if (s.width < 1) throw std::invalid_argument("make_scene: slit width must be >= 1");
    if (s.level <= 0 || s.level > 1)
      throw std::invalid_argument("make_scene: slit level must be in (0, 1]");
    const int start = s.center - (s.width - 1) / 2;
    if (start < 0 || start + s.width > grid.n_x)
      throw std::invalid_argument("make_scene: slit leaves the grid");
    for (int i = start; i < start + s.width; ++i) {
      if (scene.a[i] != 0) throw std::invalid_argument("make_scene: slits overlap");
      scene.a[i] = s.level;
    }
  }
  int nz = 0;
  for (Real v : scene.a) nz += (v != 0);
  scene.sparsity = static_cast<Real>(nz) / grid.n_x;
  return scene;
}

DefectScene random_scene(const SynthConfig& cfg, uint64_t stream_seed) {
  cfg.validate();
  Rng rng(stream_seed);
  std::vector<SlitSpec> slits;
  if (cfg.sparsity_max > 0) {
    const int budget = static_cast<int>(cfg.sparsity_max * cfg.grid.n_x);
    const int want = rng.uniform_int(1, cfg.max_slits);
    std::vector<char> occupied(cfg.grid.n_x, 0);
    int used = 0;
    for (int s = 0; s < want; ++s) {
      const int width = rng.uniform_int(cfg.slit_min_width, cfg.slit_max_width);
      if (used + width > budget) break;
      const Real level = rng.uniform(cfg.absorptance_min, 1.0);
      // rejection placement; a crowded grid just yields fewer slits
      for (int attempt = 0; attempt < 64; ++attempt) {
        const int start = rng.uniform_int(0, cfg.grid.n_x - width);
        bool free = true;
        for (int i = start; i < start + width; ++i) free &= !occupied[i];
        if (!free) continue;
        for (int i = start; i < start + width; ++i) occupied[i] = 1;
        slits.push_back({start + (width - 1) / 2, width, level});
        used += width;
        break;
      }
    }
  }
  std::sort(slits.begin(), slits.end(),
            [](const SlitSpec& a, const SlitSpec& b) { return a.center < b.center; });
  return make_scene(slits, cfg.grid);
}

IlluminationPlan make_illumination(int n_meas, int line_width, const Grid& grid,
                                   const PulseProfile& pulse, uint64_t seed, int jitter,
                                   bool gaussian_profile) {
  grid.validate();
  if (n_meas < 1) throw std::invalid_argument("make_illumination: n_meas must be >= 1");
  if (line_width < 1 || line_width > grid.n_x)
    throw std::invalid_argument("make_illumination: line_width must be in [1, n_x]");
  IlluminationPlan plan;
  plan.n_meas = n_meas;
  plan.line_width = line_width;
  plan.pulse = pulse;
  plan.gaussian_profile = gaussian_profile;
  plan.line_positions.resize(n_meas);
  Rng rng(derive_stream(seed, 0xba5e));
  const Real span = static_cast<Real>(grid.n_x);
  for (int i = 0; i < n_meas; ++i) {
    // centers of n_meas equal subintervals of [0, n_x), rounded to pixels
    int pos = static_cast<int>(std::llround((i + 0.5) * span / n_meas - 0.5));
    if (jitter > 0) pos += rng.uniform_int(-jitter, jitter);
    plan.line_positions[i] = std::clamp(pos, 0, grid.n_x - 1);
  }
  return plan;
}

std::vector<Real> line_mask(const IlluminationPlan& plan, int m, int n_x) {
  if (m < 0 || m >= plan.n_meas) throw std::invalid_argument("line_mask: m out of range");
  std::vector<Real> mask(n_x, 0.0);
  const int pos = plan.line_positions[m];
  if (plan.gaussian_profile) {
    // FWHM = line_width pixels
    const Real sigma = plan.line_width / 2.3548200450309493;
    for (int i = 0; i < n_x; ++i) {
      const Real d = (i - pos) / sigma;
      mask[i] = std::exp(-0.5 * d * d);
    }
  } else {
    const int start = std::max(0, pos - (plan.line_width - 1) / 2);
    const int stop = std::min(n_x, start + plan.line_width);
    for (int i = start; i < stop; ++i) mask[i] = 1.0;
  }
  return mask;
}

SynthesizedPair synthesize(const DefectScene& scene, const IlluminationPlan& plan,
                           const PsfKernel& psf, std::optional<Real> snr_db,
                           uint64_t noise_seed) {
  const int n_x = scene.grid.n_x;
  if (static_cast<int>(scene.a.size()) != n_x)
    throw std::invalid_argument("synthesize: scene length does not match its grid");
  const Filter phi = spatial_filter(psf);

  SynthesizedPair out;
  out.u = Matrix(plan.n_meas, n_x);
  out.T.data = Matrix(plan.n_meas, n_x);
  out.T.grid = scene.grid;
  out.T.snr_db = snr_db;

  Rng noise(derive_stream(noise_seed, 0x601fe));
  for (int m = 0; m < plan.n_meas; ++m) {
    const std::vector<Real> mask = line_mask(plan, m, n_x);
    Real* um = out.u.row(m);
    for (int i = 0; i < n_x; ++i) um[i] = mask[i] * scene.a[i];
    Real* tm = out.T.data.row(m);
    conv_same(phi, um, n_x, tm);
    if (snr_db) {
      Real p_sig = 0;
      for (int i = 0; i < n_x; ++i) p_sig += tm[i] * tm[i];
      p_sig /= n_x;
      if (p_sig > 0) {
        const Real sigma = std::sqrt(p_sig * std::pow(10.0, -*snr_db / 10.0));
        for (int i = 0; i < n_x; ++i) tm[i] += sigma * noise.normal();
      }
    }
  }
  return out;
}

TrainingSet generate_training_set(const SynthConfig& cfg, const PsfKernel& psf,
                                  uint64_t seed) {
  cfg.validate();
  TrainingSet set;
  set.config = cfg;
  set.seed = seed;
  set.batches.resize(cfg.batches);
  for (int b = 0; b < cfg.batches; ++b) {
    const uint64_t stream = derive_stream(seed, static_cast<uint64_t>(b));
    DefectScene scene = random_scene(cfg, derive_stream(stream, 1));
    IlluminationPlan plan =
        make_illumination(cfg.n_meas, cfg.line_width, cfg.grid, cfg.pulse,
                          derive_stream(stream, 2), cfg.jitter, cfg.gaussian_line);
    SynthesizedPair pair =
        synthesize(scene, plan, psf, cfg.snr_db, derive_stream(stream, 3));
    set.batches[b].u = std::move(pair.u);
    set.batches[b].T = std::move(pair.T);
  }
  return set;
}

Real measure_snr_db(const Matrix& clean, const Matrix& noisy) {
  check_shape(clean, noisy, "measure_snr_db");
  Real p_sig = 0, p_noise = 0;
  for (size_t i = 0; i < clean.v.size(); ++i) {
    p_sig += clean.v[i] * clean.v[i];
    const Real d = noisy.v[i] - clean.v[i];
    p_noise += d * d;
  }
  if (p_noise == 0 || p_sig == 0)
    throw std::invalid_argument("measure_snr_db: degenerate signals");
  return 10.0 * std::log10(p_sig / p_noise);
}

namespace {

std::string batch_name(const char* kind, int b) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%04d.bin", kind, b);
  return buf;
}

}  // namespace

void save_training_set(const std::string& dir, const TrainingSet& set) {
  fs::create_directories(dir);
  nlohmann::json m;
  m["format"] = "psr-dataset/1";
  m["seed"] = set.seed;
  m["batches"] = static_cast<int>(set.batches.size());
  const SynthConfig& c = set.config;
  m["config"] = {{"n_x", c.grid.n_x},
                 {"dx", c.grid.dx},
                 {"n_meas", c.n_meas},
                 {"line_width", c.line_width},
                 {"jitter", c.jitter},
                 {"gaussian_line", c.gaussian_line},
                 {"max_slits", c.max_slits},
                 {"slit_min_width", c.slit_min_width},
                 {"slit_max_width", c.slit_max_width},
                 {"absorptance_min", c.absorptance_min},
                 {"sparsity_max", c.sparsity_max},
                 {"pulse_duration", c.pulse.duration},
                 {"pulse_amplitude", c.pulse.amplitude}};
  if (c.snr_db) m["config"]["snr_db"] = *c.snr_db;

  // manifest first so a crashed write is detectable as incomplete
  std::ofstream os(fs::path(dir) / "manifest.json");
  if (!os) throw std::runtime_error("cannot write manifest in " + dir);
  os << m.dump(2) << "\n";
  os.close();

  for (size_t b = 0; b < set.batches.size(); ++b) {
    write_matrix((fs::path(dir) / batch_name("u", static_cast<int>(b))).string(),
                 set.batches[b].u, c.grid.dx);
    write_matrix((fs::path(dir) / batch_name("T", static_cast<int>(b))).string(),
                 set.batches[b].T.data, c.grid.dx);
  }
}

TrainingSet load_training_set(const std::string& dir) {
  std::ifstream is(fs::path(dir) / "manifest.json");
  if (!is) throw std::runtime_error("no manifest.json in " + dir);
  nlohmann::json m = nlohmann::json::parse(is);
  if (m.value("format", "") != "psr-dataset/1")
    throw std::runtime_error("unknown dataset format in " + dir);

  TrainingSet set;
  set.seed = m["seed"].get<uint64_t>();
  const int batches = m["batches"].get<int>();
  const auto& c = m["config"];
  set.config.grid.n_x = c["n_x"].get<int>();
  set.config.grid.dx = c["dx"].get<Real>();
  set.config.batches = batches;
  set.config.n_meas = c["n_meas"].get<int>();
  set.config.line_width = c["line_width"].get<int>();
  set.config.jitter = c["jitter"].get<int>();
  set.config.gaussian_line = c["gaussian_line"].get<bool>();
  set.config.max_slits = c["max_slits"].get<int>();
  set.config.slit_min_width = c["slit_min_width"].get<int>();
  set.config.slit_max_width = c["slit_max_width"].get<int>();
  set.config.absorptance_min = c["absorptance_min"].get<Real>();
  set.config.sparsity_max = c["sparsity_max"].get<Real>();
  set.config.pulse.duration = c["pulse_duration"].get<Real>();
  set.config.pulse.amplitude = c["pulse_amplitude"].get<Real>();
  if (c.contains("snr_db")) set.config.snr_db = c["snr_db"].get<Real>();

  set.batches.resize(batches);
  for (int b = 0; b < batches; ++b) {
    set.batches[b].u = read_matrix((fs::path(dir) / batch_name("u", b)).string());
    set.batches[b].T.data = read_matrix((fs::path(dir) / batch_name("T", b)).string());
    set.batches[b].T.grid = set.config.grid;
    set.batches[b].T.snr_db = set.config.snr_db;
    if (set.batches[b].u.cols != set.config.grid.n_x ||
        !set.batches[b].u.same_shape(set.batches[b].T.data))
      throw std::runtime_error("dataset batch shape mismatch in " + dir);
  }
  return set;
}

}  // namespace psr
