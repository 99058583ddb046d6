#include "psr/unfolding.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "psr/rng.hpp"

namespace psr {

bool variant_has_momentum(Variant v) {
  return v == Variant::LBFISTA || v == Variant::LBFENET;
}

bool variant_uses_alpha2(Variant v) {
  return v == Variant::LBENET || v == Variant::LBFENET;
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::LBISTA: return "lbista";
    case Variant::LBFISTA: return "lbfista";
    case Variant::LBENET: return "lbenet";
    case Variant::LBFENET: return "lbfenet";
    case Variant::RELU_ONLY: return "relu_only";
  }
  return "?";
}

const char* weight_mode_name(WeightMode m) {
  return m == WeightMode::Tied ? "tied" : "untied";
}

Variant variant_from_name(const std::string& s) {
  for (Variant v : {Variant::LBISTA, Variant::LBFISTA, Variant::LBENET, Variant::LBFENET,
                    Variant::RELU_ONLY})
    if (s == variant_name(v)) return v;
  throw std::invalid_argument("unknown variant: " + s);
}

WeightMode weight_mode_from_name(const std::string& s) {
  if (s == "tied") return WeightMode::Tied;
  if (s == "untied") return WeightMode::Untied;
  throw std::invalid_argument("unknown weight mode: " + s);
}

void UnfoldedNetwork::validate() const {
  if (K < 1) throw std::invalid_argument("UnfoldedNetwork: K must be >= 1");
  const size_t want = mode == WeightMode::Tied ? 1 : static_cast<size_t>(K);
  if (weights.size() != want)
    throw std::invalid_argument("UnfoldedNetwork: weight slot count does not match mode");
  if (alpha1.size() != static_cast<size_t>(K) || alpha2.size() != static_cast<size_t>(K))
    throw std::invalid_argument("UnfoldedNetwork: alpha vectors must have K entries");
  for (int k = 0; k < K; ++k) {
    if (alpha1[k] < 0 || alpha2[k] < 0)
      throw std::invalid_argument("UnfoldedNetwork: alphas must be >= 0");
    if (!variant_uses_alpha2(variant) && alpha2[k] != 0)
      throw std::invalid_argument("UnfoldedNetwork: alpha2 must be 0 for this variant");
  }
  for (const auto& w : weights)
    if (w.B.len() == 0 || w.S.len() == 0)
      throw std::invalid_argument("UnfoldedNetwork: empty filter");
}

Matrix block_soft_threshold(const Matrix& u, Real alpha1, Real alpha2) {
  if (alpha1 < 0 || alpha2 < 0)
    throw std::invalid_argument("block_soft_threshold: alphas must be >= 0");
  Matrix out(u.rows, u.cols);
  const Real denom = 1.0 + alpha2;
  for (int n = 0; n < u.cols; ++n) {
    Real nu_sq = 0;
    for (int m = 0; m < u.rows; ++m) {
      const Real x = u.at(m, n);
      nu_sq += x * x;
    }
    const Real nu = std::sqrt(nu_sq);
    Real factor = 0;
    if (nu > alpha1 && nu > 0) factor = (1.0 - alpha1 / nu) / denom;
    if (factor != 0)
      for (int m = 0; m < u.rows; ++m) out.at(m, n) = factor * u.at(m, n);
  }
  return out;
}

namespace {

void relu_inplace(Matrix& m) {
  for (Real& x : m.v) x = x > 0 ? x : 0;
}

/// The layer's activation: column shrink, or plain relu for ReluOnly.
Matrix activate(const UnfoldedNetwork& net, int layer, Matrix pre) {
  if (net.variant == Variant::RELU_ONLY) {
    relu_inplace(pre);
    return pre;
  }
  return block_soft_threshold(pre, net.alpha1[layer], net.alpha2[layer]);
}

}  // namespace

Real momentum_t1() { return (1.0 + std::sqrt(5.0)) / 2.0; }

Real momentum_next_t(Real t_prev) {
  return (1.0 + std::sqrt(1.0 + 4.0 * t_prev * t_prev)) / 2.0;
}

UnfoldState init_state(const UnfoldedNetwork& net, const Matrix& T, const Matrix* bt0) {
  net.validate();
  UnfoldState st;
  Matrix u0(T.rows, T.cols);
  if (bt0) {
    check_shape(*bt0, u0, "init_state bt0");
    u0 = *bt0;
  } else {
    conv_same_rows(net.B(0), T, u0);
  }
  Matrix pre = u0;
  if (net.relu_after_gradient) relu_inplace(pre);
  st.u_hat = activate(net, 0, std::move(pre));
  st.t = momentum_t1();
  // momentum variants carry the raw gradient image into layer 2
  st.z = variant_has_momentum(net.variant) ? std::move(u0) : st.u_hat;
  st.k = 1;
  return st;
}

void layer_forward(const UnfoldedNetwork& net, int k, UnfoldState& state, const Matrix& bt) {
  if (k < 2 || k > net.K) throw std::invalid_argument("layer_forward: k out of range");
  if (state.k != k - 1) throw std::invalid_argument("layer_forward: state is not at k-1");
  const int layer = k - 1;
  Matrix pre(state.z.rows, state.z.cols);
  conv_same_rows(net.S(layer), state.z, pre);
  check_shape(pre, bt, "layer_forward bt");
  for (size_t i = 0; i < pre.v.size(); ++i) pre.v[i] += bt.v[i];
  if (net.relu_after_gradient) relu_inplace(pre);
  Matrix u_new = activate(net, layer, std::move(pre));
  if (variant_has_momentum(net.variant)) {
    const Real t_new = momentum_next_t(state.t);
    Real mu = (state.t - 1.0) / t_new;
    if (net.force_zero_momentum) mu = 0;
    Matrix z(u_new.rows, u_new.cols);
    for (size_t i = 0; i < z.v.size(); ++i)
      z.v[i] = u_new.v[i] + mu * (u_new.v[i] - state.u_hat.v[i]);
    state.z = std::move(z);
    state.t = t_new;
  }
  state.u_hat = std::move(u_new);
  if (!variant_has_momentum(net.variant)) state.z = state.u_hat;
  state.k = k;
}

Matrix infer_partial(const UnfoldedNetwork& net, int k_active, const Matrix& T) {
  if (k_active < 1 || k_active > net.K)
    throw std::invalid_argument("infer_partial: k_active out of range");
  Matrix bt(T.rows, T.cols);
  conv_same_rows(net.B(0), T, bt);
  UnfoldState st = init_state(net, T, &bt);
  for (int k = 2; k <= k_active; ++k) {
    if (net.mode == WeightMode::Untied) conv_same_rows(net.B(k - 1), T, bt);
    layer_forward(net, k, st, bt);
  }
  return std::move(st.u_hat);
}

Matrix infer(const UnfoldedNetwork& net, const Matrix& T) {
  return infer_partial(net, net.K, T);
}

Real operator_norm_sq(const Filter& f, int n) {
  if (n < 1) throw std::invalid_argument("operator_norm_sq: n must be >= 1");
  bool nonzero = false;
  for (Real v : f.k) nonzero |= (v != 0.0);
  if (!nonzero) throw std::invalid_argument("operator_norm_sq: zero kernel");

  // normal operator: full-line convolution followed by the valid correlation
  const int L = f.len();
  auto apply = [&](const std::vector<Real>& v, std::vector<Real>& out) {
    std::vector<Real> full = conv_full(f.k, v);  // length n + L - 1
    for (int i = 0; i < n; ++i) {
      Real acc = 0;
      for (int j = 0; j < L; ++j) acc += f.k[j] * full[i + j];
      out[i] = acc;
    }
  };

  Rng rng(0x9a3f51u);
  std::vector<Real> v(n), w(n);
  for (auto& x : v) x = rng.normal();
  Real norm = 0;
  for (Real x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;

  Real lambda = 0;
  for (int it = 0; it < 20000; ++it) {
    apply(v, w);
    Real rayleigh = 0;
    for (int i = 0; i < n; ++i) rayleigh += v[i] * w[i];
    Real wn = 0;
    for (Real x : w) wn += x * x;
    wn = std::sqrt(wn);
    if (wn == 0) throw std::invalid_argument("operator_norm_sq: operator annihilated iterate");
    for (int i = 0; i < n; ++i) v[i] = w[i] / wn;
    if (it > 0 && std::abs(rayleigh - lambda) <= 1e-6 * std::abs(rayleigh)) {
      lambda = rayleigh;
      break;
    }
    lambda = rayleigh;
  }
  return lambda;
}

Real default_step_size(const PsfKernel& psf) {
  const Filter f = spatial_filter(psf);
  return 1.0 / (2.0 * operator_norm_sq(f, psf.grid.n_x));
}

UnfoldedNetwork make_network(Variant variant, WeightMode mode, bool relu_after_gradient,
                             int K, const Filter& phi, Real gamma, Real alpha_init) {
  if (K < 1) throw std::invalid_argument("make_network: K must be >= 1");
  if (gamma <= 0) throw std::invalid_argument("make_network: gamma must be > 0");
  if (alpha_init < 0) throw std::invalid_argument("make_network: alpha_init must be >= 0");

  FilterPair pair;
  pair.B.center = phi.center;
  pair.B.k.resize(phi.len());
  for (int j = 0; j < phi.len(); ++j) pair.B.k[j] = 2.0 * gamma * phi.k[j];

  // S = delta - B * phi as one centered filter
  std::vector<Real> bp = conv_full(pair.B.k, phi.k);
  pair.S.center = pair.B.center + phi.center;
  pair.S.k.resize(bp.size());
  for (size_t j = 0; j < bp.size(); ++j) pair.S.k[j] = -bp[j];
  pair.S.k[pair.S.center] += 1.0;

  UnfoldedNetwork net;
  net.variant = variant;
  net.mode = mode;
  net.relu_after_gradient = relu_after_gradient;
  net.K = K;
  net.weights.assign(mode == WeightMode::Tied ? 1 : K, pair);
  net.alpha1.assign(K, variant == Variant::RELU_ONLY ? 0.0 : alpha_init);
  net.alpha2.assign(K, variant_uses_alpha2(variant) ? alpha_init : 0.0);
  net.validate();
  return net;
}

namespace {

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& os, double v) {
  uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

void put_filter(std::ostream& os, const Filter& f) {
  put_u32(os, static_cast<uint32_t>(f.len()));
  put_u32(os, static_cast<uint32_t>(f.center));
  for (Real v : f.k) put_f64(os, v);
}

Filter get_filter(std::istream& is) {
  Filter f;
  const uint32_t len = get_u32(is);
  f.center = static_cast<int>(get_u32(is));
  if (len == 0 || len > (1u << 24)) throw std::runtime_error("bad filter length");
  f.k.resize(len);
  for (auto& v : f.k) v = get_f64(is);
  return f;
}

}  // namespace

void save_network(const std::string& path, const UnfoldedNetwork& net) {
  net.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write("PSRN", 4);
  put_u32(os, 1);  // format version
  put_u32(os, static_cast<uint32_t>(net.variant));
  put_u32(os, static_cast<uint32_t>(net.mode));
  put_u32(os, net.relu_after_gradient ? 1 : 0);
  put_u32(os, static_cast<uint32_t>(net.K));
  put_u32(os, static_cast<uint32_t>(net.weights.size()));
  for (const auto& w : net.weights) {
    put_filter(os, w.B);
    put_filter(os, w.S);
  }
  for (int k = 0; k < net.K; ++k) {
    put_f64(os, net.alpha1[k]);
    put_f64(os, net.alpha2[k]);
  }
  if (!os) throw std::runtime_error("write failed: " + path);

  nlohmann::json meta;
  meta["format"] = "PSRN/1";
  meta["variant"] = variant_name(net.variant);
  meta["weight_mode"] = weight_mode_name(net.mode);
  meta["relu_after_gradient"] = net.relu_after_gradient;
  meta["layers"] = net.K;
  meta["filter_lengths"] = {net.weights[0].B.len(), net.weights[0].S.len()};
  std::ofstream js(path + ".json");
  js << meta.dump(2) << "\n";
}

UnfoldedNetwork load_network(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "PSRN", 4) != 0)
    throw std::runtime_error("not a network file: " + path);
  const uint32_t version = get_u32(is);
  if (version != 1) throw std::runtime_error("unsupported network format version");
  UnfoldedNetwork net;
  net.variant = static_cast<Variant>(get_u32(is));
  net.mode = static_cast<WeightMode>(get_u32(is));
  net.relu_after_gradient = get_u32(is) != 0;
  net.K = static_cast<int>(get_u32(is));
  const uint32_t slots = get_u32(is);
  if (net.K < 1 || net.K > (1 << 16) || slots == 0 || slots > static_cast<uint32_t>(net.K))
    throw std::runtime_error("implausible network header");
  net.weights.resize(slots);
  for (auto& w : net.weights) {
    w.B = get_filter(is);
    w.S = get_filter(is);
  }
  net.alpha1.resize(net.K);
  net.alpha2.resize(net.K);
  for (int k = 0; k < net.K; ++k) {
    net.alpha1[k] = get_f64(is);
    net.alpha2[k] = get_f64(is);
  }
  if (!is) throw std::runtime_error("truncated network file: " + path);
  net.validate();
  return net;
}

}  // namespace psr
