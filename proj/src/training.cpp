#include "psr/training.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "psr/tensor_io.hpp"

namespace psr {

void TrainConfig::validate() const {
  if (max_adam_iters < 1) throw std::invalid_argument("TrainConfig: max_adam_iters >= 1");
  if (learning_rate <= 0) throw std::invalid_argument("TrainConfig: learning_rate > 0");
  if (refinement_factor <= 0 || refinement_factor >= 1)
    throw std::invalid_argument("TrainConfig: refinement_factor in (0, 1)");
  if (n_refinements < 0) throw std::invalid_argument("TrainConfig: n_refinements >= 0");
  if (initial_alpha < 0) throw std::invalid_argument("TrainConfig: initial_alpha >= 0");
  if (early_stop_window < 1 || divergence_window < 1)
    throw std::invalid_argument("TrainConfig: stop windows must be >= 1");
  if (early_stop_eps < 0 || divergence_factor <= 1)
    throw std::invalid_argument("TrainConfig: bad stop thresholds");
  if (batches < 1) throw std::invalid_argument("TrainConfig: batches >= 1");
}

void NetGradients::init_like(const UnfoldedNetwork& net) {
  dB.assign(net.weights.size(), {});
  dS.assign(net.weights.size(), {});
  for (size_t s = 0; s < net.weights.size(); ++s) {
    dB[s].assign(net.weights[s].B.len(), 0.0);
    dS[s].assign(net.weights[s].S.len(), 0.0);
  }
  dalpha1.assign(net.K, 0.0);
  dalpha2.assign(net.K, 0.0);
}

bool NetGradients::all_finite() const {
  auto ok = [](const std::vector<Real>& v) {
    for (Real x : v)
      if (!std::isfinite(x)) return false;
    return true;
  };
  for (const auto& v : dB)
    if (!ok(v)) return false;
  for (const auto& v : dS)
    if (!ok(v)) return false;
  return ok(dalpha1) && ok(dalpha2);
}

namespace {

void relu_inplace(Matrix& m) {
  for (Real& x : m.v) x = x > 0 ? x : 0;
}

/// Forward records per layer: v (activation input), u (output), z (carrier)
/// and the momentum coefficient used to extrapolate z.
struct Tape {
  Matrix u0;
  std::vector<Matrix> v, u, z;
  std::vector<Real> mu;  // mu[k-1] built z[k-1]; unused for k = 1
};

Matrix run_activation(const UnfoldedNetwork& net, int layer, Matrix pre) {
  if (net.variant == Variant::RELU_ONLY) {
    relu_inplace(pre);
    return pre;
  }
  return block_soft_threshold(pre, net.alpha1[layer], net.alpha2[layer]);
}

void forward_tape(const UnfoldedNetwork& net, int k_active, const Matrix& T, Tape& tape) {
  const bool momentum = variant_has_momentum(net.variant);
  tape.v.resize(k_active);
  tape.u.resize(k_active);
  tape.z.resize(k_active);
  tape.mu.assign(k_active, 0.0);

  tape.u0 = Matrix(T.rows, T.cols);
  conv_same_rows(net.B(0), T, tape.u0);
  tape.v[0] = tape.u0;
  if (net.relu_after_gradient) relu_inplace(tape.v[0]);
  tape.u[0] = run_activation(net, 0, tape.v[0]);
  tape.z[0] = momentum ? tape.u0 : tape.u[0];
  Real t = momentum_t1();

  Matrix bt = tape.u0;  // B(0) * T, reused for tied weights
  for (int k = 2; k <= k_active; ++k) {
    const int layer = k - 1;
    if (net.mode == WeightMode::Untied) conv_same_rows(net.B(layer), T, bt);
    Matrix pre(T.rows, T.cols);
    conv_same_rows(net.S(layer), tape.z[layer - 1], pre);
    for (size_t i = 0; i < pre.v.size(); ++i) pre.v[i] += bt.v[i];
    tape.v[layer] = std::move(pre);
    if (net.relu_after_gradient) relu_inplace(tape.v[layer]);
    tape.u[layer] = run_activation(net, layer, tape.v[layer]);
    if (momentum) {
      const Real t_new = momentum_next_t(t);
      Real mu = (t - 1.0) / t_new;
      if (net.force_zero_momentum) mu = 0;
      tape.mu[layer] = mu;
      Matrix z(T.rows, T.cols);
      for (size_t i = 0; i < z.v.size(); ++i)
        z.v[i] = tape.u[layer].v[i] + mu * (tape.u[layer].v[i] - tape.u[layer - 1].v[i]);
      tape.z[layer] = std::move(z);
      t = t_new;
    } else {
      tape.z[layer] = tape.u[layer];
    }
  }
}

/// Pullback through the column shrink at input v with upstream gbar.
/// Returns the input gradient; accumulates the threshold gradients.
Matrix shrink_vjp(const Matrix& v, Real alpha1, Real alpha2, const Matrix& gbar,
                  Real& dalpha1, Real& dalpha2) {
  Matrix vbar(v.rows, v.cols);
  const Real denom = 1.0 + alpha2;
  for (int n = 0; n < v.cols; ++n) {
    Real nu_sq = 0;
    for (int m = 0; m < v.rows; ++m) {
      const Real x = v.at(m, n);
      nu_sq += x * x;
    }
    const Real nu = std::sqrt(nu_sq);
    if (!(nu > alpha1) || nu == 0) continue;  // dead column, subgradient 0
    Real dot = 0;
    for (int m = 0; m < v.rows; ++m) dot += v.at(m, n) * gbar.at(m, n);
    const Real s = 1.0 - alpha1 / nu;
    const Real bend = alpha1 / (nu_sq * nu);
    for (int m = 0; m < v.rows; ++m)
      vbar.at(m, n) = (s * gbar.at(m, n) + bend * dot * v.at(m, n)) / denom;
    dalpha1 += -dot / (nu * denom);
    dalpha2 += -s * dot / (denom * denom);
  }
  return vbar;
}

Matrix relu_vjp(const Matrix& v, const Matrix& gbar) {
  Matrix out(v.rows, v.cols);
  for (size_t i = 0; i < v.v.size(); ++i) out.v[i] = v.v[i] > 0 ? gbar.v[i] : 0.0;
  return out;
}

Matrix activation_vjp(const UnfoldedNetwork& net, int layer, const Matrix& v,
                      const Matrix& gbar, NetGradients& g) {
  if (net.variant == Variant::RELU_ONLY) return relu_vjp(v, gbar);
  return shrink_vjp(v, net.alpha1[layer], net.alpha2[layer], gbar, g.dalpha1[layer],
                    g.dalpha2[layer]);
}

void add_into(Matrix& dst, const Matrix& src) {
  for (size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += src.v[i];
}

/// Backward through one taped pass; seed is dLoss/du^(k_active).
void backward_tape(const UnfoldedNetwork& net, int k_active, const Matrix& T,
                   const Tape& tape, const Matrix& seed, NetGradients& g) {
  const bool momentum = variant_has_momentum(net.variant);
  std::vector<Matrix> ubar(k_active), zbar(k_active);
  for (int i = 0; i < k_active; ++i) {
    ubar[i] = Matrix(T.rows, T.cols);
    zbar[i] = Matrix(T.rows, T.cols);
  }
  add_into(ubar[k_active - 1], seed);

  for (int k = k_active; k >= 2; --k) {
    const int layer = k - 1;
    if (momentum) {
      // z_k = u_k + mu (u_k - u_{k-1}); the carrier of the final layer is
      // never consumed, its zbar stays zero
      const Real mu = tape.mu[layer];
      for (size_t i = 0; i < zbar[layer].v.size(); ++i) {
        const Real zb = zbar[layer].v[i];
        ubar[layer].v[i] += (1.0 + mu) * zb;
        ubar[layer - 1].v[i] -= mu * zb;
      }
    }
    Matrix vbar = activation_vjp(net, layer, tape.v[layer], ubar[layer], g);
    if (net.relu_after_gradient) vbar = relu_vjp(tape.v[layer], vbar);
    const int slot = net.weight_slot(layer);
    const Matrix& carrier = tape.z[layer - 1];
    kernel_grad_rows_accum(carrier, vbar, net.S(layer).len(), net.S(layer).center,
                           g.dS[slot].data());
    kernel_grad_rows_accum(T, vbar, net.B(layer).len(), net.B(layer).center,
                           g.dB[slot].data());
    Matrix cbar(T.rows, T.cols);
    corr_same_rows(net.S(layer), vbar, cbar);
    add_into(momentum ? zbar[layer - 1] : ubar[layer - 1], cbar);
  }

  // layer 1: u_1 = act(relu?(u0)), u0 = B(0) * T, carrier z_1 = u0 (momentum)
  Matrix vbar = activation_vjp(net, 0, tape.v[0], ubar[0], g);
  if (net.relu_after_gradient) vbar = relu_vjp(tape.v[0], vbar);
  Matrix u0bar = std::move(vbar);
  if (momentum) add_into(u0bar, zbar[0]);
  kernel_grad_rows_accum(T, u0bar, net.B(0).len(), net.B(0).center,
                         g.dB[net.weight_slot(0)].data());
}

std::atomic<bool> g_zero_batch_warned{false};

/// Shared by loss and grad: which batches carry signal, and the seed scale.
int count_included(const TrainingSet& set) {
  int included = 0;
  for (const auto& b : set.batches)
    if (b.u.frob_sq() > 0) ++included;
  if (included < static_cast<int>(set.batches.size()) &&
      !g_zero_batch_warned.exchange(true))
    std::fputs("training: batches with all-zero ground truth are excluded from the loss\n",
               stderr);
  if (included == 0)
    throw std::invalid_argument("training: every batch has all-zero ground truth");
  return included;
}

Real loss_and_maybe_grad(const UnfoldedNetwork& net, const TrainingSet& set, int k_active,
                         NetGradients* g) {
  net.validate();
  if (k_active < 1 || k_active > net.K)
    throw std::invalid_argument("training: k_active out of range");
  const int included = count_included(set);
  if (g) g->init_like(net);
  Real total = 0;
  Tape tape;
  for (const auto& batch : set.batches) {
    const Real u_norm_sq = batch.u.frob_sq();
    if (u_norm_sq == 0) continue;
    forward_tape(net, k_active, batch.T.data, tape);
    const Matrix& out = tape.u[k_active - 1];
    check_shape(out, batch.u, "training batch");
    Real err = 0;
    for (size_t i = 0; i < out.v.size(); ++i) {
      const Real d = out.v[i] - batch.u.v[i];
      err += d * d;
    }
    total += err / u_norm_sq;
    if (g) {
      Matrix seed(out.rows, out.cols);
      const Real scale = 2.0 / (u_norm_sq * included);
      for (size_t i = 0; i < seed.v.size(); ++i)
        seed.v[i] = scale * (out.v[i] - batch.u.v[i]);
      backward_tape(net, k_active, batch.T.data, tape, seed, *g);
    }
  }
  return total / included;
}

}  // namespace

Real loss(const UnfoldedNetwork& net, const TrainingSet& set, int k_active) {
  return loss_and_maybe_grad(net, set, k_active, nullptr);
}

NetGradients grad(const UnfoldedNetwork& net, const TrainingSet& set, int k_active) {
  NetGradients g;
  loss_and_maybe_grad(net, set, k_active, &g);
  return g;
}

void adam_step(AdamState& state, std::vector<Real>& params,
               const std::vector<Real>& grads) {
  if (params.size() != state.m.size() || grads.size() != state.m.size())
    throw std::invalid_argument("adam_step: size mismatch");
  for (Real x : grads)
    if (!std::isfinite(x)) throw std::runtime_error("adam_step: non-finite gradient");
  ++state.step;
  const Real bc1 = 1.0 - std::pow(state.beta1, static_cast<Real>(state.step));
  const Real bc2 = 1.0 - std::pow(state.beta2, static_cast<Real>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    const Real mhat = state.m[i] / bc1;
    const Real vhat = state.v[i] / bc2;
    params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

namespace {

/// Which parameter slots a stage trains.
struct StageSpec {
  std::vector<int> weight_slots;
  std::vector<int> alpha_layers;
  bool train_alpha2 = false;
};

StageSpec main_stage_spec(const UnfoldedNetwork& net, int k) {
  StageSpec s;
  s.weight_slots.push_back(net.mode == WeightMode::Tied ? 0 : k - 1);
  if (net.variant != Variant::RELU_ONLY) s.alpha_layers.push_back(k - 1);
  s.train_alpha2 = variant_uses_alpha2(net.variant);
  return s;
}

StageSpec refine_stage_spec(const UnfoldedNetwork& net, int k) {
  StageSpec s;
  if (net.mode == WeightMode::Tied) {
    s.weight_slots.push_back(0);
  } else {
    for (int i = 0; i < k; ++i) s.weight_slots.push_back(i);
  }
  if (net.variant != Variant::RELU_ONLY)
    for (int i = 0; i < k; ++i) s.alpha_layers.push_back(i);
  s.train_alpha2 = variant_uses_alpha2(net.variant);
  return s;
}

size_t spec_size(const UnfoldedNetwork& net, const StageSpec& spec) {
  size_t n = 0;
  for (int s : spec.weight_slots) n += net.weights[s].B.len() + net.weights[s].S.len();
  n += spec.alpha_layers.size() * (spec.train_alpha2 ? 2 : 1);
  return n;
}

void gather_params(const UnfoldedNetwork& net, const StageSpec& spec,
                   std::vector<Real>& out) {
  out.clear();
  for (int s : spec.weight_slots) {
    out.insert(out.end(), net.weights[s].B.k.begin(), net.weights[s].B.k.end());
    out.insert(out.end(), net.weights[s].S.k.begin(), net.weights[s].S.k.end());
  }
  for (int l : spec.alpha_layers) {
    out.push_back(net.alpha1[l]);
    if (spec.train_alpha2) out.push_back(net.alpha2[l]);
  }
}

void scatter_params(UnfoldedNetwork& net, const StageSpec& spec,
                    const std::vector<Real>& in) {
  size_t i = 0;
  for (int s : spec.weight_slots) {
    for (Real& v : net.weights[s].B.k) v = in[i++];
    for (Real& v : net.weights[s].S.k) v = in[i++];
  }
  for (int l : spec.alpha_layers) {
    net.alpha1[l] = std::max(0.0, in[i++]);
    if (spec.train_alpha2) net.alpha2[l] = std::max(0.0, in[i++]);
  }
}

void gather_grads(const NetGradients& g, const StageSpec& spec, std::vector<Real>& out) {
  out.clear();
  for (int s : spec.weight_slots) {
    out.insert(out.end(), g.dB[s].begin(), g.dB[s].end());
    out.insert(out.end(), g.dS[s].begin(), g.dS[s].end());
  }
  for (int l : spec.alpha_layers) {
    out.push_back(g.dalpha1[l]);
    if (spec.train_alpha2) out.push_back(g.dalpha2[l]);
  }
}

StageRecord run_stage(UnfoldedNetwork& net, const TrainingSet& set, int k_eval,
                      const StageSpec& spec, Real lr, const std::string& name,
                      const TrainConfig& cfg) {
  StageRecord rec;
  rec.stage = name;
  AdamState adam(spec_size(net, spec), lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

  UnfoldedNetwork best_net = net;
  Real best_loss = 0;
  std::vector<Real> best_hist;
  std::vector<Real> params, grads_flat;
  NetGradients g;
  int div_streak = 0;
  Real entry_loss = 0;

  for (int it = 1; it <= cfg.max_adam_iters; ++it) {
    const Real L = loss_and_maybe_grad(net, set, k_eval, &g);
    rec.losses.push_back(L);
    if (it == 1) {
      entry_loss = L;
      best_loss = L;
      best_net = net;
    } else if (L < best_loss) {
      best_loss = L;
      best_net = net;
    }
    best_hist.push_back(best_loss);

    if (L > cfg.divergence_factor * entry_loss) {
      if (++div_streak >= cfg.divergence_window) {
        rec.halted_divergent = true;
        break;
      }
    } else {
      div_streak = 0;
    }
    const int age = static_cast<int>(best_hist.size()) - 1 - cfg.early_stop_window;
    if (age >= 0 && best_hist[age] - best_loss < cfg.early_stop_eps) break;

    if (!g.all_finite()) {
      std::fprintf(stderr, "train: non-finite gradient in stage %s, halting stage\n",
                   name.c_str());
      rec.halted_divergent = true;
      break;
    }
    gather_grads(g, spec, grads_flat);
    gather_params(net, spec, params);
    adam_step(adam, params, grads_flat);
    scatter_params(net, spec, params);
  }

  net = best_net;
  rec.best_loss = best_loss;
  return rec;
}

}  // namespace

TrainReport train(UnfoldedNetwork& net, const TrainingSet& set, const TrainConfig& config) {
  config.validate();
  net.validate();
  const auto t0 = std::chrono::steady_clock::now();

  const UnfoldedNetwork input_net = net;
  const Real input_loss = loss(net, set, net.K);

  TrainReport report;
  for (int k = 1; k <= net.K; ++k) {
    {
      StageRecord rec = run_stage(net, set, k, main_stage_spec(net, k),
                                  config.learning_rate, "k" + std::to_string(k) + "_main",
                                  config);
      report.stages.push_back(std::move(rec));
      report.snapshots.push_back(net);
    }
    Real lr = config.learning_rate;
    for (int r = 1; r <= config.n_refinements; ++r) {
      lr *= config.refinement_factor;
      StageRecord rec = run_stage(net, set, k, refine_stage_spec(net, k), lr,
                                  "k" + std::to_string(k) + "_refine" + std::to_string(r),
                                  config);
      report.stages.push_back(std::move(rec));
      report.snapshots.push_back(net);
    }
  }

  Real final_loss = loss(net, set, net.K);
  if (final_loss > input_loss) {
    // layer-wise fitting can trade early-layer loss against full depth;
    // never hand back something worse than the input
    net = input_net;
    final_loss = input_loss;
  }
  report.final_loss = final_loss;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

void write_train_report_csv(const std::string& path, const TrainReport& report) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "iteration,stage,loss\n";
  for (const auto& st : report.stages)
    for (size_t i = 0; i < st.losses.size(); ++i)
      os << i << ',' << st.stage << ',' << format_real(st.losses[i]) << '\n';
  os << "0,final," << format_real(report.final_loss) << '\n';
  if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace psr
