#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psr/synth.hpp"
#include "psr/unfolding.hpp"

namespace psr {

struct TrainConfig {
  int max_adam_iters = 5000;
  Real learning_rate = 1e-3;
  Real refinement_factor = 0.5;   // learning-rate multiplier per refinement pass
  int n_refinements = 1;
  Real initial_alpha = 0.1;       // used by callers building fresh networks
  Real adam_beta1 = 0.9;
  Real adam_beta2 = 0.999;
  Real adam_eps = 1e-8;
  int early_stop_window = 200;    // iterations without 1e-8 improvement end a stage
  Real early_stop_eps = 1e-8;
  Real divergence_factor = 10.0;  // loss above factor * stage-entry loss counts
  int divergence_window = 100;    // consecutive diverged evaluations halting a stage
  std::uint64_t seed = 1;         // consumed by drivers that synthesize the set
  int batches = 16;               // likewise; train() itself takes the set as given

  void validate() const;
};

/// Gradients mirroring the network's parameter layout. Weight-slot filter
/// gradients accumulate across every layer that shares the slot.
struct NetGradients {
  std::vector<std::vector<Real>> dB, dS;  // per weight slot
  std::vector<Real> dalpha1, dalpha2;     // per layer

  void init_like(const UnfoldedNetwork& net);
  bool all_finite() const;
};

/// Mean over usable batches of ||infer_partial(net, k, T_b) - u_b||_F^2 /
/// ||u_b||_F^2. Batches with all-zero ground truth are excluded (warned
/// once per process); throws if every batch is zero.
Real loss(const UnfoldedNetwork& net, const TrainingSet& set, int k_active);

/// Reverse-mode gradients of loss through the k_active-layer forward pass,
/// for every parameter (callers select which slots to update). The shrink
/// uses subgradient 0 exactly at its kink; relu uses derivative 0 at 0.
NetGradients grad(const UnfoldedNetwork& net, const TrainingSet& set, int k_active);

/// Flat-vector ADAM with bias correction.
struct AdamState {
  Real lr, beta1, beta2, eps;
  std::vector<Real> m, v;
  long step = 0;

  AdamState(size_t n, Real lr_, Real b1, Real b2, Real eps_)
      : lr(lr_), beta1(b1), beta2(b2), eps(eps_), m(n, 0.0), v(n, 0.0) {}
};

/// One in-place update; throws on non-finite gradients.
void adam_step(AdamState& state, std::vector<Real>& params,
               const std::vector<Real>& grads);

struct StageRecord {
  std::string stage;            // e.g. "k2_main", "k2_refine1"
  std::vector<Real> losses;     // entry loss first, then one per iteration
  Real best_loss = 0;
  bool halted_divergent = false;
};

struct TrainReport {
  std::vector<StageRecord> stages;
  std::vector<UnfoldedNetwork> snapshots;  // network at the end of each stage
  Real final_loss = 0;
  double wall_seconds = 0;                 // never serialized to CSV
};

/// Greedy layer-wise schedule: for k = 1..K, fit layer k's parameters
/// (tied: the shared filters plus alpha^(k-1)), then refine all so-far
/// active parameters at a reduced learning rate. Each stage restores its
/// best-evaluated parameters; if the full-depth loss still worsened
/// relative to the input network, the input network is returned.
TrainReport train(UnfoldedNetwork& net, const TrainingSet& set, const TrainConfig& config);

/// CSV rows (iteration, stage, loss); deterministic byte-for-byte.
void write_train_report_csv(const std::string& path, const TrainReport& report);

}  // namespace psr
