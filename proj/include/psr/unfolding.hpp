#pragma once

#include <string>
#include <vector>

#include "psr/conv.hpp"
#include "psr/thermal.hpp"
#include "psr/types.hpp"

namespace psr {

/// Solver families realized by the unrolled layers. The first four pair a
/// column (l2,1) shrink with either plain or momentum-accelerated gradient
/// steps; the Enet forms add an l2 shrink through alpha2. ReluOnly replaces
/// the shrink with a plain elementwise max(0, .) and ignores the alphas.
enum class Variant { LBISTA, LBFISTA, LBENET, LBFENET, RELU_ONLY };

enum class WeightMode { Tied, Untied };

bool variant_has_momentum(Variant v);
bool variant_uses_alpha2(Variant v);
const char* variant_name(Variant v);
const char* weight_mode_name(WeightMode m);
Variant variant_from_name(const std::string& s);
WeightMode weight_mode_from_name(const std::string& s);

struct FilterPair {
  Filter B;  // data injection
  Filter S;  // state mixing
};

/// K-layer unrolled network. Tied mode stores one shared filter pair,
/// untied mode stores one pair per layer; thresholds are always per-layer.
struct UnfoldedNetwork {
  Variant variant = Variant::LBISTA;
  WeightMode mode = WeightMode::Tied;
  bool relu_after_gradient = false;
  int K = 1;
  std::vector<FilterPair> weights;  // size 1 (tied) or K (untied)
  std::vector<Real> alpha1;         // size K
  std::vector<Real> alpha2;         // size K, fixed 0 unless the variant uses it

  // diagnostic switch: run momentum variants with the momentum term zeroed
  bool force_zero_momentum = false;

  int weight_slot(int layer) const { return mode == WeightMode::Tied ? 0 : layer; }
  const Filter& B(int layer) const { return weights[weight_slot(layer)].B; }
  const Filter& S(int layer) const { return weights[weight_slot(layer)].S; }

  void validate() const;
};

/// Running state of the unrolled iteration: the current estimate, the
/// carrier fed to the next layer (momentum extrapolation for the fast
/// variants, the estimate itself otherwise), and the step counter t.
struct UnfoldState {
  Matrix u_hat;
  Matrix z;
  Real t = 0;
  int k = 0;  // layers applied so far
};

/// Column-wise shrink: each pixel column (over all measurements) is scaled
/// by max(0, 1 - alpha1/||col||) / (1 + alpha2); columns with norm <= alpha1
/// (and zero columns) become zero.
Matrix block_soft_threshold(const Matrix& u, Real alpha1, Real alpha2);

/// First golden-ratio step value of the momentum recurrence.
Real momentum_t1();

/// t_{k} = (1 + sqrt(1 + 4 t_{k-1}^2)) / 2.
Real momentum_next_t(Real t_prev);

/// Layer 1: u0 = B(0) * T, u_hat = shrink(u0), carrier = u0 for momentum
/// variants (the raw gradient image, per the unrolled recursion) and u_hat
/// otherwise. bt0 may pass a precomputed B(0) * T.
UnfoldState init_state(const UnfoldedNetwork& net, const Matrix& T,
                       const Matrix* bt0 = nullptr);

/// Layer k in [2, K]: u_hat = shrink(S(k-1) * carrier + bt) with bt the
/// layer's B * T image; momentum variants then advance t and extrapolate
/// the carrier.
void layer_forward(const UnfoldedNetwork& net, int k, UnfoldState& state, const Matrix& bt);

/// Full K-layer forward pass.
Matrix infer(const UnfoldedNetwork& net, const Matrix& T);

/// Forward pass truncated after k_active layers (1 <= k_active <= K).
Matrix infer_partial(const UnfoldedNetwork& net, int k_active, const Matrix& T);

/// Largest eigenvalue of the normal operator of zero-padded convolution
/// with f on a window of n samples, by power iteration (1e-6 relative).
Real operator_norm_sq(const Filter& f, int n);

/// Step size gamma = 1 / (2 lambda_max) for the kernel's collapsed spatial
/// filter on the kernel's own x window.
Real default_step_size(const PsfKernel& psf);

/// Network with the analytic initialization B = 2 gamma phi and
/// S = delta - B * phi, alphas at alpha_init (alpha2 only where used).
UnfoldedNetwork make_network(Variant variant, WeightMode mode, bool relu_after_gradient,
                             int K, const Filter& phi, Real gamma, Real alpha_init);

/// Versioned binary network file plus a JSON sidecar (same path + ".json").
void save_network(const std::string& path, const UnfoldedNetwork& net);
UnfoldedNetwork load_network(const std::string& path);

}  // namespace psr
