#pragma once

#include <vector>

#include "psr/conv.hpp"
#include "psr/types.hpp"

namespace psr {

enum class SolverVariant { ISTA, FISTA, ENET, FENET };

const char* solver_variant_name(SolverVariant v);

/// Fixed-parameter proximal solver settings. The thresholds applied per
/// iteration are alpha1 = 2 gamma lambda1 and alpha2 = 2 gamma lambda2.
struct SolverConfig {
  SolverVariant variant = SolverVariant::FISTA;
  Real lambda1 = 0;    // column (l2,1) weight
  Real lambda2 = 0;    // quadratic shrink weight, 0 for ISTA/FISTA
  int max_iters = 100;
  Real gamma = 0;      // step size; required > 0
  Real tolerance = 0;  // successive-iterate stop; 0 runs all iterations

  void validate() const;
};

/// Proximal gradient solve against the zero-padded linear model. The
/// returned trajectory holds every estimate u_hat^(1..k); the last entry is
/// the result. Iterates follow the same initialization and momentum
/// schedule as the unrolled networks (first gradient step from zero, then
/// t_1 = (1+sqrt 5)/2 with the carrier seeded by the raw gradient image),
/// so a tied network with the matching analytic weights reproduces this
/// trajectory exactly.
struct SolveResult {
  Matrix u;
  std::vector<Matrix> trajectory;
  int iterations = 0;
  bool converged = false;  // stopped by tolerance rather than max_iters
};

SolveResult solve(const SolverConfig& config, const Filter& phi, const Matrix& T);

/// Full-line data term plus regularizers:
/// sum_m ||conv_full(phi, u_m) - pad(T_m)||^2 + lambda1 sum_n ||u[:,n]||_2
/// + lambda2 ||u||_F^2, where pad places T on the window read by conv_same.
/// Blur leaking past the window edges is penalized against zero background,
/// which keeps the gradient algebra exactly consistent with the composed
/// filter form used by the unrolled networks.
Real objective(const Filter& phi, const Matrix& T, const Matrix& u, Real lambda1,
               Real lambda2);

/// One gradient-descent image: u - 2 gamma phi^T (phi u - T) under the
/// zero-padded model. Exposed for tests.
Matrix gradient_step(const Filter& phi, const Matrix& T, const Matrix& u, Real gamma);

}  // namespace psr
