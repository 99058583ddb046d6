#include "psr/classical.hpp"

#include <cmath>
#include <cstdio>

#include "psr/unfolding.hpp"

namespace psr {

const char* solver_variant_name(SolverVariant v) {
  switch (v) {
    case SolverVariant::ISTA: return "ista";
    case SolverVariant::FISTA: return "fista";
    case SolverVariant::ENET: return "enet";
    case SolverVariant::FENET: return "fenet";
  }
  return "?";
}

void SolverConfig::validate() const {
  if (lambda1 < 0 || lambda2 < 0)
    throw std::invalid_argument("SolverConfig: lambdas must be >= 0");
  if ((variant == SolverVariant::ISTA || variant == SolverVariant::FISTA) && lambda2 != 0)
    throw std::invalid_argument("SolverConfig: lambda2 must be 0 for ISTA/FISTA");
  if (gamma <= 0) throw std::invalid_argument("SolverConfig: gamma must be > 0");
  if (max_iters < 1) throw std::invalid_argument("SolverConfig: max_iters must be >= 1");
  if (tolerance < 0) throw std::invalid_argument("SolverConfig: tolerance must be >= 0");
}

namespace {

/// residual on the full line: conv_full(phi, u_m) minus T_m placed at the
/// window offset phi.center
std::vector<Real> full_residual(const Filter& phi, const Real* u, const Real* T, int n) {
  std::vector<Real> r = conv_full(phi.k, std::vector<Real>(u, u + n));
  for (int i = 0; i < n; ++i) r[phi.center + i] -= T[i];
  return r;
}

/// g[i] = sum_j phi.k[j] r[i + j] (the adjoint of the padded forward map)
void valid_corr(const Filter& phi, const std::vector<Real>& r, int n, Real* g) {
  const int L = phi.len();
  for (int i = 0; i < n; ++i) {
    Real acc = 0;
    for (int j = 0; j < L; ++j) acc += phi.k[j] * r[i + j];
    g[i] = acc;
  }
}

}  // namespace

Matrix gradient_step(const Filter& phi, const Matrix& T, const Matrix& u, Real gamma) {
  check_shape(T, u, "gradient_step");
  Matrix out(u.rows, u.cols);
  const int n = u.cols;
  std::vector<Real> g(n);
  for (int m = 0; m < u.rows; ++m) {
    std::vector<Real> r = full_residual(phi, u.row(m), T.row(m), n);
    valid_corr(phi, r, n, g.data());
    Real* o = out.row(m);
    const Real* um = u.row(m);
    for (int i = 0; i < n; ++i) o[i] = um[i] - 2.0 * gamma * g[i];
  }
  return out;
}

Real objective(const Filter& phi, const Matrix& T, const Matrix& u, Real lambda1,
               Real lambda2) {
  check_shape(T, u, "objective");
  const int n = u.cols;
  Real data = 0;
  for (int m = 0; m < u.rows; ++m) {
    std::vector<Real> r = full_residual(phi, u.row(m), T.row(m), n);
    for (Real x : r) data += x * x;
  }
  Real l21 = 0;
  for (int c = 0; c < n; ++c) {
    Real s = 0;
    for (int m = 0; m < u.rows; ++m) {
      const Real x = u.at(m, c);
      s += x * x;
    }
    l21 += std::sqrt(s);
  }
  return data + lambda1 * l21 + lambda2 * u.frob_sq();
}

SolveResult solve(const SolverConfig& config, const Filter& phi, const Matrix& T) {
  config.validate();
  const Real lmax = operator_norm_sq(phi, T.cols);
  if (config.gamma > 1.0 / (2.0 * lmax) * (1.0 + 1e-9))
    std::fputs("solve: step size exceeds the stability bound, iterates may diverge\n",
               stderr);

  const Real a1 = 2.0 * config.gamma * config.lambda1;
  const Real a2 = 2.0 * config.gamma * config.lambda2;
  const bool momentum =
      config.variant == SolverVariant::FISTA || config.variant == SolverVariant::FENET;

  SolveResult res;
  res.trajectory.reserve(config.max_iters);

  // first gradient step from u = 0 gives the raw image 2 gamma phi^T T
  Matrix zero(T.rows, T.cols);
  Matrix u0 = gradient_step(phi, T, zero, config.gamma);
  Matrix u_hat = block_soft_threshold(u0, a1, a2);
  res.trajectory.push_back(u_hat);
  Matrix z = momentum ? std::move(u0) : u_hat;
  Real t = momentum_t1();

  for (int k = 2; k <= config.max_iters; ++k) {
    Matrix pre = gradient_step(phi, T, z, config.gamma);
    Matrix u_new = block_soft_threshold(pre, a1, a2);
    for (Real x : u_new.v)
      if (!std::isfinite(x)) throw std::runtime_error("solve: non-finite iterate at k=" +
                                                      std::to_string(k));
    Real diff_sq = 0;
    for (size_t i = 0; i < u_new.v.size(); ++i) {
      const Real d = u_new.v[i] - u_hat.v[i];
      diff_sq += d * d;
    }
    if (momentum) {
      const Real t_new = momentum_next_t(t);
      const Real mu = (t - 1.0) / t_new;
      Matrix z_new(u_new.rows, u_new.cols);
      for (size_t i = 0; i < z_new.v.size(); ++i)
        z_new.v[i] = u_new.v[i] + mu * (u_new.v[i] - u_hat.v[i]);
      z = std::move(z_new);
      t = t_new;
    }
    u_hat = std::move(u_new);
    if (!momentum) z = u_hat;
    res.trajectory.push_back(u_hat);
    if (config.tolerance > 0 && std::sqrt(diff_sq) < config.tolerance) {
      res.converged = true;
      break;
    }
  }
  res.iterations = static_cast<int>(res.trajectory.size());
  res.u = res.trajectory.back();
  return res;
}

}  // namespace psr
