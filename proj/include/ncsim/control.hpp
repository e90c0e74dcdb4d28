#pragma once

// Finite-horizon LQ machinery, certainty-equivalent control, the closed-form
// cost of the dual predictor loop, cost bookkeeping, and the two-step scalar
// controller whose optimal first input differs from its certainty-equivalent
// counterpart.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "ncsim/error.hpp"
#include "ncsim/estimation.hpp"
#include "ncsim/linalg.hpp"
#include "ncsim/model.hpp"
#include "ncsim/stats.hpp"
#include "ncsim/trace.hpp"

namespace ncsim {

// S[k] for k = 0..N (S[N] = Q0), L[k] and the input weight
// Q2 + B' S_{k+1} B for k = 0..N-1.
struct RiccatiSolution {
  std::size_t horizon = 0;
  std::vector<Matrix> S;
  std::vector<Matrix> L;
  std::vector<Matrix> input_weight;
};

inline RiccatiSolution riccati_backward(const Matrix& A, const Matrix& B, const Matrix& Q0, const Matrix& Q1,
                                        const Matrix& Q2, std::size_t N) {
  const auto n = A.rows(), m = B.cols();
  if (!is_square(A) || B.rows() != n || Q0.rows() != n || Q0.cols() != n || Q1.rows() != n ||
      Q1.cols() != n || Q2.rows() != m || Q2.cols() != m)
    throw ConfigError("riccati_backward: dimension mismatch");
  if (!is_pd(Q2)) throw ConfigError("Q2 must be positive definite");

  RiccatiSolution sol;
  sol.horizon = N;
  sol.S.assign(N + 1, Matrix());
  sol.L.assign(N, Matrix());
  sol.input_weight.assign(N, Matrix());
  sol.S[N] = Q0;
  for (std::size_t step = N; step-- > 0;) {
    const Matrix& Snext = sol.S[step + 1];
    const Matrix M = symmetrize(Q2 + B.transpose() * Snext * B);
    Eigen::LLT<Matrix> llt(M);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-14)
      throw NumericalError("riccati_backward: Q2 + B'SB is numerically singular");
    sol.L[step] = llt.solve(B.transpose() * Snext * A);
    sol.input_weight[step] = M;
    sol.S[step] = symmetrize(Q1 + A.transpose() * Snext * A - A.transpose() * Snext * B * sol.L[step]);
  }
  return sol;
}

inline RiccatiSolution riccati_backward(const LoopConfig& loop) {
  return riccati_backward(loop.plant.A, loop.plant.B, loop.weights.Q0, loop.weights.Q1, loop.weights.Q2,
                          loop.horizon);
}

inline Vector ce_control(const Matrix& L, const Vector& xhat) {
  if (L.cols() != xhat.size()) throw ConfigError("ce_control: dimension mismatch");
  return -(L * xhat);
}

// Predicted cost of the dual predictor loop:
//   x̂0' S0 x̂0 + tr(S0 P0) + Σ_n tr(S_{n+1} Rw) + tr(L_n' (Q2 + B'S_{n+1}B) L_n P_{n|n}).
inline double jdp_closed_form(const RiccatiSolution& ric, const Vector& xhat0, const Matrix& P0, const Matrix& Rw,
                              std::span<const Matrix> P_filtered) {
  if (P_filtered.size() != ric.horizon)
    throw ConfigError("jdp_closed_form: need one P_{n|n} per step of the horizon");
  double j = xhat0.dot(ric.S[0] * xhat0) + (ric.S[0] * P0).trace();
  for (std::size_t n = 0; n < ric.horizon; ++n) {
    j += (ric.S[n + 1] * Rw).trace();
    j += (ric.L[n].transpose() * ric.input_weight[n] * ric.L[n] * P_filtered[n]).trace();
  }
  return j;
}

struct CostReport {
  double cost = 0.0;                  // J (mean over episodes)
  std::optional<double> cost_se;      // standard error, absent for a single episode
  double transmissions = 0.0;         // E[Σ delta]
  double penalized_cost = 0.0;        // J_Λ = J + Λ E[Σ delta]
  std::optional<double> jdp;          // closed-form prediction when applicable
  std::size_t episodes = 0;
};

inline double stage_cost(const CostWeights& w, const Vector& x, const Vector& u) {
  return x.dot(w.Q1 * x) + u.dot(w.Q2 * u);
}

inline double terminal_cost(const CostWeights& w, const Vector& x) { return x.dot(w.Q0 * x); }

// Re-accumulates the quadratic cost of a finished trace from its x and u.
inline CostReport evaluate_cost(const LoopTrace& trace, const CostWeights& weights) {
  if (!trace.complete()) throw ConfigError("evaluate_cost: trace does not cover the horizon");
  CostReport r;
  for (std::size_t k = 0; k < trace.horizon; ++k) r.cost += stage_cost(weights, trace.steps[k].x, trace.steps[k].u);
  r.cost += terminal_cost(weights, trace.steps[trace.horizon].x);
  r.transmissions = static_cast<double>(trace.transmissions());
  r.penalized_cost = r.cost + weights.network_penalty * r.transmissions;
  r.episodes = 1;
  return r;
}

// ---- two-step scalar example -------------------------------------------

inline double two_step_S1(const TwoStepProblem& p) {
  return p.Q1 + p.a * p.a * p.Q0 - (p.a * p.b * p.Q0) * (p.a * p.b * p.Q0) / (p.Q2 + p.b * p.b * p.Q0);
}

inline double two_step_u1(double a, double b, double Q0, double Q2, double xhat11) {
  return -(a * b * Q0) / (Q2 + b * b * Q0) * xhat11;
}

inline double ce_u0(double a, double b, double S1, double Q2, double xhat00) {
  return -(a * b * S1) / (Q2 + b * b * S1) * xhat00;
}

// Weight of E[P_{1|1}] in V_0: a² b² Q0² / (Q2 + b² Q0).
inline double two_step_probe_weight(const TwoStepProblem& p) {
  return p.a * p.a * p.b * p.b * p.Q0 * p.Q0 / (p.Q2 + p.b * p.b * p.Q0);
}

struct StationarityTerms {
  double xhat00 = 0.0;
  double linear = 0.0;     // 2 u0 (Q2 + b² S1) + 2 x̂00 a b S1
  double dual = 0.0;       // b (m - mean)² φ(m), the derivative of -E[P_{1|1}] in u0
  double residual = 0.0;   // linear - weight · dual
};

// dV0/du0 for branch delta0. delta0 = 1: m = threshold - a x0 - b u0 and the
// unknown part of x_1 is w_0. delta0 = 0: m = threshold - b u0 and the
// unknown part is a x_0 + w_0 with x_0 truncated below the threshold. The
// conditional mean inside the dual term is recomputed for every u0.
inline StationarityTerms two_step_stationarity(const TwoStepProblem& p, bool delta0, double x0, double u0,
                                               bool include_dual_term = true) {
  p.validate();
  const double S1 = two_step_S1(p);
  StationarityTerms t;
  const stats::TruncatedGaussian x_trunc{0.0, p.x0_var, p.threshold};
  t.xhat00 = delta0 ? x0 : stats::truncated_moments(x_trunc).mean;
  t.linear = 2.0 * u0 * (p.Q2 + p.b * p.b * S1) + 2.0 * t.xhat00 * p.a * p.b * S1;
  if (include_dual_term && p.b != 0.0) {
    if (delta0) {
      const double m = p.threshold - p.a * x0 - p.b * u0;
      const stats::TruncatedGaussian w{0.0, p.noise_var, m};
      // Below the representable mass the term is φ(m)/m² → 0.
      if (w.mass() >= stats::kMinConditioningMass) {
        const double mean = stats::truncated_moments(w).mean;
        t.dual = p.b * (m - mean) * (m - mean) * stats::normal_pdf(m, 0.0, p.noise_var);
      }
    } else {
      const double m = p.threshold - p.b * u0;
      try {
        const auto cm = stats::conditional_moments_compound(p.a, x_trunc, p.noise_var, m, p.quadrature);
        const double dens = stats::compound_density(p.a, x_trunc, p.noise_var, m, p.quadrature);
        t.dual = p.b * (m - cm.mean) * (m - cm.mean) * dens;
      } catch (const NumericalError&) {
        t.dual = 0.0;  // bound far below the support: density and gap both vanish
      }
    }
  }
  t.residual = t.linear - two_step_probe_weight(p) * t.dual;
  return t;
}

struct TwoStepU0 {
  double ce = 0.0;
  double optimal = 0.0;
  double residual_at_ce = 0.0;
  double xhat00 = 0.0;
};

inline constexpr double kU0ScanLo = -10.0;
inline constexpr double kU0ScanHi = 10.0;

// Solves dV0/du0 = 0 by scanning [-10, 10] for a sign change and refining
// with the bracketing root finder.
inline TwoStepU0 two_step_u0_optimal(const TwoStepProblem& p, bool delta0, double x0 = 0.0,
                                     bool include_dual_term = true, double tol = 1e-10,
                                     std::size_t scan_steps = 400) {
  p.validate();
  TwoStepU0 r;
  const double S1 = two_step_S1(p);
  auto residual = [&](double u0) { return two_step_stationarity(p, delta0, x0, u0, include_dual_term).residual; };
  r.xhat00 = two_step_stationarity(p, delta0, x0, 0.0, false).xhat00;
  r.ce = ce_u0(p.a, p.b, S1, p.Q2, r.xhat00);
  r.residual_at_ce = residual(r.ce);
  if (p.b == 0.0) {
    r.optimal = 0.0;  // the input has no effect; the minimizer of Q2 u0² is 0
    return r;
  }
  const auto bracket = stats::scan_bracket(residual, kU0ScanLo, kU0ScanHi, scan_steps);
  if (!bracket) throw NumericalError("two_step_u0_optimal: no sign change in the scan window [-10, 10]");
  r.optimal = bracket->first == bracket->second ? bracket->first
                                                : stats::find_root(residual, bracket->first, bracket->second, tol);
  return r;
}

}  // namespace ncsim
