#pragma once

// Controller-side observer for the dual predictor loop, packet-age
// bookkeeping, the sensor-side Kalman filter used when only noisy outputs
// are measured, and the exact posteriors of the scalar two-step example.

#include <cstddef>
#include <cstdint>
#include <optional>

#include "ncsim/error.hpp"
#include "ncsim/linalg.hpp"
#include "ncsim/model.hpp"
#include "ncsim/rng.hpp"
#include "ncsim/scheduling.hpp"
#include "ncsim/stats.hpp"

namespace ncsim {

// tau_k = index of the newest delivered packet (-1: the fictitious packet
// carrying the prior of x_0).
inline long tau_update(long tau_prev, bool delta, long k) { return delta ? k : tau_prev; }

struct ObserverState {
  Vector xhat;        // xhat_{k|k}
  Vector prediction;  // xhat_{k|tau_k} when delta_k = 0, else the prediction made before y_k
  long k = -1;
  long tau = -1;

  long delay() const { return k - tau; }
};

inline ObserverState make_observer(const PlantModel& model) {
  return {model.x0_mean, model.x0_mean, -1, -1};
}

// xhat_{k+1|tau_k} = A xhat_{k|k} + B u_k. Before the first sample the
// prediction of x_0 is its prior mean.
inline Vector predict(const ObserverState& s, const Vector& u_prev, const PlantModel& model) {
  if (s.k < 0) return s.xhat;
  return model.A * s.xhat + model.B * u_prev;
}

// Advance from step k-1 to k: predict with u_{k-1}, then replace by y_k = x_k
// when the packet arrived. Without a packet the estimate is the prediction;
// under a symmetric scheduler the quantized-noise correction is zero.
inline ObserverState observer_update(const ObserverState& s, bool delta, const std::optional<Vector>& y,
                                     const Vector& u_prev, const PlantModel& model) {
  ObserverState next;
  next.k = s.k + 1;
  next.prediction = predict(s, u_prev, model);
  if (delta) {
    if (!y) throw ProtocolError("observer_update: delta = 1 but no measurement was delivered");
    if (y->size() != model.state_dim()) throw ConfigError("observer_update: measurement dimension mismatch");
    next.xhat = *y;
  } else {
    next.xhat = next.prediction;
  }
  next.tau = tau_update(s.tau, delta, next.k);
  return next;
}

struct BurstEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t accepted = 0;
  std::size_t proposed = 0;
  bool exact = false;  // true when the symmetric shortcut applied
};

// E[Σ_{s=1}^{L} A^{s-1} w_{k-s} | no transmission during the whole burst],
// scalar plants only. The burst starts right after a delivered packet, so the
// accumulated noise is the innovation seen by the scheduler at each step.
// `known_offsets[t]` is the known part of x at burst step t (defaults to 0),
// so half-line rules can be conditioned at a chosen operating point.
inline BurstEstimate general_estimate_burst(const PlantModel& model, const SchedulerPolicy& scheduler,
                                            std::size_t burst_length, std::size_t budget,
                                            std::uint64_t seed,
                                            std::span<const double> known_offsets = {}) {
  if (model.state_dim() != 1) throw ConfigError("general_estimate_burst: scalar plants only");
  if (burst_length < 1) throw ConfigError("general_estimate_burst: burst length must be >= 1");
  if (!known_offsets.empty() && known_offsets.size() != burst_length)
    throw ConfigError("general_estimate_burst: one known offset per burst step is required");
  if (is_symmetric_control_free(scheduler)) return {0.0, 0.0, 0, 0, true};
  if (budget == 0) throw ConfigError("general_estimate_burst: empty sampling budget");

  const double a = model.A(0, 0);
  const double sd = std::sqrt(model.Rw(0, 0));
  RngStream rng(seed, 0, burst_length, StreamRole::kOracle);
  SchedulerInput in{Vector(1), Vector(1), 0, -1};
  double sum = 0.0, sum_sq = 0.0;
  std::size_t accepted = 0;
  for (std::size_t i = 0; i < budget; ++i) {
    double e = 0.0;
    bool silent = true;
    for (std::size_t t = 0; t < burst_length; ++t) {
      e = a * e + sd * rng.normal();
      const double offset = known_offsets.empty() ? 0.0 : known_offsets[t];
      in.state(0) = offset + e;
      in.prediction(0) = offset;
      if (decide(scheduler, in)) {
        silent = false;
        break;
      }
    }
    if (!silent) continue;
    ++accepted;
    sum += e;
    sum_sq += e * e;
  }
  const double rate = static_cast<double>(accepted) / static_cast<double>(budget);
  if (accepted < 2 || rate < 1e-6)
    throw NumericalError("general_estimate_burst: acceptance rate below 1e-6, conditioning infeasible");
  const double n = static_cast<double>(accepted);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n), accepted, budget, false};
}

// Sensor-side Kalman filter. Its filtered estimate is the state handed to
// the scheduler when the plant output is noisy.
struct SensorKf {
  Matrix C;
  Matrix Rv;
  Vector estimate;    // zhat^s_{k|k} (prior mean before the first step)
  Matrix P_pred;      // P^s_k (prior covariance before the first step)
  Matrix P_filt;      // P^s_{k|k}
  Matrix gain;        // K_{f,k}
  Matrix innovation_cov;  // R_{e,k}
  Vector innovation;      // e_k
  long k = -1;
};

inline SensorKf make_sensor_kf(const Matrix& C, const Matrix& Rv, const Vector& z0_mean, const Matrix& Rz0) {
  if (C.cols() != z0_mean.size() || Rz0.rows() != z0_mean.size() || Rz0.cols() != z0_mean.size())
    throw ConfigError("sensor kf: C / prior dimensions disagree");
  if (Rv.rows() != C.rows() || Rv.cols() != C.rows()) throw ConfigError("sensor kf: Rv must be m x m");
  if (!is_pd(Rv)) throw ConfigError("sensor kf: Rv must be positive definite");
  if (!is_psd(Rz0)) throw ConfigError("sensor kf: prior covariance must be PSD");
  SensorKf kf;
  kf.C = C;
  kf.Rv = Rv;
  kf.estimate = z0_mean;
  kf.P_pred = Rz0;
  kf.P_filt = Rz0;
  return kf;
}

inline SensorKf sensor_kf_step(const SensorKf& kf, const Vector& measurement, const Vector& u_prev,
                               const PlantModel& model) {
  if (measurement.size() != kf.C.rows()) throw ConfigError("sensor kf: measurement dimension mismatch");
  SensorKf next = kf;
  next.k = kf.k + 1;
  Vector prior;
  if (kf.k < 0) {
    prior = kf.estimate;
    next.P_pred = kf.P_pred;
  } else {
    prior = model.A * kf.estimate + model.B * u_prev;
    next.P_pred = symmetrize(model.A * kf.P_filt * model.A.transpose() + model.Rw);
  }
  next.innovation = measurement - kf.C * prior;
  next.innovation_cov = symmetrize(kf.C * next.P_pred * kf.C.transpose() + kf.Rv);
  Eigen::LDLT<Matrix> ldlt(next.innovation_cov);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-14)
    throw NumericalError("sensor kf: innovation covariance is numerically singular");
  next.gain = ldlt.solve(kf.C * next.P_pred).transpose();
  next.estimate = prior + next.gain * next.innovation;
  // Joseph form keeps the filtered covariance PSD under rounding.
  const Matrix I_KC = Matrix::Identity(prior.size(), prior.size()) - next.gain * kf.C;
  next.P_filt = symmetrize(I_KC * next.P_pred * I_KC.transpose() + next.gain * kf.Rv * next.gain.transpose());
  return next;
}

// Scalar two-step problem with x_0 ~ N(0, x0_var), w_k ~ N(0, noise_var) and
// the half-line rule delta_k = 1 iff x_k >= threshold, no exogenous traffic.
struct TwoStepProblem {
  double a = 1.0;
  double b = 1.0;
  double Q0 = 1.0;
  double Q1 = 1.0;
  double Q2 = 1.0;
  double threshold = 0.5;
  double x0_var = 1.0;
  double noise_var = 1.0;
  stats::QuadratureSpec quadrature{};

  void validate() const {
    if (!(Q2 > 0.0)) throw ConfigError("Q2 must be positive definite");
    if (!(Q0 >= 0.0) || !(Q1 >= 0.0)) throw ConfigError("Q0, Q1 must be nonnegative");
    if (!(x0_var > 0.0) || !(noise_var > 0.0)) throw ConfigError("variances must be positive");
  }
};

struct TwoStepPosterior {
  double x0_mean = 0.0;  // xhat_{0|0}
  double P00 = 0.0;      // Var[x_0 | I_0]
  std::optional<double> e1_mean;  // mean of the unknown part of x_1 given delta_1 = 0
  double P11 = 0.0;               // Var[x_1 | I_1]
  double prob_no_tx1 = 0.0;       // Pr(delta_1 = 0 | I_0)
};

// Exact conditional moments for branch (delta0, delta1). `x0` is the
// delivered x_0 on the delta0 = 1 branch and is ignored otherwise.
inline TwoStepPosterior two_step_posterior(const TwoStepProblem& p, double u0, bool delta0, bool delta1,
                                           double x0 = 0.0) {
  p.validate();
  TwoStepPosterior post;
  if (delta0) {
    post.x0_mean = x0;
    post.P00 = 0.0;
    const stats::TruncatedGaussian w{0.0, p.noise_var, p.threshold - p.a * x0 - p.b * u0};
    post.prob_no_tx1 = w.mass();
    if (!delta1) {
      const stats::Moments m = stats::truncated_moments(w);
      post.e1_mean = m.mean;
      post.P11 = m.variance;
    }
  } else {
    const stats::TruncatedGaussian x{0.0, p.x0_var, p.threshold};
    const stats::Moments mx = stats::truncated_moments(x);
    post.x0_mean = mx.mean;
    post.P00 = mx.variance;
    const double c = p.threshold - p.b * u0;
    if (!delta1) {
      const auto m = stats::conditional_moments_compound(p.a, x, p.noise_var, c, p.quadrature);
      post.e1_mean = m.mean;
      post.P11 = m.variance;
      post.prob_no_tx1 = m.probability;
    } else {
      post.prob_no_tx1 = stats::conditional_moments_compound(p.a, x, p.noise_var, c, p.quadrature).probability;
    }
  }
  return post;
}

}  // namespace ncsim
