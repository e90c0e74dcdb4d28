#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ncsim/error.hpp"
#include "ncsim/linalg.hpp"
#include "ncsim/network.hpp"
#include "ncsim/rng.hpp"
#include "ncsim/scheduling.hpp"

namespace ncsim {

// x_{k+1} = A x_k + B u_k + w_k, w_k ~ N(0, Rw), x_0 ~ N(x0_mean, R0).
// `period` is the sampling period in global ticks; the loop samples at ticks
// offset + k·period.
struct PlantModel {
  Matrix A = scalar_matrix(1.0);
  Matrix B = scalar_matrix(1.0);
  Matrix Rw = scalar_matrix(1.0);
  Matrix R0 = scalar_matrix(1.0);
  Vector x0_mean = Vector::Zero(1);
  std::size_t period = 1;
  std::size_t offset = 0;

  Eigen::Index state_dim() const { return A.rows(); }
  Eigen::Index input_dim() const { return B.cols(); }

  void validate() const {
    const auto n = A.rows();
    if (n == 0 || !is_square(A)) throw ConfigError("plant: A must be square and nonempty, got " + shape_str(A));
    if (B.rows() != n || B.cols() == 0)
      throw ConfigError("plant: B must have " + std::to_string(n) + " rows, got " + shape_str(B));
    if (Rw.rows() != n || Rw.cols() != n) throw ConfigError("plant: Rw must be " + shape_str(A));
    if (R0.rows() != n || R0.cols() != n) throw ConfigError("plant: R0 must be " + shape_str(A));
    if (x0_mean.size() != n) throw ConfigError("plant: x0_mean must have length " + std::to_string(n));
    if (!is_psd(Rw)) throw ConfigError("plant: Rw must be symmetric positive semi-definite");
    if (!is_psd(R0)) throw ConfigError("plant: R0 must be symmetric positive semi-definite");
    if (period < 1) throw ConfigError("plant: period must be >= 1");
    if (offset >= period) throw ConfigError("plant: offset must be < period");
  }
};

inline bool operator==(const PlantModel& a, const PlantModel& b) {
  auto same = [](const auto& x, const auto& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
  };
  return same(a.A, b.A) && same(a.B, b.B) && same(a.Rw, b.Rw) && same(a.R0, b.R0) &&
         same(a.x0_mean, b.x0_mean) && a.period == b.period &&
         a.offset == b.offset;
}

struct CostWeights {
  Matrix Q0 = scalar_matrix(1.0);
  Matrix Q1 = scalar_matrix(1.0);
  Matrix Q2 = scalar_matrix(1.0);
  double network_penalty = 0.0;  // Λ, charged per successful transmission
};

inline bool operator==(const CostWeights& a, const CostWeights& b) {
  auto same = [](const Matrix& x, const Matrix& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
  };
  return same(a.Q0, b.Q0) && same(a.Q1, b.Q1) && same(a.Q2, b.Q2) &&
         a.network_penalty == b.network_penalty;
}

struct LoopConfig {
  std::string group = "loop";  // plant type label used for per-type averages
  PlantModel plant;
  SchedulerPolicy scheduler = AlwaysTransmit{};
  std::size_t horizon = 10;  // N, in this loop's sampling steps
  CostWeights weights;

  void validate() const {
    plant.validate();
    ncsim::validate(scheduler);
    if (horizon < 1) throw ConfigError("loop: horizon must be >= 1");
    const auto n = plant.state_dim(), m = plant.input_dim();
    if (weights.Q0.rows() != n || weights.Q0.cols() != n) throw ConfigError("loop: Q0 must be n x n");
    if (weights.Q1.rows() != n || weights.Q1.cols() != n) throw ConfigError("loop: Q1 must be n x n");
    if (weights.Q2.rows() != m || weights.Q2.cols() != m) throw ConfigError("loop: Q2 must be m x m");
    if (!is_psd(weights.Q0)) throw ConfigError("Q0 must be positive semi-definite");
    if (!is_psd(weights.Q1)) throw ConfigError("Q1 must be positive semi-definite");
    if (!is_pd(weights.Q2)) throw ConfigError("Q2 must be positive definite");
    if (!(weights.network_penalty >= 0.0)) throw ConfigError("network penalty must be >= 0");
    if (std::holds_alternative<HalfLineState>(scheduler) && n != 1)
      throw ConfigError("half-line scheduler requires a scalar state");
  }
};

inline bool scheduler_equal(const SchedulerPolicy& a, const SchedulerPolicy& b) {
  if (a.index() != b.index()) return false;
  if (auto* x = std::get_if<StateThreshold>(&a)) return x->epsilon == std::get<StateThreshold>(b).epsilon;
  if (auto* x = std::get_if<InnovationThreshold>(&a))
    return x->epsilon == std::get<InnovationThreshold>(b).epsilon;
  if (auto* x = std::get_if<HalfLineState>(&a)) {
    const auto& y = std::get<HalfLineState>(b);
    return x->threshold == y.threshold && x->direction == y.direction;
  }
  if (auto* x = std::get_if<CustomSymmetric>(&a)) return x->map == std::get<CustomSymmetric>(b).map;
  return true;
}

inline bool operator==(const LoopConfig& a, const LoopConfig& b) {
  return a.group == b.group && a.plant == b.plant && scheduler_equal(a.scheduler, b.scheduler) &&
         a.horizon == b.horizon && a.weights == b.weights;
}

struct NetworkScenario {
  std::vector<LoopConfig> loops;
  std::vector<TrafficSource> sources;
  CrmConfig crm;

  // Last tick any loop still acts on: loop j ends at offset_j + horizon_j · period_j.
  std::size_t global_horizon() const {
    std::size_t h = 0;
    for (const auto& l : loops) h = std::max(h, l.plant.offset + l.horizon * l.plant.period);
    return h;
  }

  void validate() const {
    if (loops.empty()) throw ConfigError("scenario: at least one loop is required");
    for (std::size_t i = 0; i < loops.size(); ++i) {
      try {
        loops[i].validate();
      } catch (const ConfigError& e) {
        throw ConfigError("loop " + std::to_string(i) + ": " + e.what());
      }
    }
    for (const auto& s : sources) s.validate();
    crm.validate();
  }

  friend bool operator==(const NetworkScenario& a, const NetworkScenario& b) {
    return a.loops == b.loops && a.sources == b.sources && a.crm == b.crm;
  }
};

inline Vector plant_step(const PlantModel& model, const Vector& x, const Vector& u, const Vector& w) {
  if (x.size() != model.state_dim() || w.size() != model.state_dim() || u.size() != model.input_dim())
    throw ConfigError("plant_step: dimension mismatch");
  return model.A * x + model.B * u + w;
}

// x̄_k = x_k − Σ_{l=1..k} A^{l−1} B u_{k−l}: the state with every applied
// control contribution removed. `controls` holds u_0 .. u_{k-1}.
inline Vector uncontrolled_state(std::span<const Vector> controls, const Vector& x_k,
                                 const PlantModel& model) {
  if (x_k.size() != model.state_dim()) throw ConfigError("uncontrolled_state: dimension mismatch");
  Vector acc = Vector::Zero(model.state_dim());
  Matrix power = Matrix::Identity(model.state_dim(), model.state_dim());
  for (std::size_t l = 1; l <= controls.size(); ++l) {
    const Vector& u = controls[controls.size() - l];
    if (u.size() != model.input_dim()) throw ConfigError("uncontrolled_state: dimension mismatch");
    acc += power * model.B * u;
    power = power * model.A;
  }
  return x_k - acc;
}

// One draw of N(0, covariance).
inline Vector sample_noise(RngStream& stream, const Matrix& covariance) {
  const Matrix root = psd_sqrt(covariance);
  Vector z(covariance.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = stream.normal();
  return root * z;
}

// Same as sample_noise with a precomputed square root; the engine uses this
// so each step costs one matrix-vector product.
inline Vector sample_with_root(RngStream& stream, const Matrix& root) {
  Vector z(root.cols());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = stream.normal();
  return root * z;
}

}  // namespace ncsim
