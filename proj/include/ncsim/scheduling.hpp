#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <type_traits>
#include <variant>

#include "ncsim/error.hpp"
#include "ncsim/linalg.hpp"

namespace ncsim {

// Send every sample.
struct AlwaysTransmit {};

// gamma = 1 iff |x_k|^2 > epsilon. Depends on past controls through x_k.
struct StateThreshold {
  double epsilon = 0.0;
};

// gamma = 1 iff |x_k - xhat_{k|tau_{k-1}}|^2 > epsilon. The innovation equals
// A·err_{k-1|k-1} + w_{k-1}, which carries no control term.
struct InnovationThreshold {
  double epsilon = 0.0;
};

enum class HalfLineDirection { kAtOrAbove, kAtOrBelow };

// Scalar rule gamma = 1 iff x_k >= c (or x_k <= c for kAtOrBelow).
struct HalfLineState {
  double threshold = 0.5;
  HalfLineDirection direction = HalfLineDirection::kAtOrAbove;
};

// User-supplied map of the innovation. The caller promises map(r) == map(-r);
// the policy is then treated as symmetric and control-free.
struct CustomSymmetric {
  std::string name = "custom";
  std::shared_ptr<const std::function<bool(const Vector&)>> map;
};

using SchedulerPolicy =
    std::variant<AlwaysTransmit, StateThreshold, InnovationThreshold, HalfLineState, CustomSymmetric>;

enum class InformationPattern { kUsesControls, kControlFree };

struct SchedulerInput {
  Vector state;       // x_k
  Vector prediction;  // xhat_{k|tau_{k-1}}
  long k = 0;
  long tau_prev = -1;  // tau_{k-1}
};

inline std::string policy_name(const SchedulerPolicy& p) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, AlwaysTransmit>) return "always";
        else if constexpr (std::is_same_v<T, StateThreshold>) return "state_threshold";
        else if constexpr (std::is_same_v<T, InnovationThreshold>) return "innovation_threshold";
        else if constexpr (std::is_same_v<T, HalfLineState>) return "half_line";
        else return v.name;
      },
      p);
}

inline InformationPattern information_pattern(const SchedulerPolicy& p) {
  if (std::holds_alternative<StateThreshold>(p) || std::holds_alternative<HalfLineState>(p))
    return InformationPattern::kUsesControls;
  return InformationPattern::kControlFree;
}

inline bool is_symmetric_control_free(const SchedulerPolicy& p) {
  return information_pattern(p) == InformationPattern::kControlFree;
}

inline void validate(const SchedulerPolicy& p) {
  std::visit(
      [](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, StateThreshold> || std::is_same_v<T, InnovationThreshold>) {
          if (!(v.epsilon >= 0.0)) throw ConfigError("scheduler threshold epsilon must be >= 0");
        } else if constexpr (std::is_same_v<T, HalfLineState>) {
          if (!std::isfinite(v.threshold)) throw ConfigError("half-line threshold must be finite");
        } else if constexpr (std::is_same_v<T, CustomSymmetric>) {
          if (!v.map || !*v.map) throw ConfigError("custom scheduler has no map");
        }
      },
      p);
}

// Threshold of the threshold-type policies, if any.
inline std::optional<double> policy_epsilon(const SchedulerPolicy& p) {
  if (auto* s = std::get_if<StateThreshold>(&p)) return s->epsilon;
  if (auto* s = std::get_if<InnovationThreshold>(&p)) return s->epsilon;
  return std::nullopt;
}

inline SchedulerPolicy with_epsilon(SchedulerPolicy p, double epsilon) {
  if (auto* s = std::get_if<StateThreshold>(&p)) s->epsilon = epsilon;
  if (auto* s = std::get_if<InnovationThreshold>(&p)) s->epsilon = epsilon;
  return p;
}

inline bool decide(const SchedulerPolicy& policy, const SchedulerInput& in) {
  return std::visit(
      [&](const auto& v) -> bool {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, AlwaysTransmit>) {
          return true;
        } else if constexpr (std::is_same_v<T, StateThreshold>) {
          return in.state.squaredNorm() > v.epsilon;
        } else if constexpr (std::is_same_v<T, InnovationThreshold>) {
          if (in.prediction.size() != in.state.size())
            throw ConfigError("scheduler input: prediction and state dimensions differ");
          return (in.state - in.prediction).squaredNorm() > v.epsilon;
        } else if constexpr (std::is_same_v<T, HalfLineState>) {
          if (in.state.size() != 1) throw ConfigError("half-line scheduler requires a scalar state");
          return v.direction == HalfLineDirection::kAtOrAbove ? in.state(0) >= v.threshold
                                                              : in.state(0) <= v.threshold;
        } else {
          if (in.prediction.size() != in.state.size())
            throw ConfigError("scheduler input: prediction and state dimensions differ");
          return (*v.map)(in.state - in.prediction);
        }
      },
      policy);
}

}  // namespace ncsim
