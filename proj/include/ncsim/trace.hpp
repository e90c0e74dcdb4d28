#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ncsim/linalg.hpp"

namespace ncsim {

// One sampling step of one loop. Row k = N is the terminal sample: no
// scheduling, zero control, stage_cost = x_N' Q0 x_N.
struct TraceStep {
  std::size_t k = 0;
  std::size_t tick = 0;
  Vector x;
  Vector u;
  bool gamma = false;
  bool delta = false;
  std::size_t transmissions = 0;  // MAC transmissions used this step
  Vector xhat;                    // xhat_{k|k}
  Vector err;                     // x_k - xhat_{k|k}
  Vector pred_err;                // x_k - xhat_{k|tau_{k-1}}, the scheduler's innovation
  long tau = -1;
  double stage_cost = 0.0;
};

struct LoopTrace {
  std::size_t loop = 0;
  std::string group;
  std::size_t horizon = 0;
  std::vector<TraceStep> steps;  // k = 0..N
  double accumulated_cost = 0.0;  // running sum kept by the engine

  bool complete() const {
    if (steps.size() != horizon + 1) return false;
    for (std::size_t k = 0; k < steps.size(); ++k)
      if (steps[k].k != k) return false;
    return true;
  }

  std::size_t transmissions() const {
    std::size_t n = 0;
    for (std::size_t k = 0; k + 1 < steps.size(); ++k) n += steps[k].delta ? 1 : 0;
    return n;
  }
  std::size_t requests() const {
    std::size_t n = 0;
    for (std::size_t k = 0; k + 1 < steps.size(); ++k) n += steps[k].gamma ? 1 : 0;
    return n;
  }
};

}  // namespace ncsim
