#pragma once

#include "ncsim/control.hpp"
#include "ncsim/error.hpp"
#include "ncsim/estimation.hpp"
#include "ncsim/io.hpp"
#include "ncsim/linalg.hpp"
#include "ncsim/model.hpp"
#include "ncsim/network.hpp"
#include "ncsim/rng.hpp"
#include "ncsim/scenario.hpp"
#include "ncsim/scheduling.hpp"
#include "ncsim/sim.hpp"
#include "ncsim/stats.hpp"
#include "ncsim/trace.hpp"

namespace ncsim {
inline constexpr const char* kVersion = "0.1.0";
}
