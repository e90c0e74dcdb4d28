#pragma once

// Scenario files (YAML) and the built-in presets.
//
// Schema (unknown keys are rejected at every level):
//
//   seed: 7                      # default master seed
//   episodes: 1000               # default Monte Carlo episode count
//   horizon: 10                  # default N for every loop
//   weights: {Q0: 1, Q1: 1, Q2: 1, Lambda: 0}
//   crm: {persistence: [1, 0.75, 0.5], max_attempts: 3, slots_per_sample: 3,
//         window: tick}            # tick | period
//   sources:
//     - {type: bernoulli, rate: 0.1}
//     - {type: markov, p_on: 0.2, p_off: 0.5}
//   loops:
//     - group: T1
//       count: 6
//       plant: {A: 1, B: 1, Rw: 1, R0: 1, x0_mean: 0, period: 10,
//               offset: 0}       # optional, sampling ticks are offset + k·period
//       scheduler: {type: state_threshold, epsilon: 2.5}
//       horizon: 10              # optional, overrides the default
//       weights: {...}           # optional, overrides the default
//
// Matrices are a number (1x1) or a list of rows; vectors a number or a list.
// Scheduler types: always, state_threshold, innovation_threshold,
// half_line (threshold, direction: above|below).

#include <yaml-cpp/yaml.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ncsim/error.hpp"
#include "ncsim/linalg.hpp"
#include "ncsim/model.hpp"

namespace ncsim {

struct ScenarioFile {
  NetworkScenario scenario;
  std::size_t episodes = 1000;
  std::uint64_t seed = 1;

  friend bool operator==(const ScenarioFile&, const ScenarioFile&) = default;
};

class ScenarioError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

namespace detail {

inline std::string where(const YAML::Node& n) {
  const YAML::Mark m = n.Mark();
  if (m.line < 0) return "";
  return "line " + std::to_string(m.line + 1) + ", column " + std::to_string(m.column + 1) + ": ";
}

[[noreturn]] inline void fail(const YAML::Node& n, const std::string& msg) { throw ScenarioError(where(n) + msg); }

inline void check_keys(const YAML::Node& map, const std::set<std::string>& allowed, const std::string& ctx) {
  if (!map.IsMap()) fail(map, ctx + " must be a mapping");
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) fail(kv.first, "unknown key '" + key + "' in " + ctx);
  }
}

inline double as_double(const YAML::Node& n, const std::string& what) {
  if (!n.IsScalar()) fail(n, what + " must be a number");
  try {
    return n.as<double>();
  } catch (const YAML::Exception&) {
    fail(n, what + " must be a number");
  }
}

inline std::size_t as_count(const YAML::Node& n, const std::string& what) {
  if (!n.IsScalar()) fail(n, what + " must be a nonnegative integer");
  try {
    const auto v = n.as<long long>();
    if (v < 0) fail(n, what + " must be a nonnegative integer");
    return static_cast<std::size_t>(v);
  } catch (const YAML::Exception&) {
    fail(n, what + " must be a nonnegative integer");
  }
}

inline Matrix as_matrix(const YAML::Node& n, const std::string& what) {
  if (n.IsScalar()) return scalar_matrix(as_double(n, what));
  if (!n.IsSequence() || n.size() == 0) fail(n, what + " must be a number or a list of rows");
  const auto rows = static_cast<Eigen::Index>(n.size());
  Eigen::Index cols = -1;
  Matrix m;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const YAML::Node row = n[static_cast<std::size_t>(r)];
    if (!row.IsSequence() || row.size() == 0) fail(row, what + " rows must be nonempty lists");
    if (cols < 0) {
      cols = static_cast<Eigen::Index>(row.size());
      m.resize(rows, cols);
    } else if (static_cast<Eigen::Index>(row.size()) != cols) {
      fail(row, what + " rows must have equal length");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = as_double(row[static_cast<std::size_t>(c)], what);
  }
  return m;
}

inline Vector as_vector(const YAML::Node& n, const std::string& what) {
  if (n.IsScalar()) return scalar_vector(as_double(n, what));
  if (!n.IsSequence() || n.size() == 0) fail(n, what + " must be a number or a list");
  Vector v(static_cast<Eigen::Index>(n.size()));
  for (std::size_t i = 0; i < n.size(); ++i) v(static_cast<Eigen::Index>(i)) = as_double(n[i], what);
  return v;
}

inline CostWeights parse_weights(const YAML::Node& n, CostWeights w) {
  check_keys(n, {"Q0", "Q1", "Q2", "Lambda"}, "weights");
  if (n["Q0"]) w.Q0 = as_matrix(n["Q0"], "Q0");
  if (n["Q1"]) w.Q1 = as_matrix(n["Q1"], "Q1");
  if (n["Q2"]) w.Q2 = as_matrix(n["Q2"], "Q2");
  if (n["Lambda"]) w.network_penalty = as_double(n["Lambda"], "Lambda");
  return w;
}

inline PlantModel parse_plant(const YAML::Node& n) {
  check_keys(n, {"A", "B", "Rw", "R0", "x0_mean", "period", "offset"}, "plant");
  PlantModel p;
  if (!n["A"]) fail(n, "plant needs A");
  p.A = as_matrix(n["A"], "A");
  const auto dim = p.A.rows();
  p.B = n["B"] ? as_matrix(n["B"], "B") : Matrix(Matrix::Identity(dim, dim));
  p.Rw = n["Rw"] ? as_matrix(n["Rw"], "Rw") : Matrix(Matrix::Identity(dim, dim));
  p.R0 = n["R0"] ? as_matrix(n["R0"], "R0") : Matrix(Matrix::Identity(dim, dim));
  p.x0_mean = n["x0_mean"] ? as_vector(n["x0_mean"], "x0_mean") : Vector(Vector::Zero(dim));
  if (n["period"]) {
    p.period = as_count(n["period"], "period");
    if (p.period < 1) fail(n["period"], "period must be >= 1");
  }
  if (n["offset"]) {
    p.offset = as_count(n["offset"], "offset");
    if (p.offset >= p.period) fail(n["offset"], "offset must be < period");
  }
  return p;
}

inline SchedulerPolicy parse_scheduler(const YAML::Node& n) {
  if (!n.IsMap() || !n["type"]) fail(n, "scheduler needs a type");
  const auto type = n["type"].as<std::string>();
  if (type == "always") {
    check_keys(n, {"type"}, "scheduler");
    return AlwaysTransmit{};
  }
  if (type == "state_threshold" || type == "innovation_threshold") {
    check_keys(n, {"type", "epsilon"}, "scheduler");
    if (!n["epsilon"]) fail(n, type + " scheduler needs epsilon");
    const double eps = as_double(n["epsilon"], "epsilon");
    if (!(eps >= 0.0)) fail(n["epsilon"], "epsilon must be >= 0");
    if (type == "state_threshold") return StateThreshold{eps};
    return InnovationThreshold{eps};
  }
  if (type == "half_line") {
    check_keys(n, {"type", "threshold", "direction"}, "scheduler");
    HalfLineState h;
    if (n["threshold"]) h.threshold = as_double(n["threshold"], "threshold");
    if (n["direction"]) {
      const auto d = n["direction"].as<std::string>();
      if (d == "above") h.direction = HalfLineDirection::kAtOrAbove;
      else if (d == "below") h.direction = HalfLineDirection::kAtOrBelow;
      else fail(n["direction"], "direction must be 'above' or 'below'");
    }
    return h;
  }
  fail(n["type"], "unknown scheduler type '" + type + "'");
}

inline CrmConfig parse_crm(const YAML::Node& n) {
  check_keys(n, {"persistence", "max_attempts", "slots_per_sample", "window"}, "crm");
  CrmConfig c;
  if (n["persistence"]) {
    const auto& p = n["persistence"];
    if (!p.IsSequence()) fail(p, "persistence must be a list");
    c.persistence.clear();
    for (const auto& v : p) c.persistence.push_back(as_double(v, "persistence"));
  }
  c.max_attempts = n["max_attempts"] ? as_count(n["max_attempts"], "max_attempts") : c.persistence.size();
  c.slots_per_sample = n["slots_per_sample"] ? as_count(n["slots_per_sample"], "slots_per_sample") : c.max_attempts;
  if (n["window"]) {
    const auto w = n["window"].as<std::string>();
    if (w == "tick") c.window = ContentionWindow::kWithinTick;
    else if (w == "period") c.window = ContentionWindow::kSamplingPeriod;
    else fail(n["window"], "window must be 'tick' or 'period'");
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    fail(n, e.what());
  }
  return c;
}

inline TrafficSource parse_source(const YAML::Node& n) {
  if (!n.IsMap() || !n["type"]) fail(n, "source needs a type");
  const auto type = n["type"].as<std::string>();
  TrafficSource s;
  if (type == "bernoulli") {
    check_keys(n, {"type", "rate"}, "source");
    s.model = BernoulliIid{n["rate"] ? as_double(n["rate"], "rate") : 0.0};
  } else if (type == "markov") {
    check_keys(n, {"type", "p_on", "p_off"}, "source");
    if (!n["p_on"] || !n["p_off"]) fail(n, "markov source needs p_on and p_off");
    s.model = MarkovOnOff{as_double(n["p_on"], "p_on"), as_double(n["p_off"], "p_off")};
  } else {
    fail(n["type"], "unknown source type '" + type + "'");
  }
  try {
    s.validate();
  } catch (const ConfigError& e) {
    fail(n, e.what());
  }
  return s;
}

}  // namespace detail

inline ScenarioFile parse_scenario_yaml(const std::string& text) {
  using namespace detail;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ScenarioError("line " + std::to_string(e.mark.line + 1) + ", column " + std::to_string(e.mark.column + 1) +
                        ": " + e.msg);
  }
  if (!root || root.IsNull()) throw ScenarioError("line 1, column 1: scenario file is empty");
  check_keys(root, {"seed", "episodes", "horizon", "weights", "crm", "sources", "loops"}, "scenario");

  ScenarioFile f;
  if (root["seed"]) {
    try {
      f.seed = root["seed"].as<std::uint64_t>();
    } catch (const YAML::Exception&) {
      fail(root["seed"], "seed must be a nonnegative integer");
    }
  }
  if (root["episodes"]) {
    f.episodes = as_count(root["episodes"], "episodes");
    if (f.episodes < 1) fail(root["episodes"], "episodes must be >= 1");
  }
  std::size_t default_horizon = 10;
  if (root["horizon"]) default_horizon = as_count(root["horizon"], "horizon");
  CostWeights default_weights;
  if (root["weights"]) default_weights = parse_weights(root["weights"], default_weights);
  if (root["crm"]) f.scenario.crm = parse_crm(root["crm"]);
  if (root["sources"]) {
    if (!root["sources"].IsSequence()) fail(root["sources"], "sources must be a list");
    for (const auto& s : root["sources"]) f.scenario.sources.push_back(parse_source(s));
  }
  if (!root["loops"] || !root["loops"].IsSequence() || root["loops"].size() == 0)
    fail(root, "scenario needs a nonempty 'loops' list");

  for (const auto& n : root["loops"]) {
    check_keys(n, {"group", "count", "plant", "scheduler", "horizon", "weights"}, "loop");
    LoopConfig loop;
    loop.group = n["group"] ? n["group"].as<std::string>() : "loop";
    if (!n["plant"]) fail(n, "loop needs a plant block");
    loop.plant = parse_plant(n["plant"]);
    loop.scheduler = n["scheduler"] ? parse_scheduler(n["scheduler"]) : SchedulerPolicy{AlwaysTransmit{}};
    loop.horizon = n["horizon"] ? as_count(n["horizon"], "horizon") : default_horizon;
    loop.weights = n["weights"] ? parse_weights(n["weights"], default_weights) : default_weights;
    const std::size_t count = n["count"] ? as_count(n["count"], "count") : 1;
    if (count < 1) fail(n["count"], "count must be >= 1");
    try {
      loop.validate();
    } catch (const ConfigError& e) {
      fail(n, e.what());
    }
    for (std::size_t i = 0; i < count; ++i) f.scenario.loops.push_back(loop);
  }
  f.scenario.validate();
  return f;
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline void emit_matrix(YAML::Emitter& out, const Matrix& m) {
  if (m.rows() == 1 && m.cols() == 1) {
    out << YAML::Value << format_double(m(0, 0));
    return;
  }
  out << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    out << YAML::BeginSeq;
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << format_double(m(r, c));
    out << YAML::EndSeq;
  }
  out << YAML::EndSeq;
}

inline void emit_vector(YAML::Emitter& out, const Vector& v) {
  if (v.size() == 1) {
    out << YAML::Value << format_double(v(0));
    return;
  }
  out << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (Eigen::Index i = 0; i < v.size(); ++i) out << format_double(v(i));
  out << YAML::EndSeq;
}

inline void emit_weights(YAML::Emitter& out, const CostWeights& w) {
  out << YAML::BeginMap;
  out << YAML::Key << "Q0";
  emit_matrix(out, w.Q0);
  out << YAML::Key << "Q1";
  emit_matrix(out, w.Q1);
  out << YAML::Key << "Q2";
  emit_matrix(out, w.Q2);
  out << YAML::Key << "Lambda" << YAML::Value << format_double(w.network_penalty);
  out << YAML::EndMap;
}

inline void emit_scheduler(YAML::Emitter& out, const SchedulerPolicy& p) {
  out << YAML::Flow << YAML::BeginMap;
  if (std::holds_alternative<AlwaysTransmit>(p)) {
    out << YAML::Key << "type" << YAML::Value << "always";
  } else if (auto* s = std::get_if<StateThreshold>(&p)) {
    out << YAML::Key << "type" << YAML::Value << "state_threshold";
    out << YAML::Key << "epsilon" << YAML::Value << format_double(s->epsilon);
  } else if (auto* s = std::get_if<InnovationThreshold>(&p)) {
    out << YAML::Key << "type" << YAML::Value << "innovation_threshold";
    out << YAML::Key << "epsilon" << YAML::Value << format_double(s->epsilon);
  } else if (auto* s = std::get_if<HalfLineState>(&p)) {
    out << YAML::Key << "type" << YAML::Value << "half_line";
    out << YAML::Key << "threshold" << YAML::Value << format_double(s->threshold);
    out << YAML::Key << "direction" << YAML::Value
        << (s->direction == HalfLineDirection::kAtOrAbove ? "above" : "below");
  } else {
    throw ConfigError("custom schedulers cannot be written to a scenario file");
  }
  out << YAML::EndMap;
}

}  // namespace detail

// Canonical YAML for a scenario; consecutive identical loops collapse into
// one block with a count.
inline std::string emit_scenario(const ScenarioFile& f) {
  using namespace detail;
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "seed" << YAML::Value << f.seed;
  out << YAML::Key << "episodes" << YAML::Value << f.episodes;
  out << YAML::Key << "crm" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "persistence" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (double p : f.scenario.crm.persistence) out << format_double(p);
  out << YAML::EndSeq;
  out << YAML::Key << "max_attempts" << YAML::Value << f.scenario.crm.max_attempts;
  out << YAML::Key << "slots_per_sample" << YAML::Value << f.scenario.crm.slots_per_sample;
  out << YAML::Key << "window" << YAML::Value << to_string(f.scenario.crm.window);
  out << YAML::EndMap;
  if (!f.scenario.sources.empty()) {
    out << YAML::Key << "sources" << YAML::Value << YAML::BeginSeq;
    for (const auto& s : f.scenario.sources) {
      out << YAML::Flow << YAML::BeginMap;
      if (auto* b = std::get_if<BernoulliIid>(&s.model)) {
        out << YAML::Key << "type" << YAML::Value << "bernoulli";
        out << YAML::Key << "rate" << YAML::Value << format_double(b->rate);
      } else {
        const auto& m = std::get<MarkovOnOff>(s.model);
        out << YAML::Key << "type" << YAML::Value << "markov";
        out << YAML::Key << "p_on" << YAML::Value << format_double(m.p_on);
        out << YAML::Key << "p_off" << YAML::Value << format_double(m.p_off);
      }
      out << YAML::EndMap;
    }
    out << YAML::EndSeq;
  }
  out << YAML::Key << "loops" << YAML::Value << YAML::BeginSeq;
  const auto& loops = f.scenario.loops;
  for (std::size_t i = 0; i < loops.size();) {
    std::size_t j = i + 1;
    while (j < loops.size() && loops[j] == loops[i]) ++j;
    const auto& l = loops[i];
    out << YAML::BeginMap;
    out << YAML::Key << "group" << YAML::Value << l.group;
    out << YAML::Key << "count" << YAML::Value << (j - i);
    out << YAML::Key << "plant" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "A";
    emit_matrix(out, l.plant.A);
    out << YAML::Key << "B";
    emit_matrix(out, l.plant.B);
    out << YAML::Key << "Rw";
    emit_matrix(out, l.plant.Rw);
    out << YAML::Key << "R0";
    emit_matrix(out, l.plant.R0);
    out << YAML::Key << "x0_mean";
    emit_vector(out, l.plant.x0_mean);
    out << YAML::Key << "period" << YAML::Value << l.plant.period;
    out << YAML::Key << "offset" << YAML::Value << l.plant.offset;
    out << YAML::EndMap;
    out << YAML::Key << "scheduler" << YAML::Value;
    emit_scheduler(out, l.scheduler);
    out << YAML::Key << "horizon" << YAML::Value << l.horizon;
    out << YAML::Key << "weights" << YAML::Value;
    emit_weights(out, l.weights);
    out << YAML::EndMap;
    i = j;
  }
  out << YAML::EndSeq;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

// 64-bit FNV-1a of the canonical YAML.
inline std::uint64_t scenario_hash(const ScenarioFile& f) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : emit_scenario(f)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---- presets ---------------------------------------------------------------

namespace detail {

inline LoopConfig scalar_loop(std::string group, double a, double rw, std::size_t period, SchedulerPolicy sched) {
  LoopConfig l;
  l.group = std::move(group);
  l.plant.A = scalar_matrix(a);
  l.plant.B = scalar_matrix(1.0);
  l.plant.Rw = scalar_matrix(rw);
  l.plant.R0 = scalar_matrix(1.0);
  l.plant.x0_mean = scalar_vector(0.0);
  l.plant.period = period;
  l.scheduler = std::move(sched);
  l.horizon = 10;
  return l;
}

// Spread the loops' sampling instants evenly over the network:
// offset_j = floor(j · period_j / M) mod period_j. Packets contend until the
// loop's next sampling tick, one slot per tick.
inline void stagger(NetworkScenario& sc) {
  const std::size_t M = sc.loops.size();
  for (std::size_t j = 0; j < M; ++j) {
    auto& p = sc.loops[j].plant;
    p.offset = (j * p.period / M) % p.period;
  }
  sc.crm.window = ContentionWindow::kSamplingPeriod;
}

}  // namespace detail

// Heterogeneous network: 20 scalar loops of three types sharing a
// p-persistent channel, state-threshold scheduling at 2.5 (or always-send
// for the baseline). No exogenous sources.
inline ScenarioFile preset_example1(bool baseline = false) {
  ScenarioFile f;
  f.seed = 7;
  const SchedulerPolicy sched = baseline ? SchedulerPolicy{AlwaysTransmit{}} : SchedulerPolicy{StateThreshold{2.5}};
  for (int j = 0; j < 6; ++j) f.scenario.loops.push_back(detail::scalar_loop("T1", 1.0, 1.0, 10, sched));
  for (int j = 0; j < 7; ++j) f.scenario.loops.push_back(detail::scalar_loop("T2", 0.75, 1.5, 20, sched));
  for (int j = 0; j < 7; ++j) f.scenario.loops.push_back(detail::scalar_loop("T3", 0.5, 2.0, 25, sched));
  detail::stagger(f.scenario);
  return f;
}

// Homogeneous network: 20 integrators (a = 1, Rw = 1, period 10) with the
// innovation scheduler at 3.5.
inline ScenarioFile preset_example3(double epsilon = 3.5) {
  ScenarioFile f;
  f.seed = 7;
  for (int j = 0; j < 20; ++j)
    f.scenario.loops.push_back(detail::scalar_loop("DP", 1.0, 1.0, 10, InnovationThreshold{epsilon}));
  detail::stagger(f.scenario);
  return f;
}

inline std::vector<std::string> preset_names() { return {"example1", "example1-baseline", "example3"}; }

inline std::optional<ScenarioFile> find_preset(const std::string& name) {
  if (name == "example1") return preset_example1(false);
  if (name == "example1-baseline") return preset_example1(true);
  if (name == "example3") return preset_example3();
  return std::nullopt;
}

// Preset name or path to a YAML file.
inline ScenarioFile parse_scenario(const std::string& path_or_preset) {
  if (auto p = find_preset(path_or_preset)) return *p;
  std::ifstream in(path_or_preset);
  if (!in) throw ScenarioError("cannot read scenario file '" + path_or_preset + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_scenario_yaml(ss.str());
  } catch (const ScenarioError& e) {
    throw ScenarioError(path_or_preset + ": " + e.what());
  }
}

}  // namespace ncsim
