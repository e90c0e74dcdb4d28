// ncsim: command-line runner for scenario simulations, threshold sweeps and
// the two-step dual-effect computations. Every subcommand writes CSV files
// plus a manifest.json into the output directory.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ncsim/ncsim.hpp"

namespace fs = std::filesystem;
using namespace ncsim;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitNumerical = 4;
constexpr int kExitIo = 1;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string default_out_dir() {
  if (const char* env = std::getenv("NCSIM_OUT_DIR"); env && *env) return env;
  return "ncsim_out";
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

class Output {
 public:
  explicit Output(std::string dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory '" + dir_ + "': " + ec.message());
  }

  std::ofstream open(const std::string& name) {
    const auto path = (fs::path(dir_) / name).string();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write '" + path + "'");
    files_.push_back(path);
    return os;
  }

  void manifest(const std::string& command, nlohmann::ordered_json extra) {
    nlohmann::ordered_json m;
    m["command"] = command;
    m["tool_version"] = kVersion;
    m["timestamp"] = utc_timestamp();
    for (auto& [k, v] : extra.items()) m[k] = v;
    m["outputs"] = files_;
    const auto path = (fs::path(dir_) / "manifest.json").string();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write '" + path + "'");
    os << m.dump(2) << "\n";
  }

 private:
  std::string dir_;
  std::vector<std::string> files_;
};

std::vector<double> parse_grid(const std::string& spec) {
  double lo = 0, hi = 0, step = 0;
  char c1 = 0, c2 = 0;
  std::istringstream is(spec);
  if (!(is >> lo >> c1 >> hi >> c2 >> step) || c1 != ':' || c2 != ':' || !is.eof())
    throw CLI::ValidationError("--eps-grid", "expected lo:hi:step, got '" + spec + "'");
  if (!(step > 0.0) || hi < lo) throw CLI::ValidationError("--eps-grid", "need step > 0 and hi >= lo");
  std::vector<double> grid;
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
  for (std::size_t i = 0; i <= n; ++i) grid.push_back(lo + static_cast<double>(i) * step);
  return grid;
}

nlohmann::ordered_json scenario_info(const std::string& name, const ScenarioFile& f, std::uint64_t seed,
                                     std::size_t episodes) {
  nlohmann::ordered_json j;
  j["scenario"] = name;
  j["scenario_hash"] = hex64(scenario_hash(f));
  j["seed"] = seed;
  j["episodes"] = episodes;
  return j;
}

struct CommonOpts {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> episodes;
  std::string out = default_out_dir();
};

void add_common(CLI::App* cmd, CommonOpts& o, bool need_scenario) {
  auto* s = cmd->add_option("--scenario", o.scenario, "scenario YAML file or preset (" + [] {
    std::string names;
    for (const auto& n : preset_names()) names += (names.empty() ? "" : ", ") + n;
    return names;
  }() + ")");
  if (need_scenario) s->required();
  cmd->add_option("--seed", o.seed, "master seed (default: the scenario's)");
  cmd->add_option("--episodes", o.episodes, "Monte Carlo episodes (default: the scenario's)")->check(CLI::PositiveNumber);
  cmd->add_option("--out", o.out, "output directory (env NCSIM_OUT_DIR)");
}

int cmd_simulate(const CommonOpts& o, bool traces, bool slot_log) {
  const ScenarioFile f = parse_scenario(o.scenario);
  const std::uint64_t seed = o.seed.value_or(f.seed);
  const std::size_t episodes = o.episodes.value_or(f.episodes);
  Output out(o.out);

  SimOptions opts;
  opts.record_slot_events = slot_log;
  const Engine engine(f.scenario, opts);
  if (traces || slot_log) {
    std::ofstream tr, sl;
    if (traces) {
      tr = out.open("traces.csv");
      io::write_trace_header(tr);
    }
    if (slot_log) sl = out.open("slots.csv");
    for (std::size_t e = 0; e < episodes; ++e) {
      const auto ep = engine.run(seed, e);
      if (traces) io::write_trace_rows(tr, e, ep.loops);
      if (slot_log) io::write_slot_log(sl, e, ep.slot_log, e == 0);
    }
  }
  const MonteCarloReport rep = monte_carlo(f.scenario, seed, episodes, opts);
  {
    auto os = out.open("summary.csv");
    io::write_summary(os, rep);
  }
  {
    auto os = out.open("groups.csv");
    io::write_group_summary(os, rep);
  }
  for (const auto& g : rep.groups)
    std::printf("%-8s loops=%zu J=%.4f (se %.4f) tx=%.3f\n", g.group.c_str(), g.loops, g.cost,
                g.cost_se.value_or(0.0), g.transmissions);
  std::printf("all      J=%.4f (se %.4f) delivery=%.3f collision=%.3f\n", rep.cost, rep.cost_se.value_or(0.0),
              rep.network.delivery_rate(), rep.network.collision_rate());
  out.manifest("simulate", scenario_info(o.scenario, f, seed, episodes));
  return 0;
}

int cmd_sweep(const CommonOpts& o, const std::string& grid_spec) {
  const ScenarioFile f = parse_scenario(o.scenario);
  const std::uint64_t seed = o.seed.value_or(f.seed);
  const std::size_t episodes = o.episodes.value_or(f.episodes);
  const auto grid = parse_grid(grid_spec);
  for (const auto& l : f.scenario.loops)
    if (!policy_epsilon(l.scheduler))
      throw ConfigError("sweep: every loop needs a threshold scheduler (loop group '" + l.group + "')");
  const SweepResult sw = sweep_threshold(f.scenario, grid, seed, episodes);
  Output out(o.out);
  {
    auto os = out.open("sweep.csv");
    io::write_sweep(os, sw);
  }
  for (const auto& r : sw.rows)
    std::printf("eps=%-6g J=%.4f (se %.4f) bound=%.3f\n", r.epsilon, r.cost, r.cost_se, r.estimate_bound_probability);
  std::printf("argmin eps=%g\n", sw.rows[sw.argmin()].epsilon);
  auto info = scenario_info(o.scenario, f, seed, episodes);
  info["eps_grid"] = grid_spec;
  out.manifest("sweep", info);
  return 0;
}

int cmd_two_step(const TwoStepProblem& p, const std::string& branch, double x0, const std::string& out_dir) {
  bool delta0 = true;
  if (branch == "delta0=1") delta0 = true;
  else if (branch == "delta0=0") delta0 = false;
  else throw CLI::ValidationError("--branch", "expected delta0=1 or delta0=0");
  const TwoStepU0 r = two_step_u0_optimal(p, delta0, x0);
  const double S1 = two_step_S1(p);
  Output out(out_dir);
  {
    auto os = out.open("two_step.csv");
    io::CsvWriter w(os);
    w.row({"branch", "x0", "xhat00", "S1", "ce_u0", "optimal_u0", "residual_at_ce"});
    w.row({branch, io::num(delta0 ? x0 : r.xhat00), io::num(r.xhat00), io::num(S1), io::num(r.ce + 0.0),
           io::num(r.optimal), io::num(r.residual_at_ce)});
  }
  std::printf("ce_u0=%.10g\noptimal_u0=%.10g\nresidual_at_ce=%.10g\n", r.ce + 0.0, r.optimal, r.residual_at_ce);
  nlohmann::ordered_json info;
  info["branch"] = branch;
  info["x0"] = x0;
  info["a"] = p.a;
  info["b"] = p.b;
  out.manifest("two-step", info);
  return 0;
}

int cmd_riccati(const CommonOpts& o, std::size_t loop, double a, double b, std::size_t horizon) {
  RiccatiSolution ric;
  nlohmann::ordered_json info;
  if (!o.scenario.empty()) {
    const ScenarioFile f = parse_scenario(o.scenario);
    if (loop >= f.scenario.loops.size())
      throw ConfigError("riccati: scenario has " + std::to_string(f.scenario.loops.size()) + " loops");
    ric = riccati_backward(f.scenario.loops[loop]);
    info = scenario_info(o.scenario, f, f.seed, 0);
    info["loop"] = loop;
  } else {
    const Matrix one = scalar_matrix(1.0);
    ric = riccati_backward(scalar_matrix(a), scalar_matrix(b), one, one, one, horizon);
    info["a"] = a;
    info["b"] = b;
    info["horizon"] = horizon;
  }
  Output out(o.out);
  {
    auto os = out.open("riccati.csv");
    io::write_riccati(os, ric);
  }
  io::write_riccati(std::cout, ric);
  out.manifest("riccati", info);
  return 0;
}

int cmd_moments(double mean, double var, double upper, const std::string& out_dir) {
  const stats::TruncatedGaussian tg{mean, var, upper};
  stats::validate(tg);
  const auto m = stats::truncated_moments(tg);
  Output out(out_dir);
  {
    auto os = out.open("moments.csv");
    io::CsvWriter w(os);
    w.row({"mean", "variance", "upper", "mass", "truncated_mean", "truncated_variance"});
    w.row({io::num(mean), io::num(var), io::num(upper), io::num(tg.mass()), io::num(m.mean), io::num(m.variance)});
  }
  std::printf("mass=%.12g\nmean=%.12g\nvariance=%.12g\n", tg.mass(), m.mean, m.variance);
  nlohmann::ordered_json info;
  info["mean"] = mean;
  info["variance"] = var;
  info["upper"] = upper;
  out.manifest("moments", info);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Networked control simulation: state-based scheduling over a contention MAC"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  CommonOpts sim_o, sweep_o, ric_o;
  bool traces = false, slot_log = false;
  auto* sim = app.add_subcommand("simulate", "Monte Carlo run of a scenario");
  add_common(sim, sim_o, true);
  sim->add_flag("--traces", traces, "write per-step traces (traces.csv)");
  sim->add_flag("--slot-log", slot_log, "write per-slot MAC events (slots.csv)");

  std::string grid = "0.5:8:0.5";
  auto* sweep = app.add_subcommand("sweep", "cost versus scheduler threshold");
  add_common(sweep, sweep_o, true);
  sweep->add_option("--eps-grid", grid, "threshold grid lo:hi:step");

  TwoStepProblem tp;
  std::string branch = "delta0=1";
  double x0 = 0.0;
  std::string two_out = default_out_dir();
  auto* two = app.add_subcommand("two-step", "CE versus optimal first control of the two-step example");
  two->add_option("--branch", branch, "delta0=1 or delta0=0");
  two->add_option("--x0", x0, "delivered x0 on the delta0=1 branch");
  two->add_option("--a", tp.a, "plant gain a");
  two->add_option("--b", tp.b, "input gain b");
  two->add_option("--Q0", tp.Q0);
  two->add_option("--Q1", tp.Q1);
  two->add_option("--Q2", tp.Q2);
  two->add_option("--out", two_out, "output directory (env NCSIM_OUT_DIR)");

  std::size_t loop = 0, horizon = 10;
  double ra = 1.0, rb = 1.0;
  auto* ric = app.add_subcommand("riccati", "backward Riccati recursion (scenario loop or scalar plant)");
  ric->add_option("--scenario", ric_o.scenario, "scenario file or preset");
  ric->add_option("--loop", loop, "loop index within the scenario");
  ric->add_option("--a", ra, "scalar A when no scenario is given");
  ric->add_option("--b", rb, "scalar B when no scenario is given");
  ric->add_option("--horizon", horizon, "N when no scenario is given")->check(CLI::PositiveNumber);
  ric->add_option("--out", ric_o.out, "output directory (env NCSIM_OUT_DIR)");

  double m_mean = 0.0, m_var = 1.0, m_upper = 0.5;
  std::string mom_out = default_out_dir();
  auto* mom = app.add_subcommand("moments", "moments of N(mean, variance) truncated to x < upper");
  mom->add_option("--mean", m_mean);
  mom->add_option("--variance", m_var);
  mom->add_option("--upper", m_upper);
  mom->add_option("--out", mom_out, "output directory (env NCSIM_OUT_DIR)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*sim) return cmd_simulate(sim_o, traces, slot_log);
    if (*sweep) return cmd_sweep(sweep_o, grid);
    if (*two) return cmd_two_step(tp, branch, x0, two_out);
    if (*ric) return cmd_riccati(ric_o, loop, ra, rb, horizon);
    if (*mom) return cmd_moments(m_mean, m_var, m_upper, mom_out);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "ncsim: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "ncsim: invalid configuration: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NumericalError& e) {
    std::cerr << "ncsim: numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const IoError& e) {
    std::cerr << "ncsim: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "ncsim: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}
