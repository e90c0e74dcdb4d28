#include "catch_amalgamated.hpp"

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ncsim/io.hpp"
#include "ncsim/scenario.hpp"

using namespace ncsim;
using Catch::Matchers::ContainsSubstring;

namespace {

const char* kScenario = R"(seed: 3
episodes: 50
horizon: 8
weights: {Q0: 1, Q1: 1, Q2: 1, Lambda: 0.5}
crm: {persistence: [1, 0.5], max_attempts: 2, slots_per_sample: 4, window: period}
sources:
  - {type: bernoulli, rate: 0.1}
  - {type: markov, p_on: 0.2, p_off: 0.5}
loops:
  - group: fast
    count: 2
    plant: {A: 0.9, B: 1, Rw: 1, R0: 0.5, x0_mean: 0, period: 5, offset: 2}
    scheduler: {type: innovation_threshold, epsilon: 1.5}
  - group: vec
    plant:
      A: [[1, 0.1], [0, 1]]
      B: [[0], [0.1]]
      Rw: [[0.1, 0], [0, 0.1]]
      x0_mean: [1, -1]
      period: 10
    scheduler: {type: always}
    horizon: 4
    weights: {Q0: [[1, 0], [0, 1]], Q1: [[2, 0], [0, 1]], Q2: 0.5}
)";

std::string parse_error(const std::string& text) {
  try {
    parse_scenario_yaml(text);
  } catch (const ScenarioError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("presets") {
  const auto f = preset_example1();
  REQUIRE(f.scenario.loops.size() == 20);
  std::map<std::string, int> count;
  for (const auto& l : f.scenario.loops) ++count[l.group];
  CHECK(count["T1"] == 6);
  CHECK(count["T2"] == 7);
  CHECK(count["T3"] == 7);
  CHECK(f.scenario.loops[0].plant.period == 10);
  CHECK(f.scenario.loops[19].plant.period == 25);
  CHECK(policy_epsilon(f.scenario.loops[0].scheduler) == 2.5);
  CHECK(std::holds_alternative<AlwaysTransmit>(preset_example1(true).scenario.loops[5].scheduler));
  const auto g = preset_example3();
  REQUIRE(g.scenario.loops.size() == 20);
  CHECK(policy_epsilon(g.scenario.loops[7].scheduler) == 3.5);
  CHECK(find_preset("example3"));
  CHECK_FALSE(find_preset("nope"));
  CHECK_NOTHROW(f.scenario.validate());
}

TEST_CASE("parse a full scenario") {
  const auto f = parse_scenario_yaml(kScenario);
  CHECK(f.seed == 3);
  CHECK(f.episodes == 50);
  REQUIRE(f.scenario.loops.size() == 3);
  CHECK(f.scenario.loops[1].group == "fast");
  CHECK(f.scenario.loops[1].plant.offset == 2);
  CHECK(f.scenario.loops[0].horizon == 8);
  CHECK(f.scenario.loops[2].horizon == 4);
  CHECK(f.scenario.loops[2].plant.A(0, 1) == 0.1);
  CHECK(f.scenario.loops[2].weights.Q2(0, 0) == 0.5);
  CHECK(f.scenario.loops[0].weights.network_penalty == 0.5);
  CHECK(f.scenario.crm.window == ContentionWindow::kSamplingPeriod);
  CHECK(f.scenario.crm.max_attempts == 2);
  REQUIRE(f.scenario.sources.size() == 2);
  CHECK(std::holds_alternative<MarkovOnOff>(f.scenario.sources[1].model));
}

TEST_CASE("round trip through the canonical emitter") {
  for (const auto& f : {parse_scenario_yaml(kScenario), preset_example1(), preset_example1(true), preset_example3()}) {
    const auto text = emit_scenario(f);
    const auto back = parse_scenario_yaml(text);
    CHECK(back.scenario == f.scenario);
    CHECK(back.seed == f.seed);
    CHECK(back.episodes == f.episodes);
    CHECK(emit_scenario(back) == text);
    CHECK(scenario_hash(back) == scenario_hash(f));
  }
  CHECK(scenario_hash(preset_example3(3.5)) != scenario_hash(preset_example3(4.0)));
}

TEST_CASE("scenario errors carry locations") {
  CHECK_THAT(parse_error(""), ContainsSubstring("empty"));
  CHECK_THAT(parse_error("loops: []\nbogus: 1\n"), ContainsSubstring("line 2"));
  const std::string q2 = R"(loops:
  - plant: {A: 1}
    scheduler: {type: always}
    weights: {Q2: 0}
)";
  CHECK_THAT(parse_error(q2), ContainsSubstring("Q2 must be positive definite"));
  CHECK_THAT(parse_error("loops:\n  - plant: {A: 1, period: 5, offset: 5}\n    scheduler: {type: always}\n"),
             ContainsSubstring("offset"));
  CHECK_THAT(parse_error("loops:\n  - plant: {A: [[1, 0], [0, 1]], B: [1]}\n    scheduler: {type: always}\n"),
             ContainsSubstring("B"));
  CHECK_THAT(parse_error("loops:\n  - plant: {A: 1}\n    scheduler: {type: magic}\n"),
             ContainsSubstring("line 3"));
  CHECK_THAT(parse_error("crm: {persistence: [1, 0.5], max_attempts: 3}\nloops:\n  - plant: {A: 1}\n"),
             ContainsSubstring("line 1"));
  CHECK_THAT(parse_error("loops: [\n"), ContainsSubstring("line"));
  CHECK_THROWS_AS(parse_scenario("/nonexistent/scenario.yaml"), ScenarioError);
}

TEST_CASE("csv quoting") {
  CHECK(io::quote("plain") == "plain");
  CHECK(io::quote("a,b") == "\"a,b\"");
  CHECK(io::quote("say \"hi\"") == "\"say \"\"hi\"\"\"");
  std::ostringstream os;
  io::CsvWriter(os).row({"x", "1,2"});
  CHECK(os.str() == "x,\"1,2\"\r\n");
  CHECK(format_double(0.1) == "0.10000000000000001");
}

TEST_CASE("trace csv re-accumulates to the engine's cost") {
  const auto f = preset_example1();
  const auto ep = run_episode(f.scenario, 4, 0);
  std::ostringstream os;
  io::write_trace_header(os);
  io::write_trace_rows(os, 0, ep.loops);
  // independent re-read: split lines and fields, recompute x² + u² (Q = 1)
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  std::map<int, double> cost;
  std::map<int, int> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cols;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cols.push_back(c);
    REQUIRE(cols.size() == io::trace_columns().size());
    const int loop = std::stoi(cols[1]);
    const double x = std::stod(cols[5]), u = std::stod(cols[6]);
    cost[loop] += x * x + u * u;
    rows[loop] += 1;
  }
  for (const auto& tr : ep.loops) {
    CHECK(rows[static_cast<int>(tr.loop)] == 11);
    CHECK(std::abs(cost[static_cast<int>(tr.loop)] - tr.accumulated_cost) < 1e-12 * tr.accumulated_cost);
  }
}
