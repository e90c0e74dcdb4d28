#pragma once

// Closed-loop episode engine for M loops sharing one contention channel,
// Monte Carlo aggregation over episodes, the threshold sweep and the
// dual-effect experiment.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ncsim/control.hpp"
#include "ncsim/estimation.hpp"
#include "ncsim/model.hpp"
#include "ncsim/network.hpp"
#include "ncsim/rng.hpp"
#include "ncsim/scheduling.hpp"
#include "ncsim/trace.hpp"

namespace ncsim {

// u_k = -gain_scale · L_k xhat_{k|k}. gain_scale = 1 is the certainty-
// equivalent LQG law, 0 leaves the plant open loop.
struct ControlLaw {
  double gain_scale = 1.0;

  static ControlLaw certainty_equivalent() { return {1.0}; }
  static ControlLaw zero() { return {0.0}; }
  friend bool operator==(const ControlLaw&, const ControlLaw&) = default;
};

struct SimOptions {
  ControlLaw law = ControlLaw::certainty_equivalent();
  bool record_slot_events = false;
};

struct NetworkStats {
  std::size_t contention_ticks = 0;     // ticks where at least one contender showed up
  std::size_t decisions = 0;            // scheduler evaluations (loop steps with k < N)
  std::size_t loop_requests = 0;        // Σ gamma
  std::size_t loop_deliveries = 0;      // Σ delta
  std::size_t loop_transmissions = 0;   // MAC transmissions by loops
  std::size_t loop_collided = 0;        // loop transmissions that collided
  std::size_t source_requests = 0;
  std::size_t source_deliveries = 0;
  std::size_t collision_slots = 0;      // mini-slots with >= 2 transmitters

  NetworkStats& operator+=(const NetworkStats& o) {
    contention_ticks += o.contention_ticks;
    decisions += o.decisions;
    loop_requests += o.loop_requests;
    loop_deliveries += o.loop_deliveries;
    loop_transmissions += o.loop_transmissions;
    loop_collided += o.loop_collided;
    source_requests += o.source_requests;
    source_deliveries += o.source_deliveries;
    collision_slots += o.collision_slots;
    return *this;
  }

  static double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  }
  double request_rate() const { return ratio(loop_requests, decisions); }
  double delivery_rate() const { return ratio(loop_deliveries, loop_requests); }
  double drop_rate() const { return loop_requests == 0 ? 0.0 : 1.0 - delivery_rate(); }
  double collision_rate() const { return ratio(loop_collided, loop_transmissions); }
};

struct SlotLogRow {
  std::size_t tick = 0;
  std::size_t contender = 0;  // loops 0..M-1, sources M..
  std::size_t slot = 0;
  std::size_t attempt = 0;
  SlotResult result = SlotResult::kDeferred;
};

struct EpisodeResult {
  std::vector<LoopTrace> loops;
  NetworkStats network;
  std::vector<SlotLogRow> slot_log;
};

// Scenario with everything that does not change between episodes
// precomputed: Riccati gains and noise square roots.
class Engine {
 public:
  explicit Engine(NetworkScenario scenario, SimOptions options = {})
      : scenario_(std::move(scenario)), options_(options) {
    scenario_.validate();
    for (const auto& loop : scenario_.loops) {
      riccati_.push_back(riccati_backward(loop));
      noise_root_.push_back(psd_sqrt(loop.plant.Rw));
      init_root_.push_back(psd_sqrt(loop.plant.R0));
    }
  }

  const NetworkScenario& scenario() const { return scenario_; }
  const SimOptions& options() const { return options_; }
  const RiccatiSolution& riccati(std::size_t loop) const { return riccati_.at(loop); }

  // Per global tick: sampling loops evaluate their schedulers and queue
  // their packets, active sources queue theirs, the channel runs its slots,
  // and every loop whose contention window closes at this tick updates its
  // observer, applies u_k and steps its plant.
  EpisodeResult run(std::uint64_t seed, std::uint64_t episode) const {
    const std::size_t M = scenario_.loops.size();
    const auto& crm = scenario_.crm;
    const bool per_tick = crm.window == ContentionWindow::kWithinTick;
    struct LoopState {
      Vector x;
      Vector u_prev;
      ObserverState obs;
      RngStream rng;
      Vector prediction;
      bool gamma = false;
      bool open = false;       // step k sampled, not yet finalized
      std::size_t k = 0;
      std::size_t sample_tick = 0;
      std::size_t close_tick = 0;
      bool delta = false;
      std::size_t transmissions = 0;
    };
    std::vector<LoopState> st;
    st.reserve(M);
    EpisodeResult result;
    result.loops.resize(M);
    for (std::size_t j = 0; j < M; ++j) {
      const auto& loop = scenario_.loops[j];
      RngStream rng(seed, episode, j, StreamRole::kPlant);
      Vector x0 = loop.plant.x0_mean + sample_with_root(rng, init_root_[j]);
      LoopState s{std::move(x0), Vector::Zero(loop.plant.input_dim()), make_observer(loop.plant), std::move(rng)};
      st.push_back(std::move(s));
      auto& tr = result.loops[j];
      tr.loop = j;
      tr.group = loop.group;
      tr.horizon = loop.horizon;
      tr.steps.reserve(loop.horizon + 1);
    }
    std::vector<TrafficSource> sources = scenario_.sources;
    std::vector<RngStream> source_rng;
    source_rng.reserve(sources.size());
    for (std::size_t i = 0; i < sources.size(); ++i)
      source_rng.emplace_back(seed, episode, i, StreamRole::kTraffic);
    const std::uint64_t network_key =
        hash_coordinates(seed, episode, 0, static_cast<std::uint64_t>(StreamRole::kNetwork));

    SlottedChannel channel(crm);
    auto apply = [&](const SlottedChannel::SlotReport& rep, std::size_t tick) {
      auto& ns = result.network;
      if (rep.collision()) ns.collision_slots += 1;
      if (options_.record_slot_events)
        for (const auto& ev : rep.events)
          result.slot_log.push_back({tick, ev.contender, ev.slot, ev.attempt, ev.result});
      for (const auto& p : rep.finished) {
        const bool delivered = p.result == FinalResult::kSuccess;
        if (p.contender < M) {
          ns.loop_deliveries += delivered ? 1 : 0;
          ns.loop_transmissions += p.transmissions;
          ns.loop_collided += p.transmissions - (delivered ? 1 : 0);
          st[p.contender].delta = delivered;
          st[p.contender].transmissions = p.transmissions;
        } else {
          ns.source_deliveries += delivered ? 1 : 0;
        }
      }
    };

    const std::size_t H = scenario_.global_horizon();
    for (std::size_t tick = 0; tick <= H; ++tick) {
      for (std::size_t j = 0; j < M; ++j) {
        const auto& loop = scenario_.loops[j];
        const auto& plant = loop.plant;
        if (tick < plant.offset || (tick - plant.offset) % plant.period != 0) continue;
        const std::size_t k = (tick - plant.offset) / plant.period;
        if (k > loop.horizon) continue;
        auto& s = st[j];
        s.prediction = predict(s.obs, s.u_prev, plant);
        if (k == loop.horizon) {
          record_terminal(result.loops[j], loop, s.x, s.prediction, s.obs.tau, k, tick);
          continue;
        }
        s.gamma = decide(loop.scheduler, {s.x, s.prediction, static_cast<long>(k), s.obs.tau});
        s.open = true;
        s.k = k;
        s.sample_tick = tick;
        s.close_tick = per_tick ? tick : tick + plant.period - 1;
        s.delta = false;
        s.transmissions = 0;
        result.network.decisions += 1;
        if (s.gamma) {
          result.network.loop_requests += 1;
          if (per_tick) channel.request(j, 1, crm.slots_per_sample);
          else channel.request(j, tick, s.close_tick);
        }
      }
      for (std::size_t i = 0; i < sources.size(); ++i) {
        const bool active = traffic_step(sources[i], source_rng[i]);
        if (!active || channel.has_pending(M + i)) continue;
        result.network.source_requests += 1;
        if (per_tick) channel.request(M + i, 1, crm.slots_per_sample);
        else channel.request(M + i, tick, tick + crm.slots_per_sample - 1);
      }

      if (!channel.idle()) {
        result.network.contention_ticks += 1;
        if (per_tick) {
          const CoupledDraws draw{network_key, tick};
          for (std::size_t slot = 1; slot <= crm.slots_per_sample; ++slot) apply(channel.step(slot, draw), tick);
        } else {
          const CoupledDraws draw{network_key, 0};
          apply(channel.step(tick, draw), tick);
        }
      }

      for (std::size_t j = 0; j < M; ++j) {
        auto& s = st[j];
        if (!s.open || s.close_tick != tick) continue;
        s.open = false;
        const auto& loop = scenario_.loops[j];
        const bool delta = s.gamma && s.delta;
        s.obs = observer_update(s.obs, delta, delta ? std::optional<Vector>(s.x) : std::nullopt, s.u_prev,
                                loop.plant);
        const Vector u = options_.law.gain_scale * ce_control(riccati_[j].L[s.k], s.obs.xhat);

        TraceStep step;
        step.k = s.k;
        step.tick = s.sample_tick;
        step.x = s.x;
        step.u = u;
        step.gamma = s.gamma;
        step.delta = delta;
        step.transmissions = s.gamma ? s.transmissions : 0;
        step.xhat = s.obs.xhat;
        step.err = s.x - s.obs.xhat;
        step.pred_err = s.x - s.prediction;
        step.tau = s.obs.tau;
        step.stage_cost = stage_cost(loop.weights, s.x, u);
        auto& tr = result.loops[j];
        tr.accumulated_cost += step.stage_cost;
        tr.steps.push_back(std::move(step));

        const Vector w = sample_with_root(s.rng, noise_root_[j]);
        s.x = plant_step(loop.plant, s.x, u, w);
        s.u_prev = u;
      }
    }
    return result;
  }

 private:
  static void record_terminal(LoopTrace& tr, const LoopConfig& loop, const Vector& x, const Vector& prediction,
                              long tau, std::size_t k, std::size_t tick) {
    TraceStep step;
    step.k = k;
    step.tick = tick;
    step.x = x;
    step.u = Vector::Zero(loop.plant.input_dim());
    step.xhat = prediction;
    step.err = x - prediction;
    step.pred_err = x - prediction;
    step.tau = tau;
    step.stage_cost = terminal_cost(loop.weights, x);
    tr.accumulated_cost += step.stage_cost;
    tr.steps.push_back(std::move(step));
  }

  NetworkScenario scenario_;
  SimOptions options_;
  std::vector<RiccatiSolution> riccati_;
  std::vector<Matrix> noise_root_;
  std::vector<Matrix> init_root_;
};

inline EpisodeResult run_episode(const NetworkScenario& scenario, std::uint64_t seed, std::uint64_t episode,
                                 const SimOptions& options = {}) {
  return Engine(scenario, options).run(seed, episode);
}

// Running mean / standard error over independent samples.
struct MeanAccumulator {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double v) {
    ++n;
    const double d = v - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (v - mean);
  }
  std::optional<double> standard_error() const {
    if (n < 2) return std::nullopt;
    return std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n));
  }
  double se_or_zero() const { return standard_error().value_or(0.0); }
};

struct LoopSummary {
  std::size_t loop = 0;
  std::string group;
  std::string scheduler;
  CostReport cost;
  double mse = 0.0;               // mean over episodes and k < N of |x - xhat_{k|k}|²
  double bound_probability = 0.0;     // fraction of k < N with |x - xhat_{k|tau_{k-1}}|² <= epsilon
  double estimate_bound_probability = 0.0;  // same for |x - xhat_{k|k}|²
  bool has_bound = false;
  std::vector<Matrix> mean_P;     // empirical P_{n|n}, n = 0..N-1
};

struct GroupSummary {
  std::string group;
  std::size_t loops = 0;
  double cost = 0.0;                 // average over the group's loops and episodes
  std::optional<double> cost_se;    // from per-episode group averages
  double transmissions = 0.0;
  std::optional<double> jdp;
};

struct MonteCarloReport {
  std::uint64_t seed = 0;
  std::size_t episodes = 0;
  std::vector<LoopSummary> loops;
  std::vector<GroupSummary> groups;
  double cost = 0.0;  // average over all loops
  std::optional<double> cost_se;
  double bound_probability = 0.0;  // pooled over loops with threshold schedulers
  double estimate_bound_probability = 0.0;
  NetworkStats network;
};

inline MonteCarloReport monte_carlo(const NetworkScenario& scenario, std::uint64_t seed, std::size_t episodes,
                                    const SimOptions& options = {}) {
  if (episodes < 1) throw ConfigError("monte_carlo: episodes must be >= 1");
  const Engine engine(scenario, options);
  const std::size_t M = scenario.loops.size();

  std::vector<std::string> group_names;
  std::vector<std::size_t> group_of(M);
  for (std::size_t j = 0; j < M; ++j) {
    auto it = std::find(group_names.begin(), group_names.end(), scenario.loops[j].group);
    if (it == group_names.end()) {
      group_names.push_back(scenario.loops[j].group);
      group_of[j] = group_names.size() - 1;
    } else {
      group_of[j] = static_cast<std::size_t>(it - group_names.begin());
    }
  }

  std::vector<MeanAccumulator> loop_cost(M), loop_tx(M), loop_mse(M);
  std::vector<MeanAccumulator> group_cost(group_names.size()), group_tx(group_names.size());
  MeanAccumulator all_cost;
  std::vector<std::vector<Matrix>> P_sum(M);
  std::vector<std::size_t> bound_hits(M, 0), bound_total(M, 0), est_hits(M, 0);
  MonteCarloReport rep;
  rep.seed = seed;
  rep.episodes = episodes;
  for (std::size_t j = 0; j < M; ++j) {
    const auto n = scenario.loops[j].plant.state_dim();
    P_sum[j].assign(scenario.loops[j].horizon, Matrix::Zero(n, n));
  }

  std::vector<double> gsum(group_names.size()), gtx(group_names.size());
  std::vector<std::size_t> gcount(group_names.size());
  for (std::size_t e = 0; e < episodes; ++e) {
    const EpisodeResult ep = engine.run(seed, e);
    rep.network += ep.network;
    std::fill(gsum.begin(), gsum.end(), 0.0);
    std::fill(gtx.begin(), gtx.end(), 0.0);
    std::fill(gcount.begin(), gcount.end(), 0);
    double total = 0.0;
    for (std::size_t j = 0; j < M; ++j) {
      const auto& tr = ep.loops[j];
      const auto& loop = scenario.loops[j];
      const double J = tr.accumulated_cost;
      const double tx = static_cast<double>(tr.transmissions());
      loop_cost[j].add(J);
      loop_tx[j].add(tx);
      double se = 0.0;
      const auto eps = policy_epsilon(loop.scheduler);
      for (std::size_t k = 0; k < tr.horizon; ++k) {
        const auto& s = tr.steps[k];
        se += s.err.squaredNorm();
        P_sum[j][k] += s.err * s.err.transpose();
        if (eps) {
          bound_total[j] += 1;
          bound_hits[j] += s.pred_err.squaredNorm() <= *eps ? 1 : 0;
          est_hits[j] += s.err.squaredNorm() <= *eps ? 1 : 0;
        }
      }
      loop_mse[j].add(se / static_cast<double>(tr.horizon));
      gsum[group_of[j]] += J;
      gtx[group_of[j]] += tx;
      gcount[group_of[j]] += 1;
      total += J;
    }
    for (std::size_t g = 0; g < group_names.size(); ++g) {
      group_cost[g].add(gsum[g] / static_cast<double>(gcount[g]));
      group_tx[g].add(gtx[g] / static_cast<double>(gcount[g]));
    }
    all_cost.add(total / static_cast<double>(M));
  }

  std::size_t pooled_hits = 0, pooled_total = 0, pooled_est = 0;
  std::vector<double> group_jdp(group_names.size(), 0.0);
  std::vector<bool> group_has_jdp(group_names.size(), true);
  for (std::size_t j = 0; j < M; ++j) {
    const auto& loop = scenario.loops[j];
    LoopSummary ls;
    ls.loop = j;
    ls.group = loop.group;
    ls.scheduler = policy_name(loop.scheduler);
    ls.cost.cost = loop_cost[j].mean;
    ls.cost.cost_se = loop_cost[j].standard_error();
    ls.cost.transmissions = loop_tx[j].mean;
    ls.cost.penalized_cost = ls.cost.cost + loop.weights.network_penalty * ls.cost.transmissions;
    ls.cost.episodes = episodes;
    ls.mse = loop_mse[j].mean;
    for (auto& P : P_sum[j]) ls.mean_P.push_back(P / static_cast<double>(episodes));
    if (is_symmetric_control_free(loop.scheduler)) {
      ls.cost.jdp = jdp_closed_form(engine.riccati(j), loop.plant.x0_mean, loop.plant.R0, loop.plant.Rw, ls.mean_P);
      group_jdp[group_of[j]] += *ls.cost.jdp;
    } else {
      group_has_jdp[group_of[j]] = false;
    }
    if (bound_total[j] > 0) {
      ls.has_bound = true;
      ls.bound_probability = static_cast<double>(bound_hits[j]) / static_cast<double>(bound_total[j]);
      ls.estimate_bound_probability = static_cast<double>(est_hits[j]) / static_cast<double>(bound_total[j]);
      pooled_hits += bound_hits[j];
      pooled_est += est_hits[j];
      pooled_total += bound_total[j];
    }
    rep.loops.push_back(std::move(ls));
  }
  for (std::size_t g = 0; g < group_names.size(); ++g) {
    GroupSummary gs;
    gs.group = group_names[g];
    gs.loops = static_cast<std::size_t>(std::count(group_of.begin(), group_of.end(), g));
    gs.cost = group_cost[g].mean;
    gs.cost_se = group_cost[g].standard_error();
    gs.transmissions = group_tx[g].mean;
    if (group_has_jdp[g]) gs.jdp = group_jdp[g] / static_cast<double>(gs.loops);
    rep.groups.push_back(std::move(gs));
  }
  rep.cost = all_cost.mean;
  rep.cost_se = all_cost.standard_error();
  rep.bound_probability =
      pooled_total == 0 ? 0.0 : static_cast<double>(pooled_hits) / static_cast<double>(pooled_total);
  rep.estimate_bound_probability =
      pooled_total == 0 ? 0.0 : static_cast<double>(pooled_est) / static_cast<double>(pooled_total);
  return rep;
}

struct SweepRow {
  double epsilon = 0.0;
  double cost = 0.0;
  double cost_se = 0.0;
  std::optional<double> jdp;  // closed form averaged over loops, control-free schedulers only
  double bound_probability = 0.0;
  double estimate_bound_probability = 0.0;
  double request_rate = 0.0;
  double delivery_rate = 0.0;
  double collision_rate = 0.0;
  double drop_rate = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;

  std::size_t argmin() const {
    return static_cast<std::size_t>(
        std::min_element(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.cost < b.cost; }) -
        rows.begin());
  }
};

// Same seed for every epsilon, so all grid points see identical plant noise.
inline SweepResult sweep_threshold(const NetworkScenario& scenario, std::span<const double> grid,
                                   std::uint64_t seed, std::size_t episodes, const SimOptions& options = {}) {
  if (grid.empty()) throw ConfigError("sweep_threshold: empty epsilon grid");
  SweepResult out;
  for (double eps : grid) {
    if (!(eps >= 0.0)) throw ConfigError("sweep_threshold: epsilon must be >= 0");
    NetworkScenario sc = scenario;
    for (auto& loop : sc.loops) loop.scheduler = with_epsilon(loop.scheduler, eps);
    const MonteCarloReport rep = monte_carlo(sc, seed, episodes, options);
    SweepRow row;
    row.epsilon = eps;
    row.cost = rep.cost;
    row.cost_se = rep.cost_se.value_or(0.0);
    bool all_jdp = true;
    double jdp = 0.0;
    for (const auto& l : rep.loops) {
      if (!l.cost.jdp) all_jdp = false;
      else jdp += *l.cost.jdp;
    }
    if (all_jdp) row.jdp = jdp / static_cast<double>(rep.loops.size());
    row.bound_probability = rep.bound_probability;
    row.estimate_bound_probability = rep.estimate_bound_probability;
    row.request_rate = rep.network.request_rate();
    row.delivery_rate = rep.network.delivery_rate();
    row.collision_rate = rep.network.collision_rate();
    row.drop_rate = rep.network.drop_rate();
    out.rows.push_back(row);
  }
  return out;
}

struct DualEffectReport {
  std::size_t episodes = 0;
  bool control_free = false;          // every loop's scheduler is control-free
  std::size_t diverged_episodes = 0;  // episodes where any loop's gamma sequence differs
  double mean_divergence_step = 0.0;  // first differing k, averaged over diverged loop-episodes
  double mse_a = 0.0, mse_b = 0.0;    // E[|x - xhat_{k|k}|²] under each law
  double mse_a_se = 0.0, mse_b_se = 0.0;
  double mse_diff = 0.0;              // mse_a - mse_b
  double mse_diff_se = 0.0;           // paired over episodes (common random numbers)

  bool gamma_identical() const { return diverged_episodes == 0; }
};

inline DualEffectReport dual_effect_experiment(const NetworkScenario& scenario, ControlLaw law_a, ControlLaw law_b,
                                               std::uint64_t seed, std::size_t episodes) {
  if (law_a == law_b) throw ConfigError("dual_effect_experiment: the two control laws must differ");
  if (episodes < 1) throw ConfigError("dual_effect_experiment: episodes must be >= 1");
  const Engine ea(scenario, {law_a, false});
  const Engine eb(scenario, {law_b, false});
  DualEffectReport rep;
  rep.episodes = episodes;
  rep.control_free = std::all_of(scenario.loops.begin(), scenario.loops.end(),
                                 [](const auto& l) { return is_symmetric_control_free(l.scheduler); });
  MeanAccumulator ma, mb, md;
  std::size_t diverged_loops = 0;
  double divergence_sum = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    const EpisodeResult ra = ea.run(seed, e);
    const EpisodeResult rb = eb.run(seed, e);
    bool diverged = false;
    double sa = 0.0, sb = 0.0;
    std::size_t cnt = 0;
    for (std::size_t j = 0; j < ra.loops.size(); ++j) {
      const auto& ta = ra.loops[j].steps;
      const auto& tb = rb.loops[j].steps;
      for (std::size_t k = 0; k + 1 < ta.size(); ++k) {
        if (ta[k].gamma != tb[k].gamma) {
          diverged = true;
          ++diverged_loops;
          divergence_sum += static_cast<double>(k);
          break;
        }
      }
      for (std::size_t k = 0; k + 1 < ta.size(); ++k) {
        sa += ta[k].err.squaredNorm();
        sb += tb[k].err.squaredNorm();
        ++cnt;
      }
    }
    rep.diverged_episodes += diverged ? 1 : 0;
    const double a = sa / static_cast<double>(cnt), b = sb / static_cast<double>(cnt);
    ma.add(a);
    mb.add(b);
    md.add(a - b);
  }
  rep.mean_divergence_step = diverged_loops == 0 ? 0.0 : divergence_sum / static_cast<double>(diverged_loops);
  rep.mse_a = ma.mean;
  rep.mse_b = mb.mean;
  rep.mse_a_se = ma.se_or_zero();
  rep.mse_b_se = mb.se_or_zero();
  rep.mse_diff = md.mean;
  rep.mse_diff_se = md.se_or_zero();
  return rep;
}

}  // namespace ncsim
