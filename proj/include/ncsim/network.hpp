#pragma once

// p-persistent CSMA contention, plus the
// exogenous traffic sources that compete with the control loops.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ncsim/error.hpp"
#include "ncsim/rng.hpp"

namespace ncsim {

// kWithinTick: each tick with a request opens a fresh window of
// slots_per_sample mini-slots, shared only by contenders of that tick.
// kSamplingPeriod: one slot per global tick; a loop packet may contend until
// the loop's next sampling tick and overlaps with packets of other loops.
enum class ContentionWindow { kWithinTick, kSamplingPeriod };

inline const char* to_string(ContentionWindow w) {
  return w == ContentionWindow::kWithinTick ? "tick" : "period";
}

struct CrmConfig {
  std::vector<double> persistence{1.0, 0.75, 0.5};  // p^(r), r = 1..max_attempts
  std::size_t max_attempts = 3;
  std::size_t slots_per_sample = 3;  // window length; in kSamplingPeriod mode only for traffic sources
  ContentionWindow window = ContentionWindow::kWithinTick;

  double persistence_at(std::size_t attempt) const { return persistence.at(attempt - 1); }

  void validate() const {
    if (persistence.empty()) throw ConfigError("crm: persistence list is empty");
    if (max_attempts < 1) throw ConfigError("crm: max_attempts must be >= 1");
    if (persistence.size() != max_attempts)
      throw ConfigError("crm: persistence list needs one probability per attempt (" +
                        std::to_string(max_attempts) + ")");
    for (double p : persistence)
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("crm: persistence probabilities must lie in [0,1]");
    if (slots_per_sample < max_attempts)
      throw ConfigError("crm: slots_per_sample must be >= max_attempts");
  }

  friend bool operator==(const CrmConfig&, const CrmConfig&) = default;
};

struct BernoulliIid {
  double rate = 0.0;
  friend bool operator==(const BernoulliIid&, const BernoulliIid&) = default;
};

// Two-state chain: p_on = Pr(0 -> 1), p_off = Pr(1 -> 0).
struct MarkovOnOff {
  double p_on = 0.0;
  double p_off = 1.0;
  friend bool operator==(const MarkovOnOff&, const MarkovOnOff&) = default;
};

using TrafficModel = std::variant<BernoulliIid, MarkovOnOff>;

struct TrafficSource {
  TrafficModel model;
  bool active = false;

  void validate() const {
    auto in01 = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (auto* b = std::get_if<BernoulliIid>(&model)) {
      if (!in01(b->rate)) throw ConfigError("traffic source: rate must lie in [0,1]");
    } else {
      const auto& m = std::get<MarkovOnOff>(model);
      if (!in01(m.p_on) || !in01(m.p_off))
        throw ConfigError("traffic source: transition probabilities must lie in [0,1]");
    }
  }

  friend bool operator==(const TrafficSource& a, const TrafficSource& b) { return a.model == b.model; }
};

// Advance one tick and return n_k.
inline bool traffic_step(TrafficSource& source, RngStream& rng) {
  if (auto* b = std::get_if<BernoulliIid>(&source.model)) {
    source.active = rng.bernoulli(b->rate);
  } else {
    const auto& m = std::get<MarkovOnOff>(source.model);
    const double u = rng.uniform();
    source.active = source.active ? !(u < m.p_off) : (u < m.p_on);
  }
  return source.active;
}

enum class SlotResult { kSuccess, kCollided, kDeferred };
enum class FinalResult { kSuccess, kDropped };

inline const char* to_string(SlotResult r) {
  switch (r) {
    case SlotResult::kSuccess: return "success";
    case SlotResult::kCollided: return "collided";
    case SlotResult::kDeferred: return "deferred";
  }
  return "?";
}

inline const char* to_string(FinalResult r) { return r == FinalResult::kSuccess ? "success" : "dropped"; }

struct SlotEvent {
  std::size_t slot = 0;  // 1-based mini-slot
  std::size_t contender = 0;
  std::size_t attempt = 0;  // attempt index the contender was on in this slot
  SlotResult result = SlotResult::kDeferred;
};

struct ContenderOutcome {
  std::size_t contender = 0;
  FinalResult result = FinalResult::kDropped;
  std::size_t transmissions = 0;
  std::size_t success_slot = 0;  // 0 when dropped
};

struct SlotOutcome {
  std::vector<ContenderOutcome> contenders;  // same order as the requests
  std::vector<SlotEvent> events;
  std::vector<std::size_t> successes_per_slot;
  std::size_t collisions = 0;  // mini-slots with two or more transmitters

  bool delivered(std::size_t contender) const {
    for (const auto& c : contenders)
      if (c.contender == contender) return c.result == FinalResult::kSuccess;
    return false;
  }
  const ContenderOutcome* find(std::size_t contender) const {
    for (const auto& c : contenders)
      if (c.contender == contender) return &c;
    return nullptr;
  }
};

// Coin flips keyed by (contender id, slot) rather than drawn from a shared
// sequence, so adding or removing a contender leaves every other contender's
// flips unchanged.
struct CoupledDraws {
  std::uint64_t key = 0;
  std::uint64_t tick = 0;
  double operator()(std::size_t contender, std::size_t slot) const {
    return coupled_uniform(key, tick, contender, slot);
  }
};

struct PacketOutcome {
  std::size_t contender = 0;
  FinalResult result = FinalResult::kDropped;
  std::size_t transmissions = 0;
  std::size_t first_slot = 0;
  std::size_t success_slot = 0;  // 0 when dropped
};

// Slotted p-persistent channel. Each packet may use slots
// [first_slot, last_slot]; in every slot each pending packet on attempt r
// transmits with probability p^(r). A lone transmitter succeeds, two or more
// all collide and advance their attempt counters. A counter past
// max_attempts, or a window that closes while still pending, drops the
// packet.
class SlottedChannel {
 public:
  explicit SlottedChannel(CrmConfig crm) : crm_(std::move(crm)) { crm_.validate(); }

  struct SlotReport {
    std::vector<SlotEvent> events;
    std::vector<PacketOutcome> finished;  // packets that left the channel in this slot
    std::size_t transmitters = 0;
    bool collision() const { return transmitters >= 2; }
  };

  void request(std::size_t contender, std::size_t first_slot, std::size_t last_slot) {
    if (last_slot < first_slot) throw ConfigError("channel: empty contention window");
    if (has_pending(contender)) throw ProtocolError("channel: contender already has a pending packet");
    pending_.push_back({contender, first_slot, last_slot, 1, 0});
  }

  bool has_pending(std::size_t contender) const {
    for (const auto& p : pending_)
      if (p.contender == contender) return true;
    return false;
  }
  bool idle() const { return pending_.empty(); }

  // `draw(contender, slot)` must return a uniform in (0,1).
  template <typename Draw>
  SlotReport step(std::size_t slot, Draw&& draw) {
    SlotReport rep;
    std::vector<std::size_t> tx;
    for (std::size_t i = 0; i < pending_.size(); ++i) {
      auto& p = pending_[i];
      if (p.first_slot > slot) continue;
      if (draw(p.contender, slot) < crm_.persistence_at(p.attempt)) {
        tx.push_back(i);
      } else {
        rep.events.push_back({slot, p.contender, p.attempt, SlotResult::kDeferred});
      }
    }
    rep.transmitters = tx.size();
    std::vector<bool> leave(pending_.size(), false);
    if (tx.size() == 1) {
      auto& p = pending_[tx.front()];
      rep.events.push_back({slot, p.contender, p.attempt, SlotResult::kSuccess});
      rep.finished.push_back({p.contender, FinalResult::kSuccess, p.transmissions + 1, p.first_slot, slot});
      leave[tx.front()] = true;
    } else {
      for (std::size_t i : tx) {
        auto& p = pending_[i];
        rep.events.push_back({slot, p.contender, p.attempt, SlotResult::kCollided});
        p.transmissions += 1;
        if (++p.attempt > crm_.max_attempts) {
          rep.finished.push_back({p.contender, FinalResult::kDropped, p.transmissions, p.first_slot, 0});
          leave[i] = true;
        }
      }
    }
    for (std::size_t i = 0; i < pending_.size(); ++i) {
      auto& p = pending_[i];
      if (!leave[i] && p.last_slot <= slot) {
        rep.finished.push_back({p.contender, FinalResult::kDropped, p.transmissions, p.first_slot, 0});
        leave[i] = true;
      }
    }
    std::vector<Pending> keep;
    keep.reserve(pending_.size());
    for (std::size_t i = 0; i < pending_.size(); ++i)
      if (!leave[i]) keep.push_back(pending_[i]);
    pending_.swap(keep);
    return rep;
  }

  const CrmConfig& config() const { return crm_; }

 private:
  struct Pending {
    std::size_t contender;
    std::size_t first_slot;
    std::size_t last_slot;
    std::size_t attempt;
    std::size_t transmissions;
  };
  CrmConfig crm_;
  std::vector<Pending> pending_;
};

// One contention window: every request enters at mini-slot 1 and the window
// lasts slots_per_sample mini-slots.
template <typename Draw>
SlotOutcome resolve_contention(std::span<const std::size_t> requests, const CrmConfig& crm, Draw&& draw) {
  SlottedChannel channel(crm);
  SlotOutcome out;
  out.contenders.reserve(requests.size());
  for (std::size_t id : requests) {
    channel.request(id, 1, crm.slots_per_sample);
    out.contenders.push_back({id, FinalResult::kDropped, 0, 0});
  }
  auto record = [&](const PacketOutcome& p) {
    for (auto& c : out.contenders)
      if (c.contender == p.contender) c = {p.contender, p.result, p.transmissions, p.success_slot};
  };
  for (std::size_t slot = 1; slot <= crm.slots_per_sample; ++slot) {
    auto rep = channel.step(slot, draw);
    out.successes_per_slot.push_back(rep.transmitters == 1 ? 1 : 0);
    if (rep.collision()) ++out.collisions;
    out.events.insert(out.events.end(), rep.events.begin(), rep.events.end());
    for (const auto& p : rep.finished) record(p);
  }
  return out;
}

}  // namespace ncsim
