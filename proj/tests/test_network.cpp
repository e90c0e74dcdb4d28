#include "catch_amalgamated.hpp"

#include <map>
#include <random>
#include <vector>

#include "ncsim/network.hpp"

using namespace ncsim;

namespace {

struct TableDraws {
  std::map<std::pair<std::size_t, std::size_t>, double> u;
  double operator()(std::size_t c, std::size_t s) const { return u.at({c, s}); }
};

std::size_t successes_in_slot(const SlotOutcome& o, std::size_t slot) {
  std::size_t n = 0;
  for (const auto& e : o.events) n += (e.slot == slot && e.result == SlotResult::kSuccess) ? 1 : 0;
  return n;
}

}  // namespace

TEST_CASE("lone contender with p1 = 1 succeeds in mini-slot 1") {
  const std::vector<std::size_t> req{4};
  const auto o = resolve_contention(req, CrmConfig{}, CoupledDraws{1, 0});
  REQUIRE(o.contenders.size() == 1);
  CHECK(o.contenders[0].result == FinalResult::kSuccess);
  CHECK(o.contenders[0].success_slot == 1);
  CHECK(o.contenders[0].transmissions == 1);
  CHECK(o.delivered(4));
  CHECK(o.collisions == 0);
}

TEST_CASE("simultaneous first attempts collide") {
  const std::vector<std::size_t> req{0, 1};
  const auto o = resolve_contention(req, CrmConfig{}, CoupledDraws{9, 2});
  REQUIRE_FALSE(o.events.empty());
  std::size_t collided_in_1 = 0;
  for (const auto& e : o.events)
    if (e.slot == 1) {
      CHECK(e.attempt == 1);
      collided_in_1 += e.result == SlotResult::kCollided ? 1 : 0;
    }
  CHECK(collided_in_1 == 2);
  CHECK(o.collisions >= 1);
  CHECK(o.successes_per_slot[0] == 0);
}

TEST_CASE("p = 1 everywhere: two contenders never get through") {
  CrmConfig crm{{1.0, 1.0, 1.0}, 3, 3};
  const std::vector<std::size_t> req{0, 1};
  const auto o = resolve_contention(req, crm, CoupledDraws{3, 0});
  CHECK_FALSE(o.delivered(0));
  CHECK_FALSE(o.delivered(1));
  CHECK(o.collisions == 3);
  CHECK(o.find(0)->transmissions == 3);
}

TEST_CASE("no contenders: idle window") {
  const auto o = resolve_contention(std::vector<std::size_t>{}, CrmConfig{}, CoupledDraws{1, 0});
  CHECK(o.contenders.empty());
  CHECK(o.collisions == 0);
  CHECK_FALSE(o.delivered(0));
}

TEST_CASE("hand-traced contention with fixed draws") {
  // slot 1: both transmit (p1 = 1) -> collision, both on attempt 2
  // slot 2: 0 draws 0.5 < 0.75 transmits, 1 draws 0.9 defers -> 0 succeeds
  // slot 3: 1 draws 0.7 < 0.75 transmits alone -> succeeds
  TableDraws d;
  d.u = {{{0, 1}, 0.1}, {{1, 1}, 0.1}, {{0, 2}, 0.5}, {{1, 2}, 0.9}, {{1, 3}, 0.7}};
  const std::vector<std::size_t> req{0, 1};
  const auto o = resolve_contention(req, CrmConfig{}, d);
  CHECK(o.find(0)->success_slot == 2);
  CHECK(o.find(0)->transmissions == 2);
  CHECK(o.find(1)->success_slot == 3);
  CHECK(o.find(1)->transmissions == 2);
  CHECK(o.successes_per_slot == std::vector<std::size_t>{0, 1, 1});
}

TEST_CASE("attempt counter past max_attempts drops the packet") {
  CrmConfig crm{{1.0, 1.0}, 2, 5};
  const std::vector<std::size_t> req{0, 1, 2};
  const auto o = resolve_contention(req, crm, CoupledDraws{1, 0});
  for (const auto& c : o.contenders) {
    CHECK(c.result == FinalResult::kDropped);
    CHECK(c.transmissions == 2);
  }
  CHECK(o.collisions == 2);  // slots 3..5 are empty
}

TEST_CASE("conservation: at most one success per mini-slot") {
  std::mt19937_64 gen(17);
  for (std::uint64_t key = 0; key < 400; ++key) {
    const std::size_t n = 1 + key % 7;
    std::vector<std::size_t> req(n);
    for (std::size_t i = 0; i < n; ++i) req[i] = i;
    CrmConfig crm{{1.0, 0.6, 0.3, 0.2}, 4, 6};
    const auto o = resolve_contention(req, crm, CoupledDraws{key, 0});
    std::size_t delivered = 0;
    for (std::size_t s = 1; s <= crm.slots_per_sample; ++s) {
      CHECK(successes_in_slot(o, s) <= 1);
      CHECK(o.successes_per_slot[s - 1] == successes_in_slot(o, s));
    }
    for (const auto& c : o.contenders) delivered += c.result == FinalResult::kSuccess ? 1 : 0;
    CHECK(delivered <= crm.slots_per_sample);
  }
}

TEST_CASE("adding a contender rarely helps anyone else") {
  // Under the coupled draws an extra contender can only collide with others
  // or push their attempt counters up; both lower the others' chances. Count
  // the draws where an existing contender fails alone but succeeds with the
  // newcomer, and compare aggregate success counts.
  const CrmConfig crm{};
  std::size_t with = 0, without = 0, flips = 0;
  for (std::uint64_t key = 0; key < 20000; ++key) {
    const std::vector<std::size_t> base{0, 1, 2};
    const std::vector<std::size_t> more{0, 1, 2, 3};
    const auto a = resolve_contention(base, crm, CoupledDraws{key, 0});
    const auto b = resolve_contention(more, crm, CoupledDraws{key, 0});
    for (std::size_t c : base) {
      without += a.delivered(c) ? 1 : 0;
      with += b.delivered(c) ? 1 : 0;
      flips += (!a.delivered(c) && b.delivered(c)) ? 1 : 0;
    }
  }
  CHECK(with < without);
  CHECK(flips * 20 < without - with);
}

TEST_CASE("slotted channel: windows close at their last slot") {
  SlottedChannel ch(CrmConfig{});
  ch.request(0, 10, 11);
  CHECK(ch.has_pending(0));
  CHECK_THROWS_AS(ch.request(0, 10, 12), ProtocolError);
  CHECK_THROWS_AS(ch.request(1, 5, 4), ConfigError);
  // slot 9: not yet open
  auto r9 = ch.step(9, [](std::size_t, std::size_t) { return 0.99; });
  CHECK(r9.events.empty());
  // slot 10: p1 = 1, alone on the channel
  auto r10 = ch.step(10, [](std::size_t, std::size_t) { return 0.5; });
  REQUIRE(r10.finished.size() == 1);
  CHECK(r10.finished[0].result == FinalResult::kSuccess);
  CHECK(r10.finished[0].success_slot == 10);
  CHECK(ch.idle());

  SlottedChannel ch2(CrmConfig{{0.5, 0.5, 0.5}, 3, 3});
  ch2.request(7, 1, 2);
  CHECK(ch2.step(1, [](std::size_t, std::size_t) { return 0.9; }).finished.empty());
  auto r = ch2.step(2, [](std::size_t, std::size_t) { return 0.9; });
  REQUIRE(r.finished.size() == 1);
  CHECK(r.finished[0].result == FinalResult::kDropped);
  CHECK(r.finished[0].transmissions == 0);
}

TEST_CASE("crm validation") {
  CHECK_THROWS_AS((CrmConfig{{1.0, 0.5}, 3, 3}.validate()), ConfigError);
  CHECK_THROWS_AS((CrmConfig{{1.0, 1.5, 0.5}, 3, 3}.validate()), ConfigError);
  CHECK_THROWS_AS((CrmConfig{{1.0, 0.5, 0.5}, 3, 2}.validate()), ConfigError);
  CHECK_THROWS_AS((CrmConfig{{}, 0, 3}.validate()), ConfigError);
  CHECK_NOTHROW(CrmConfig{}.validate());
}

TEST_CASE("traffic sources") {
  RngStream rng(1, 0, 0, StreamRole::kTraffic);
  TrafficSource off{BernoulliIid{0.0}}, on{BernoulliIid{1.0}};
  for (int i = 0; i < 1000; ++i) {
    CHECK_FALSE(traffic_step(off, rng));
    CHECK(traffic_step(on, rng));
  }
  TrafficSource markov{MarkovOnOff{0.2, 0.5}};
  std::size_t ones = 0;
  const std::size_t T = 1000000;
  for (std::size_t t = 0; t < T; ++t) ones += traffic_step(markov, rng) ? 1 : 0;
  CHECK(std::abs(static_cast<double>(ones) / T - 0.2 / 0.7) < 0.01);
  CHECK_THROWS_AS((TrafficSource{BernoulliIid{1.2}}.validate()), ConfigError);
  CHECK_THROWS_AS((TrafficSource{MarkovOnOff{-0.1, 0.5}}.validate()), ConfigError);
}
