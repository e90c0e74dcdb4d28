#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace ncsim {

// Roles keep per-episode streams apart: the same (episode, index) pair with
// different roles never shares draws.
enum class StreamRole : std::uint64_t {
  kPlant = 1,     // x0 and process noise of one loop
  kSensor = 2,    // measurement noise of one loop
  kNetwork = 3,   // contention coin flips
  kTraffic = 4,   // exogenous source activity
  kOracle = 5,    // test / oracle sampling
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_coordinates(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                                      std::uint64_t c, std::uint64_t d = 0) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  h = splitmix64(h ^ c);
  return splitmix64(h ^ d);
}

// Uniform in (0, 1) from the top 53 bits; never returns exactly 0.
inline double bits_to_open_unit(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

// Deterministic random stream addressed by (seed, episode, index, role).
// Identical coordinates give identical sequences on every platform: the
// engine is mt19937_64 and the normal transform is done here, not by
// std::normal_distribution.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t episode, std::uint64_t index, StreamRole role)
      : master_seed_(master_seed),
        episode_(episode),
        index_(index),
        role_(role),
        engine_(hash_coordinates(master_seed, episode, index, static_cast<std::uint64_t>(role))) {}

  double uniform() { return bits_to_open_unit(engine_()); }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  std::uint64_t master_seed() const { return master_seed_; }
  std::uint64_t episode() const { return episode_; }
  std::uint64_t index() const { return index_; }
  StreamRole role() const { return role_; }

 private:
  std::uint64_t master_seed_;
  std::uint64_t episode_;
  std::uint64_t index_;
  StreamRole role_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Stateless coupled uniform: one value per (stream key, a, b, c). Used where
// outcomes of different contenders must not shift each other's draws.
inline double coupled_uniform(std::uint64_t key, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return bits_to_open_unit(hash_coordinates(key, a, b, c, 0x5bd1e995ULL));
}

}  // namespace ncsim
