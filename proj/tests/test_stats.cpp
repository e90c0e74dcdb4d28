#include "catch_amalgamated.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "ncsim/stats.hpp"
#include "oracles.hpp"

using namespace ncsim;
using namespace ncsim::stats;
using Catch::Matchers::WithinAbs;

TEST_CASE("standard normal pdf and cdf") {
  CHECK_THAT(std_normal_pdf(0.0), WithinAbs(0.3989422804014327, 1e-15));
  CHECK(std_normal_cdf(0.0) == 0.5);
  CHECK_THAT(std_normal_cdf(0.5), WithinAbs(0.6914624612740131, 1e-12));
  CHECK_THAT(normal_pdf(1.0, 1.0, 4.0), WithinAbs(0.3989422804014327 / 2.0, 1e-15));
}

TEST_CASE("truncated moments: closed form against quadrature") {
  CHECK_THAT(truncated_moments({0.0, 1.0, 0.0}).mean, WithinAbs(-std::sqrt(2.0 / std::numbers::pi), 1e-12));

  const double b = 0.5;
  const double mass = oracle::simpson([](double x) { return oracle::phi(x); }, -12.0, b);
  const double m1 = oracle::simpson([](double x) { return x * oracle::phi(x); }, -12.0, b) / mass;
  const double m2 = oracle::simpson([](double x) { return x * x * oracle::phi(x); }, -12.0, b) / mass;
  const auto m = truncated_moments({0.0, 1.0, b});
  CHECK_THAT(m.mean, WithinAbs(m1, 1e-9));
  CHECK_THAT(m.variance, WithinAbs(m2 - m1 * m1, 1e-9));
  CHECK_THAT(m.mean, WithinAbs(-0.509160, 1e-6));
  CHECK_THAT(m.variance, WithinAbs(0.4861754, 1e-6));

  const auto far = truncated_moments({0.0, 1.0, 10.0});
  CHECK_THAT(far.mean, WithinAbs(0.0, 1e-9));
  CHECK_THAT(far.variance, WithinAbs(1.0, 1e-9));
}

TEST_CASE("truncated moments: mean below the bound, variance shrinks") {
  for (double mu : {-2.0, 0.0, 1.5})
    for (double var : {0.25, 1.0, 9.0})
      for (double z : {-5.0, -1.0, 0.0, 0.7, 3.0}) {
        const double b = mu + z * std::sqrt(var);
        const auto m = truncated_moments({mu, var, b});
        CHECK(m.mean < b);
        CHECK(m.variance < var);
        CHECK(m.variance > 0.0);
      }
}

TEST_CASE("truncated moments: degenerate truncation is an error") {
  CHECK_THROWS_AS(truncated_moments({0.0, 1.0, -40.0}), NumericalError);
  CHECK_THROWS_AS(truncated_moments({0.0, 0.0, 1.0}), NumericalError);
}

TEST_CASE("adaptive quadrature") {
  CHECK_THAT(integrate([](double x) { return std::sin(x); }, 0.0, std::numbers::pi), WithinAbs(2.0, 1e-8));
  CHECK_THAT(integrate([](double x) { return std_normal_pdf(x); }, -10.0, 10.0), WithinAbs(1.0, 1e-8));
  CHECK_THAT(integrate([](double x) { return x * x; }, 2.0, 2.0), WithinAbs(0.0, 0.0));
}

TEST_CASE("compound density") {
  const TruncatedGaussian tg{0.0, 1.0, 0.5};
  SECTION("a = 0 is the noise density") {
    for (double e : {-2.0, 0.0, 0.3, 1.7})
      CHECK_THAT(compound_density(0.0, tg, 2.0, e), WithinAbs(normal_pdf(e, 0.0, 2.0), 1e-15));
  }
  SECTION("normalizes to one") {
    for (double a : {1.0, 0.5, -0.75}) {
      const double total = oracle::simpson([&](double e) { return compound_density(a, tg, 1.0, e); }, -12.0, 12.0, 4000);
      CHECK_THAT(total, WithinAbs(1.0, 1e-6));
    }
  }
  SECTION("matches a Monte Carlo oracle at 0") {
    // density of X + W at 0 is E[phi(0 - X)] over X ~ N(0,1) | X < 0.5
    std::mt19937_64 gen(11);
    std::normal_distribution<double> n01;
    oracle::Mean acc;
    while (acc.n < 2e6) {
      const double x = n01(gen);
      if (x < 0.5) acc.add(oracle::phi(-x));
    }
    CHECK(std::abs(compound_density(1.0, tg, 1.0, 0.0) - acc.mean()) < 3.0 * acc.se());
  }
}

TEST_CASE("conditional moments of the compound variable") {
  const TruncatedGaussian tg{0.0, 1.0, 0.5};
  SECTION("a = 0 reduces to the truncated noise") {
    const auto cm = conditional_moments_compound(0.0, tg, 2.0, 0.3);
    const auto tm = truncated_moments({0.0, 2.0, 0.3});
    CHECK_THAT(cm.mean, WithinAbs(tm.mean, 1e-12));
    CHECK_THAT(cm.variance, WithinAbs(tm.variance, 1e-12));
  }
  SECTION("far bound leaves the unconditioned mean") {
    const auto cm = conditional_moments_compound(1.0, tg, 1.0, 10.0);
    CHECK_THAT(cm.mean, WithinAbs(-0.509160, 1e-6));
    CHECK_THAT(cm.variance, WithinAbs(0.4861754 + 1.0, 1e-5));
  }
  SECTION("rejection-sampling oracle at c = 0.5") {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> n01;
    std::vector<double> es;
    std::size_t proposed = 0;
    while (es.size() < 1000000) {
      const double x = n01(gen);
      if (x >= 0.5) continue;
      ++proposed;
      const double e = x + n01(gen);
      if (e < 0.5) es.push_back(e);
    }
    oracle::Mean m;
    for (double e : es) m.add(e);
    oracle::Mean dev2;
    for (double e : es) dev2.add((e - m.mean()) * (e - m.mean()));
    const auto cm = conditional_moments_compound(1.0, tg, 1.0, 0.5);
    CHECK(std::abs(cm.mean - m.mean()) < 3.0 * m.se());
    CHECK(std::abs(cm.variance - dev2.mean()) < 3.0 * dev2.se());
    const double n = static_cast<double>(proposed);
    const double p_hat = static_cast<double>(es.size()) / n;
    CHECK(std::abs(cm.probability - p_hat) < 3.0 * std::sqrt(p_hat * (1 - p_hat) / n));
  }
}

TEST_CASE("root finding") {
  CHECK_THAT(find_root([](double x) { return x - 1.0; }, 0.0, 2.0), WithinAbs(1.0, 1e-12));
  CHECK_THAT(find_root([](double u) { return 2.0 * u + 1.0; }, -1.0, 0.0), WithinAbs(-0.5, 1e-12));
  CHECK_THAT(find_root([](double x) { return x * x * x - 2.0; }, 1.0, 2.0), WithinAbs(std::cbrt(2.0), 1e-9));
  CHECK_THROWS_AS(find_root([](double x) { return x * x + 1.0; }, -1.0, 1.0), NumericalError);

  const auto br = scan_bracket([](double x) { return std::cos(x); }, 0.0, 3.0, 30);
  REQUIRE(br);
  CHECK(br->first <= std::numbers::pi / 2);
  CHECK(br->second >= std::numbers::pi / 2);
  CHECK_FALSE(scan_bracket([](double x) { return 1.0 + x * x; }, -1.0, 1.0, 30));
}
