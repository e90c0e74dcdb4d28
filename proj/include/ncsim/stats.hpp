#pragma once

// Scalar Gaussian numerics: densities, one-sided truncated moments, the
// density of a·X + W with X truncated, adaptive quadrature and a bracketing
// root finder.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ncsim/error.hpp"

namespace ncsim::stats {

inline double std_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double normal_pdf(double x, double mean, double variance) {
  const double sd = std::sqrt(variance);
  return std_normal_pdf((x - mean) / sd) / sd;
}

// X ~ N(mean, variance) conditioned on X < upper.
struct TruncatedGaussian {
  double mean = 0.0;
  double variance = 1.0;
  double upper = 0.0;

  double sd() const { return std::sqrt(variance); }
  double standardized_upper() const { return (upper - mean) / sd(); }
  double mass() const { return std_normal_cdf(standardized_upper()); }
  double pdf(double x) const {
    return x < upper ? normal_pdf(x, mean, variance) / mass() : 0.0;
  }
};

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

inline constexpr double kMinConditioningMass = 1e-12;

inline void validate(const TruncatedGaussian& tg) {
  if (!(tg.variance > 0.0) || !std::isfinite(tg.variance))
    throw NumericalError("truncated Gaussian needs a positive finite variance");
  if (!(tg.mass() >= kMinConditioningMass))
    throw NumericalError("degenerate truncation: Pr(X < b) = " + std::to_string(tg.mass()));
}

// Closed-form one-sided truncated-normal moments (inverse Mills ratio).
inline Moments truncated_moments(const TruncatedGaussian& tg) {
  validate(tg);
  const double beta = tg.standardized_upper();
  const double mass = tg.mass();
  const double lambda = std_normal_pdf(beta) / mass;
  const double sd = tg.sd();
  Moments m;
  m.mean = tg.mean - sd * lambda;
  m.variance = tg.variance * (1.0 - beta * lambda - lambda * lambda);
  // 1 - βλ - λ² can lose all digits deep in the lower tail; the truncated
  // variance is positive and below σ², so clamp into that range.
  m.variance = std::clamp(m.variance, 0.0, tg.variance);
  return m;
}

struct QuadratureSpec {
  double abs_tol = 1e-8;
  std::size_t max_subdivisions = 200000;
  double window_sigmas = 10.0;  // integrate over mean ± window_sigmas · sd

  void validate() const {
    if (!(abs_tol > 0.0)) throw ConfigError("quadrature tolerance must be positive");
    if (!(window_sigmas > 0.0)) throw ConfigError("quadrature window must be nonempty");
    if (max_subdivisions == 0) throw ConfigError("quadrature needs at least one subdivision");
  }
};

// Adaptive Simpson on [lo, hi] with Richardson correction. Every panel is
// split at least `min_depth` times so narrow features are not stepped over.
template <typename F>
double integrate(F&& f, double lo, double hi, const QuadratureSpec& q = {}, int min_depth = 4) {
  q.validate();
  if (hi == lo) return 0.0;
  if (hi < lo) return -integrate(f, hi, lo, q, min_depth);

  struct Panel {
    double a, b, fa, fm, fb, whole, tol;
    int depth;
  };
  auto simpson = [](double a, double b, double fa, double fm, double fb) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  };

  const double fa = f(lo), fb = f(hi), fm = f(0.5 * (lo + hi));
  std::vector<Panel> stack{{lo, hi, fa, fm, fb, simpson(lo, hi, fa, fm, fb), q.abs_tol, 0}};
  double total = 0.0;
  std::size_t splits = 0;

  while (!stack.empty()) {
    const Panel p = stack.back();
    stack.pop_back();
    const double m = 0.5 * (p.a + p.b);
    const double lm = 0.5 * (p.a + m), rm = 0.5 * (m + p.b);
    const double flm = f(lm), frm = f(rm);
    const double left = simpson(p.a, m, p.fa, flm, p.fm);
    const double right = simpson(m, p.b, p.fm, frm, p.fb);
    const double delta = left + right - p.whole;
    if (p.depth >= min_depth && std::abs(delta) <= 15.0 * p.tol) {
      total += left + right + delta / 15.0;
      continue;
    }
    if (++splits > q.max_subdivisions)
      throw NumericalError("quadrature did not converge within " +
                           std::to_string(q.max_subdivisions) + " subdivisions");
    if (m == p.a || m == p.b) {
      total += left + right;  // interval at floating-point resolution
      continue;
    }
    stack.push_back({p.a, m, p.fa, flm, p.fm, left, 0.5 * p.tol, p.depth + 1});
    stack.push_back({m, p.b, p.fm, frm, p.fb, right, 0.5 * p.tol, p.depth + 1});
  }
  return total;
}

// Density of e = a·X + W at eps, where X ~ tg and W ~ N(0, noise_var)
// independent of X.
inline double compound_density(double a, const TruncatedGaussian& tg, double noise_var, double eps,
                               const QuadratureSpec& q = {}) {
  if (!(noise_var > 0.0)) throw ConfigError("noise variance must be positive");
  if (a == 0.0) return normal_pdf(eps, 0.0, noise_var);
  validate(tg);
  const double lo = tg.mean - q.window_sigmas * tg.sd();
  const double hi = std::min(tg.upper, tg.mean + q.window_sigmas * tg.sd());
  if (hi <= lo) throw NumericalError("truncation bound lies below the integration window");
  const double mass = tg.mass();
  auto integrand = [&](double x) {
    return normal_pdf(x, tg.mean, tg.variance) / mass * normal_pdf(eps - a * x, 0.0, noise_var);
  };
  return std::max(0.0, integrate(integrand, lo, hi, q));
}

// Integration window for e = a·X + W: centred on E[e], ±window·sd(e).
inline std::pair<double, double> compound_window(double a, const TruncatedGaussian& tg,
                                                 double noise_var, const QuadratureSpec& q) {
  const Moments x = truncated_moments(tg);
  const double centre = a * x.mean;
  const double sd = std::sqrt(a * a * x.variance + noise_var);
  return {centre - q.window_sigmas * sd, centre + q.window_sigmas * sd};
}

struct ConditionedMoments {
  double mean = 0.0;
  double variance = 0.0;
  double probability = 0.0;  // Pr(e < c)
};

// Moments of e = a·X + W conditioned on e < c, integrated against
// compound_density.
inline ConditionedMoments conditional_moments_compound(double a, const TruncatedGaussian& tg,
                                                       double noise_var, double c,
                                                       const QuadratureSpec& q = {}) {
  if (!(noise_var > 0.0)) throw ConfigError("noise variance must be positive");
  if (a == 0.0) {
    const TruncatedGaussian w{0.0, noise_var, c};
    if (!(w.mass() >= kMinConditioningMass))
      throw NumericalError("degenerate conditioning: Pr(e < c) below 1e-12");
    const Moments m = truncated_moments(w);
    return {m.mean, m.variance, w.mass()};
  }
  auto [lo, hi] = compound_window(a, tg, noise_var, q);
  hi = std::min(hi, c);
  if (hi <= lo) throw NumericalError("degenerate conditioning: bound below integration window");

  auto density = [&](double e) { return compound_density(a, tg, noise_var, e, q); };
  const double prob = integrate(density, lo, hi, q);
  if (!(prob >= kMinConditioningMass))
    throw NumericalError("degenerate conditioning: Pr(e < c) below 1e-12");
  const double mean = integrate([&](double e) { return e * density(e); }, lo, hi, q) / prob;
  const double var =
      integrate([&](double e) { return (e - mean) * (e - mean) * density(e); }, lo, hi, q) / prob;
  return {mean, std::max(0.0, var), prob};
}

// Bracketing root finder: secant steps on even iterations (when they land
// inside the bracket), bisection on odd ones, so the bracket at least halves
// every two iterations.
template <typename F>
double find_root(F&& f, double lo, double hi, double tol = 1e-12, int max_iter = 500) {
  if (!(tol > 0.0)) throw ConfigError("root tolerance must be positive");
  if (lo > hi) std::swap(lo, hi);
  double flo = f(lo), fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if (!(flo * fhi < 0.0)) throw NumericalError("find_root: no sign change in bracket");

  for (int it = 0; it < max_iter; ++it) {
    if (hi - lo <= tol) return 0.5 * (lo + hi);
    double x = lo - flo * (hi - lo) / (fhi - flo);
    if (it % 2 == 1 || !std::isfinite(x) || x <= lo || x >= hi) x = 0.5 * (lo + hi);
    const double fx = f(x);
    if (std::abs(fx) <= tol || fx == 0.0) return x;
    if ((fx < 0.0) == (flo < 0.0)) {
      lo = x;
      flo = fx;
    } else {
      hi = x;
      fhi = fx;
    }
  }
  throw NumericalError("find_root: iteration limit reached");
}

// First sign change of f on a uniform grid over [lo, hi].
template <typename F>
std::optional<std::pair<double, double>> scan_bracket(F&& f, double lo, double hi,
                                                      std::size_t steps = 200) {
  double x0 = lo, f0 = f(lo);
  for (std::size_t i = 1; i <= steps; ++i) {
    const double x1 = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps);
    const double f1 = f(x1);
    if (f0 == 0.0) return std::pair{x0, x0};
    if (f0 * f1 <= 0.0) return std::pair{x0, x1};
    x0 = x1;
    f0 = f1;
  }
  return std::nullopt;
}

}  // namespace ncsim::stats
