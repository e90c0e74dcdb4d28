#include "catch_amalgamated.hpp"

#include <cmath>
#include <vector>

#include "ncsim/control.hpp"

using namespace ncsim;
using Catch::Matchers::WithinAbs;

namespace {
const Matrix one = scalar_matrix(1.0);
}

TEST_CASE("Riccati recursion: hand-computed scalar cases") {
  const auto r1 = riccati_backward(one, one, one, one, one, 1);
  CHECK_THAT(r1.S[1](0, 0), WithinAbs(1.0, 1e-12));
  CHECK_THAT(r1.S[0](0, 0), WithinAbs(1.5, 1e-12));
  CHECK_THAT(r1.L[0](0, 0), WithinAbs(0.5, 1e-12));

  const auto r2 = riccati_backward(one, one, one, one, one, 2);
  CHECK_THAT(r2.S[2](0, 0), WithinAbs(1.0, 1e-12));
  CHECK_THAT(r2.S[1](0, 0), WithinAbs(1.5, 1e-12));
  CHECK_THAT(r2.S[0](0, 0), WithinAbs(1.6, 1e-12));
  CHECK_THAT(r2.L[1](0, 0), WithinAbs(0.5, 1e-12));
  CHECK_THAT(r2.L[0](0, 0), WithinAbs(0.6, 1e-12));
  CHECK_THAT(r2.input_weight[0](0, 0), WithinAbs(2.5, 1e-12));
}

TEST_CASE("Riccati recursion: no input") {
  const Matrix A = scalar_matrix(0.8);
  const auto r = riccati_backward(A, scalar_matrix(0.0), one, scalar_matrix(2.0), one, 5);
  double S = 1.0;
  for (std::size_t k = 5; k-- > 0;) {
    S = 2.0 + 0.64 * S;
    CHECK_THAT(r.S[k](0, 0), WithinAbs(S, 1e-12));
    CHECK(r.L[k](0, 0) == 0.0);
  }
}

TEST_CASE("Riccati recursion: monotone in Q1") {
  for (double a : {0.5, 1.0, 1.3})
    for (double b : {0.2, 1.0})
      for (double q : {0.0, 0.5, 1.0}) {
        const auto lo = riccati_backward(scalar_matrix(a), scalar_matrix(b), one, scalar_matrix(q), one, 8);
        const auto hi = riccati_backward(scalar_matrix(a), scalar_matrix(b), one, scalar_matrix(q + 0.25), one, 8);
        for (std::size_t k = 0; k <= 8; ++k) CHECK(hi.S[k](0, 0) >= lo.S[k](0, 0));
      }
}

TEST_CASE("Riccati recursion: matrix case stays symmetric PSD") {
  Matrix A(2, 2), B(2, 1);
  A << 1.0, 0.1, 0.0, 1.0;
  B << 0.005, 0.1;
  const auto r = riccati_backward(A, B, Matrix::Identity(2, 2), Matrix::Identity(2, 2), one, 50);
  for (const auto& S : r.S) {
    CHECK(is_symmetric(S));
    CHECK(is_psd(S));
  }
  CHECK_THROWS_AS(riccati_backward(A, B, one, Matrix::Identity(2, 2), one, 3), ConfigError);
  CHECK_THROWS_WITH(riccati_backward(A, B, Matrix::Identity(2, 2), Matrix::Identity(2, 2), scalar_matrix(0.0), 3),
                    Catch::Matchers::ContainsSubstring("Q2 must be positive definite"));
}

TEST_CASE("certainty-equivalent control") {
  CHECK(ce_control(scalar_matrix(0.5), scalar_vector(2.0))(0) == -1.0);
  CHECK(ce_control(scalar_matrix(0.5), scalar_vector(0.0))(0) == 0.0);
  const auto r2 = riccati_backward(one, one, one, one, one, 2);
  CHECK_THAT(ce_control(r2.L[0], scalar_vector(1.0))(0), WithinAbs(-0.6, 1e-12));
}

TEST_CASE("closed-form cost") {
  const auto r1 = riccati_backward(one, one, one, one, one, 1);
  const std::vector<Matrix> P{scalar_matrix(0.0)};
  CHECK_THAT(jdp_closed_form(r1, scalar_vector(0.0), one, one, P), WithinAbs(2.5, 1e-12));
  CHECK(jdp_closed_form(r1, scalar_vector(0.0), scalar_matrix(0.0), scalar_matrix(0.0), P) == 0.0);
  // P_{0|0} = 1 adds L0' (Q2 + S1) L0 = 0.25 · 2
  const std::vector<Matrix> P1{one};
  CHECK_THAT(jdp_closed_form(r1, scalar_vector(0.0), one, one, P1), WithinAbs(3.0, 1e-12));
  CHECK_THROWS_AS(jdp_closed_form(r1, scalar_vector(0.0), one, one, std::vector<Matrix>{}), ConfigError);
}

TEST_CASE("cost bookkeeping") {
  LoopTrace tr;
  tr.horizon = 3;
  CostWeights w;
  w.network_penalty = 2.0;
  for (std::size_t k = 0; k <= 3; ++k) {
    TraceStep s;
    s.k = k;
    s.x = scalar_vector(0.0);
    s.u = scalar_vector(0.0);
    s.delta = k < 3;
    tr.steps.push_back(s);
  }
  auto r = evaluate_cost(tr, w);
  CHECK(r.cost == 0.0);
  CHECK(r.transmissions == 3.0);
  CHECK(r.penalized_cost == 6.0);

  // the deterministic N = 2 rollout: u0 = -0.6, x1 = 0.4, u1 = -0.2, x2 = 0.2
  tr.horizon = 2;
  tr.steps = {};
  const double xs[] = {1.0, 0.4, 0.2}, us[] = {-0.6, -0.2, 0.0};
  for (std::size_t k = 0; k <= 2; ++k) {
    TraceStep s;
    s.k = k;
    s.x = scalar_vector(xs[k]);
    s.u = scalar_vector(us[k]);
    tr.steps.push_back(s);
  }
  CHECK_THAT(evaluate_cost(tr, CostWeights{}).cost, WithinAbs(1.6, 1e-12));
  tr.steps.pop_back();
  CHECK_THROWS_AS(evaluate_cost(tr, CostWeights{}), ConfigError);
}

TEST_CASE("two-step controller formulas") {
  CHECK_THAT(two_step_u1(1, 1, 1, 1, 1.0), WithinAbs(-0.5, 1e-15));
  CHECK(two_step_u1(1, 1, 1, 1, 0.0) == 0.0);
  CHECK(std::abs(two_step_u1(1, 1, 1, 1e12, 1.0)) < 1e-11);
  CHECK_THAT(ce_u0(1, 1, 1.5, 1, 1.0), WithinAbs(-0.6, 1e-15));
  CHECK(ce_u0(1, 1, 1.5, 1, 0.0) == 0.0);
  CHECK(ce_u0(1, 0, 1.5, 1, 1.0) == 0.0);
  CHECK_THAT(two_step_S1(TwoStepProblem{}), WithinAbs(1.5, 1e-15));
  CHECK_THAT(two_step_probe_weight(TwoStepProblem{}), WithinAbs(0.5, 1e-15));
}

TEST_CASE("two-step first input: dual term") {
  const TwoStepProblem p;
  SECTION("without the dual term the optimum is the CE input") {
    for (double x0 : {-1.0, 0.0, 0.7}) {
      const auto r = two_step_u0_optimal(p, true, x0, false);
      CHECK_THAT(r.optimal, WithinAbs(r.ce, 1e-9));
      CHECK_THAT(r.ce, WithinAbs(-0.6 * x0, 1e-12));
    }
    const auto r0 = two_step_u0_optimal(p, false, 0.0, false);
    CHECK_THAT(r0.xhat00, WithinAbs(-0.509160, 1e-6));
    CHECK_THAT(r0.optimal, WithinAbs(-0.6 * r0.xhat00, 1e-9));
  }
  SECTION("residual at the CE input is nonzero for delta0 = 1, x0 = 0") {
    const auto r = two_step_u0_optimal(p, true, 0.0);
    CHECK(r.ce == 0.0);
    CHECK(std::abs(r.residual_at_ce) > 1e-3);
    CHECK(std::abs(r.optimal - r.ce) > 1e-3);
    CHECK(std::abs(two_step_stationarity(p, true, 0.0, r.optimal).residual) < 1e-8);
  }
  SECTION("delta0 = 0 branch also has a gap") {
    const auto r = two_step_u0_optimal(p, false);
    CHECK(std::abs(r.residual_at_ce) > 1e-4);
    CHECK(std::abs(two_step_stationarity(p, false, 0.0, r.optimal).residual) < 1e-8);
  }
  SECTION("gap closes as the threshold moves to the tail") {
    double prev = std::numeric_limits<double>::infinity();
    for (double c : {0.5, 2.0, 4.0, 8.0}) {
      TwoStepProblem q;
      q.threshold = c;
      const auto r = two_step_u0_optimal(q, true, 0.0);
      const double gap = std::abs(r.optimal - r.ce);
      CHECK(gap < prev);
      prev = gap;
    }
    CHECK(prev < 1e-10);
  }
  SECTION("b = 0: the input has no effect") {
    TwoStepProblem q;
    q.b = 0.0;
    CHECK(two_step_u0_optimal(q, true, 0.3).optimal == 0.0);
  }
}
