#include <catch_amalgamated.hpp>

#include "semigroup_lab/constants_lab.hpp"
#include "support/scans.hpp"

#include <random>

using namespace sglab;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Rational q(long a, long b = 1) { return Rational(a) / Rational(b); }

}  // namespace

TEST_CASE("J for C = 1 and C = 1/2, exactly") {
  auto r1 = dissipativity_intervals(Real(q(1)));
  REQUIRE(r1.J.lo.exact);
  CHECK(*r1.J.lo.exact == q(5, 3));
  CHECK(*r1.J.hi.exact == q(3));
  CHECK(r1.J.str() == "[5/3, 3]");
  auto r2 = dissipativity_intervals(Real(q(1, 2)));
  CHECK(*r2.J.lo.exact == q(3, 2));
  CHECK(*r2.J.hi.exact == q(6));
}

TEST_CASE("condition window and domain window, exactly") {
  auto r1 = dissipativity_intervals(Real(q(1)));
  CHECK(r1.cond_p_window.str() == "[5/3, 5/2]");
  auto r4 = dissipativity_intervals(Real(q(1, 4)));
  CHECK(r4.domain_window.str() == "(7/4, 5/2)");
  CHECK_FALSE(r4.domain_window.contains(Real(q(7, 4))));
  CHECK(r4.domain_window.contains(Real(q(2))));
}

TEST_CASE("decimal inputs are read as their decimal rationals") {
  auto r = dissipativity_intervals(Real(0.2));
  CHECK(r.J.str() == "[9/7, 27]");
  CHECK(*Real(0.1).exact == q(1, 10));
  CHECK(*Real(1e-5).exact == q(1, 100000));
  CHECK(*Real(-2.5).exact == q(-5, 2));
  CHECK(*Real(1.5e20).exact == Rational(150000000000000000000.0));
}

TEST_CASE("Jtilde is closed below and open above") {
  auto r = dissipativity_intervals(Real(q(1)));
  CHECK(r.Jtilde.contains(Real(q(5, 3))));
  CHECK_FALSE(r.Jtilde.contains(Real(q(3))));
  CHECK(r.J.contains(Real(q(3))));
}

TEST_CASE("2 is in J and J_delta sits inside J") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> uc(0.01, 5.0), ud(0.0, 0.999);
  for (int i = 0; i < 500; ++i) {
    double C = uc(rng), dl = ud(rng);
    auto r = dissipativity_intervals(Real::inexact(C), Real::inexact(dl));
    CHECK(r.J.contains(2.0));
    CHECK(r.J_delta.contains(2.0));
    CHECK(r.J_delta.subset_of(r.J));
    CHECK(r.cond_p_window.subset_of(r.Jtilde));
  }
}

TEST_CASE("J_delta nesting on a delta grid") {
  for (double C : {0.05, 0.3, 0.7, 1.0, 2.5}) {
    Interval prev = j_delta_interval(Real(C), Real(0.0));
    for (int i = 1; i < 100; ++i) {
      Interval cur = j_delta_interval(Real(C), Real(i / 100.0));
      CHECK(cur.subset_of(prev));
      prev = cur;
    }
  }
}

TEST_CASE("J_delta is exactly the solution set of the quadratic condition") {
  // For p just inside an endpoint of J_delta the scan minimum is >= 0; just
  // outside it is negative.
  for (double C : {0.2, 0.5, 0.9, 1.0, 1.7}) {
    for (double dl : {0.0, 0.1, 0.4, 0.8}) {
      Interval Jd = j_delta_interval(Real::inexact(C), Real::inexact(dl));
      const double eps = 1e-6;
      CHECK(oracle::quad_scan_min(Jd.lo.value + eps, C, dl) >= -1e-12);
      CHECK(oracle::quad_scan_min(Jd.lo.value - eps, C, dl) < 0);
      CHECK(oracle::quad_scan_min(Jd.hi.value - eps, C, dl) >= -1e-12);
      CHECK(oracle::quad_scan_min(Jd.hi.value + eps, C, dl) < 0);
    }
  }
}

TEST_CASE("conditional window is self-conjugate") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> uc(0.01, 3.0), up(1.01, 8.0);
  for (int i = 0; i < 1000; ++i) {
    double C = uc(rng), p = up(rng);
    auto w = dissipativity_intervals(Real::inexact(C)).cond_p_window;
    CHECK(w.contains(p) == w.contains(p / (p - 1)));
  }
  // exact endpoint check: (5/3)' = 5/2
  auto w = dissipativity_intervals(Real(q(1))).cond_p_window;
  CHECK(w.contains(Real(q(5, 3))));
  CHECK(w.contains(Real(q(5, 2))));
}

TEST_CASE("intervals reject bad delta and negative C") {
  CHECK_THROWS_AS(dissipativity_intervals(Real(1.0), Real(1.0)), PreconditionError);
  CHECK_THROWS_AS(dissipativity_intervals(Real(1.0), Real(-0.1)), PreconditionError);
  CHECK_THROWS_AS(dissipativity_intervals(Real(-1.0)), PreconditionError);
}

TEST_CASE("C = 0 limit: no upper restriction") {
  auto r = dissipativity_intervals(Real(0.0));
  CHECK(r.J.lo.value == 1.0);
  CHECK(r.J.hi.infinite);
  CHECK(r.J.contains(1e6));
  CHECK(max_delta_for(Real(3.0), Real(0.0)).delta == 1.0);
  CHECK_THAT(max_delta_for(Real(1.5), Real(0.0)).delta, WithinAbs(0.5, 1e-15));
}

TEST_CASE("gp_min: special cases") {
  CHECK(gp_min(1, 4, 2, 0.7).min == -1.0);
  auto z = gp_min(1, 0, 3.3, 0.7);
  CHECK(z.min == -1.0);
  CHECK_FALSE(z.argmin.has_value());
  auto g = gp_min(1, 4, 3, 0.5);
  CHECK_THAT(g.min, WithinAbs(-1.0, 1e-15));
  CHECK_THAT(g.min, WithinAbs(oracle::gp_scan(1, 4, 3, 0.5), 1e-8));
  CHECK_THROWS_AS(gp_min(1, 4.1, 3, 0.5), PreconditionError);
  CHECK_THROWS_AS(gp_min(0, 0, 3, 0.5), PreconditionError);
}

TEST_CASE("gp_min agrees with a dense sigma scan") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ua(0.1, 10.0), uf(0.0, 1.0), up(1.1, 6.0), uc(0.0, 2.0);
  for (int i = 0; i < 100; ++i) {
    double A = ua(rng), B = 4 * A * uf(rng), p = up(rng), C = uc(rng);
    auto g = gp_min(A, B, p, C);
    CHECK_THAT(g.min, WithinAbs(oracle::gp_scan(A, B, p, C), 1e-8));
    if (g.argmin) CHECK_THAT(gp_value(A, B, p, C, *g.argmin), WithinAbs(g.min, 1e-12 * (1 + std::abs(g.min))));
  }
}

TEST_CASE("max_delta_for: endpoints and p = 2") {
  auto d2 = max_delta_for(Real(2.0), Real(0.3));
  CHECK(d2.delta == 1.0);
  CHECK(d2.supremum_not_attained);
  auto e = max_delta_for(Real(6.0), Real(0.5));
  CHECK(e.delta == 0.0);
  CHECK(e.out_of_range);  // 6 is the open upper end of Jtilde
  auto lo = max_delta_for(Real(q(3, 2)), Real(q(1, 2)));
  CHECK(lo.delta == 0.0);
  CHECK_FALSE(lo.out_of_range);
  CHECK(max_delta_for(Real(0.9), Real(0.5)).out_of_range);
  CHECK(max_delta_for(Real(7.0), Real(0.5)).out_of_range);
}

TEST_CASE("max_delta_for: quadratic characterization by t-scan") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> uc(0.05, 2.0), uf(0.02, 0.98);
  for (int i = 0; i < 60; ++i) {
    double C = uc(rng);
    auto r = dissipativity_intervals(Real::inexact(C));
    double p = r.Jtilde.lo.value + uf(rng) * (r.Jtilde.hi.value - r.Jtilde.lo.value);
    auto dr = max_delta_for(Real::inexact(p), Real::inexact(C));
    REQUIRE_FALSE(dr.out_of_range);
    CHECK(oracle::quad_scan_min(p, C, dr.delta) >= -1e-10);
    if (dr.delta + 1e-4 < 1.0) CHECK(oracle::quad_scan_min(p, C, dr.delta + 1e-4) < 0.0);
  }
}

TEST_CASE("theta and Lambda_2 at the reference point") {
  LambdaInputs in{2.0, 0.1, 0.0, 0.0, 1.0, 1.0};
  auto tl = theta_lambda(in);
  CHECK_THAT(tl.Theta, WithinAbs(0.8, 1e-15));
  CHECK_THAT(tl.Lambda, WithinAbs(0.55, 1e-14));
  // independent evaluation: 1 - 1^2 * 1^2 * 1.2^2 / (4 * 1 * 0.8)
  CHECK_THAT(tl.Lambda, WithinAbs(1 - 1.44 / 3.2, 1e-15));
}

TEST_CASE("theta_lambda rejects inputs outside the theory") {
  CHECK_THROWS_AS(theta_lambda({2.0, 0.6, 0, 0, 1, 1}), PreconditionError);
  CHECK_THROWS_AS(theta_lambda({1.7, 0.25, 0, 0, 1, 1}), PreconditionError);
  CHECK_THROWS_AS(theta_lambda({2.0, 0.1, 0, 0, 1, 0}), PreconditionError);
}

TEST_CASE("the two Lambda forms agree on random admissible inputs") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    LambdaInputs in;
    in.scriptC = 0.01 + 0.48 * u(rng);
    auto w = dissipativity_intervals(Real::inexact(in.scriptC)).domain_window;
    in.p = w.lo.value + (0.01 + 0.98 * u(rng)) * (w.hi.value - w.lo.value);
    in.c0 = 2 * u(rng);
    in.gamma = u(rng);
    in.C_gamma = u(rng);
    in.v0 = 0.2 + 5 * u(rng);
    auto tl = theta_lambda(in);
    CHECK(std::abs(tl.Lambda - tl.Lambda_alt) <= 1e-12 * std::max(1.0, std::abs(tl.Lambda)));
    // Lambda equals the closed-form optimum built from the mapped coefficients
    auto sol = appendixB_solve(appendixB_problem_for(in));
    CHECK_THAT(sol.sup, WithinAbs(tl.Lambda, 1e-10 * std::max(1.0, std::abs(tl.Lambda))));
  }
}

TEST_CASE("appendix B: symmetric instance") {
  AppendixBProblem pr;
  pr.x1 = {1, 1, 1, 1};
  pr.x2 = {1, 1, 1, 1};
  pr.e1 = 16;
  auto sol = appendixB_solve(pr);
  CHECK(sol.sup == 0.0);
  for (int i = 0; i < 4; ++i) CHECK(*sol.eps[i] == 4.0);
  CHECK(sol.slack == 4.0);
  CHECK(pr.psi_tilde1({*sol.eps[0], *sol.eps[1], *sol.eps[2], *sol.eps[3]}) >= 0.0);
}

TEST_CASE("appendix B: closed form vs numerical maximizer") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.05, 2.0);
  for (int i = 0; i < 20; ++i) {
    AppendixBProblem pr;
    for (int k = 0; k < 4; ++k) pr.x1[k] = u(rng), pr.x2[k] = u(rng);
    pr.e1 = 0.5 + 20 * u(rng);
    auto sol = appendixB_solve(pr);
    double num = oracle::appendixB_numeric_sup(pr);
    CHECK(std::abs(num - sol.sup) <= 1e-4 * std::max(1.0, std::abs(sol.sup)));
    CHECK(num <= sol.sup + 1e-9);
  }
}

TEST_CASE("appendix B: random feasible points never beat the supremum") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.05, 2.0), uf(0.0, 1.0);
  AppendixBProblem pr;
  for (int k = 0; k < 4; ++k) pr.x1[k] = u(rng), pr.x2[k] = u(rng);
  pr.e1 = 5.0;
  auto sol = appendixB_solve(pr);
  std::array<double, 4> e{*sol.eps[0], *sol.eps[1], *sol.eps[2], *sol.eps[3]};
  CHECK(pr.psi_tilde1(e) >= -1e-12);
  for (int i = 0; i < 1000; ++i) {
    std::array<double, 4> w{uf(rng), uf(rng), uf(rng), uf(rng)};
    double s = w[0] + w[1] + w[2] + w[3];
    double shrink = uf(rng);
    std::array<double, 4> eps;
    for (int k = 0; k < 4; ++k) eps[k] = shrink * pr.e1 * (w[k] / s) / pr.x1[k] + 1e-300;
    REQUIRE(pr.psi_tilde1(eps) >= -1e-12);
    CHECK(pr.psi2(eps) <= sol.sup + 1e-9);
  }
}

TEST_CASE("appendix B: C_gamma = 0 drops the b and d pairs") {
  LambdaInputs in{2.2, 0.1, 0.3, 0.8, 0.0, 1.5};
  AppendixBProblem pr = appendixB_problem_for(in);
  auto sol = appendixB_solve(pr);
  CHECK(sol.degenerate[1]);
  CHECK(sol.degenerate[3]);
  CHECK_FALSE(sol.eps[1].has_value());
  double expect = 1 - std::pow(std::sqrt(pr.x1[0] * pr.x2[0]) + std::sqrt(pr.x1[2] * pr.x2[2]), 2) / pr.e1;
  CHECK_THAT(sol.sup, WithinAbs(expect, 1e-14));
  CHECK_THAT(sol.sup, WithinAbs(oracle::appendixB_numeric_sup(pr), 1e-6));
  CHECK_THROWS_AS(appendixB_solve(pr, false), PreconditionError);
}

TEST_CASE("appendix B: everything vanishes") {
  LambdaInputs in{2.0, 0.1, 0.0, 0.0, 0.0, 1.0};
  auto sol = appendixB_solve(appendixB_problem_for(in));
  CHECK(sol.sup == 1.0);
}

TEST_CASE("appendix B: rejects nonpositive e1 and negative coefficients") {
  AppendixBProblem pr;
  pr.x1 = {1, 1, 1, 1};
  pr.x2 = {1, 1, 1, 1};
  pr.e1 = 0.0;
  CHECK_THROWS_AS(appendixB_solve(pr), PreconditionError);
  pr.e1 = 1.0;
  pr.x1[2] = -1.0;
  CHECK_THROWS_AS(appendixB_solve(pr), PreconditionError);
}

TEST_CASE("psi1 at the optimum equals the shift for p below 2") {
  LambdaInputs in{1.9, 0.1, 0.2, 0.5, 0.5, 1.0};
  auto pr = appendixB_problem_for(in);
  auto sol = appendixB_solve(pr);
  std::array<double, 4> e{*sol.eps[0], *sol.eps[1], *sol.eps[2], *sol.eps[3]};
  CHECK_THAT(pr.psi_tilde1(e), WithinAbs(0.0, 1e-12));
  CHECK_THAT(psi1_of(pr, in.p, e), WithinAbs(0.1, 1e-12));
}

TEST_CASE("domain-norm constants") {
  CHECK(domain_norm_constants(0, 1, 1).M1 == 0.25);
  CHECK(domain_norm_constants(1, 1, 1).M2 == 3.0);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.01, 5.0);
  for (int i = 0; i < 100; ++i) {
    double c1 = u(rng), K = u(rng), v0 = u(rng);
    auto mc = domain_norm_constants(c1, K, v0);
    CHECK(mc.M1 > 0);
    CHECK(mc.M2 > 0);
    // [2(1 + K + c1 K)]^{-1}, the displayed form
    CHECK_THAT(mc.M1, WithinRel(1.0 / (2 * (1 + K + c1 * K)), 1e-15));
    CHECK_THAT(mc.M2, WithinRel(1 + c1 + 1 / v0, 1e-15));
  }
  CHECK_THROWS_AS(domain_norm_constants(0, 0, 1), PreconditionError);
  CHECK_THROWS_AS(domain_norm_constants(0, 1, 0), PreconditionError);
}
