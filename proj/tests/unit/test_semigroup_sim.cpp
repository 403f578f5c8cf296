#include <catch_amalgamated.hpp>

#include "semigroup_lab/families.hpp"
#include "semigroup_lab/form_quadrature.hpp"
#include "semigroup_lab/semigroup_sim.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace sglab;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

SamplePlan spot(int d) { return SamplePlan::random(Box::cube(d, -1.0, 1.0), 16, 3); }

VectorXcd gaussian_data(const SimGrid& g, int m, double s) {
  return sample_initial(g, m, [&](const VectorXd& x) -> VectorXcd {
    VectorXcd v(m);
    for (int i = 0; i < m; ++i) v(i) = (1.0 + 0.5 * i) * std::exp(-x.squaredNorm() / (2 * s * s) + 0.1 * i * x(0));
    return v;
  });
}

MatrixXd dense(const DiscreteOperator& op) { return MatrixXd(op.A); }

}  // namespace

TEST_CASE("1-d Laplacian stencil") {
  auto f = families::heat(1, 1);
  auto g = SimGrid::uniform(Box::cube(1, 0.0, 1.0), 5);
  auto M = dense(assemble(f, g));
  const double h2 = 1.0 / 36;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      const double want = i == j ? -2 / h2 : (std::abs(i - j) == 1 ? 1 / h2 : 0.0);
      CHECK_THAT(M(i, j), WithinAbs(want, 1e-9));
    }
}

TEST_CASE("constant potential shifts the diagonal blocks") {
  auto g = SimGrid::uniform(Box::cube(2, -1.0, 1.0), 6);
  MatrixXd V(2, 2);
  V << 1.5, 0.2, 0.2, 0.7;
  auto a = assemble(families::case_II(2, 2, 0.2, true, 0.3, 1, families::Potential::zero(), spot(2)), g);
  auto b = assemble(families::case_II(2, 2, 0.2, true, 0.3, 1, families::Potential::constant(V), spot(2)), g);
  MatrixXd D = dense(b) - dense(a);
  for (Eigen::Index n = 0; n < 36; ++n) {
    CHECK((D.block(2 * n, 2 * n, 2, 2) + V).cwiseAbs().maxCoeff() <= 1e-12);
    D.block(2 * n, 2 * n, 2, 2).setZero();
  }
  CHECK(D.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("symmetric fields assemble to symmetric matrices") {
  auto g = SimGrid::uniform(Box::cube(2, -1.5, 1.5), 9);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto f = families::case_II(2, 3, 0.2, true, 0.4, seed, families::Potential::weight(1.0, 0.5), spot(2));
    auto op = assemble(f, g);
    CHECK(op.symmetry_defect() <= 1e-12);
  }
  // an antisymmetric Q part breaks symmetry
  auto f = families::diag_antisym(2, 2, 0.5, 0.3, 0.05, 0.2, 2, families::Potential::zero(), spot(2));
  CHECK(assemble(f, g).symmetry_defect() > 1e-6);
}

TEST_CASE("3-d symmetric field is symmetric and row sparsity is bounded") {
  auto g = SimGrid::uniform(Box::cube(3, -1.0, 1.0), 5);
  auto f = families::case_II(3, 2, 0.3, true, 0.2, 4, families::Potential::zero(), spot(3));
  auto op = assemble(f, g);
  CHECK(op.symmetry_defect() <= 1e-12);
  const int d = 3, m = 2;
  const long bound = (2 * d + 1 + 2 * d * (d - 1)) * m;
  for (Eigen::Index r = 0; r < op.A.rows(); ++r) CHECK(op.A.row(r).nonZeros() <= bound);
}

TEST_CASE("interior rows annihilate constants") {
  auto g = SimGrid::uniform(Box::cube(2, -1.0, 1.0), 10);
  auto f = families::diag_antisym(2, 2, 0.5, 0.3, 0.05, 0.6, 7, families::Potential::zero(), spot(2));
  auto op = assemble(f, g);
  VectorXd one = VectorXd::Ones(op.size());
  VectorXd r = op.A * one;
  const double scale = DiscreteOperator::norm_inf(op.A);
  for (std::size_t n = 0; n < g.node_count(); ++n) {
    if (g.cells_to_boundary(g.multi_index(n)) <= 1) continue;
    for (int i = 0; i < 2; ++i) CHECK(std::abs(r(static_cast<Eigen::Index>(2 * n + i))) <= 1e-12 * scale);
  }
}

TEST_CASE("flux form matches the continuous operator at second order") {
  auto f = families::case_II(2, 2, 0.2, true, 0.5, 9, families::Potential::constant(MatrixXd::Identity(2, 2)), spot(2));
  auto exact = [](const VectorXd& x) -> VectorXcd {
    VectorXcd v(2);
    v(0) = std::exp(-x.squaredNorm());
    v(1) = std::exp(-2 * x.squaredNorm() + x(0));
    return v;
  };
  auto u = mixture({gaussian_bump((VectorXcd(2) << 1.0, 0.0).finished(), VectorXd::Zero(2), VectorXd::Constant(2, std::sqrt(0.5))),
                    gaussian_bump((VectorXcd(2) << 0.0, std::exp(0.125)).finished(), (VectorXd(2) << 0.25, 0.0).finished(),
                                  VectorXd::Constant(2, 0.5))});
  const VectorXd x = (VectorXd(2) << 0.3, -0.9).finished();
  REQUIRE((u.value(x) - exact(x)).norm() <= 1e-12);
  const VectorXcd Au = apply_operator(f, u, x);
  double prev = 0;
  for (int n : {9, 19, 39, 79}) {
    // grids on [-2.7, 3.3]^2 with x as a node
    auto g = SimGrid::uniform(Box{VectorXd::Constant(2, -2.7), VectorXd::Constant(2, 3.3)}, n);
    auto op = assemble(f, g);
    auto v = sample_initial(g, 2, [&](const VectorXd& y) { return u.value(y); });
    VectorXd Av = op.A * v.real();
    std::vector<int> ix(2);
    for (int l = 0; l < 2; ++l) ix[l] = static_cast<int>(std::lround((x(l) + 2.7) / g.spacing(l) - 1));
    REQUIRE((g.point(ix) - x).norm() <= 1e-12);
    const long node = g.linear(ix);
    const double err = (Av.segment(2 * node, 2) - Au.real()).norm();
    if (prev > 0) CHECK(prev / err >= 3.0);
    prev = err;
  }
}

TEST_CASE("coarse grids on fast-varying coefficients are flagged") {
  auto f = families::case_I(1, 1, 0.0, 5.0, 1, families::Potential::zero(), spot(1));
  auto coarse = assemble(f, SimGrid::uniform(Box::cube(1, -3.0, 3.0), 5));
  CHECK(coarse.coarse_cells > 0);
  REQUIRE(coarse.worst_change);
  CHECK(coarse.worst_change->relative_change > 0.2);
  auto fine = assemble(f, SimGrid::uniform(Box::cube(1, -3.0, 3.0), 400));
  CHECK(fine.coarse_cells == 0);
}

TEST_CASE("nonfinite coefficients are reported with the node") {
  auto f = families::heat(1, 1);
  f.v_mat = [](const VectorXd& x) -> MatrixXd { return MatrixXd::Constant(1, 1, x(0) > 0.4 ? NAN : 0.0); };
  try {
    assemble(f, SimGrid::uniform(Box::cube(1, 0.0, 1.0), 9));
    FAIL("expected an error");
  } catch (const PreconditionError& e) {
    REQUIRE(e.witness());
    CHECK((*e.witness())(0) > 0.4);
  }
}

TEST_CASE("zero operator leaves the state unchanged") {
  DiscreteOperator op;
  op.grid = SimGrid::uniform(Box::cube(1, 0.0, 1.0), 7);
  op.A.resize(7, 7);
  VectorXcd u = VectorXcd::Random(7);
  for (auto s : {TimeScheme::ImplicitEuler, TimeScheme::CrankNicolson}) CHECK((step(op, u, 0.1, s) - u).norm() == 0.0);
}

TEST_CASE("implicit Euler contracts in l2 for the heat system") {
  auto op = assemble(families::heat(1, 1), SimGrid::uniform(Box::cube(1, 0.0, 1.0), 60));
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n01;
  Stepper st(op, 1e-3, TimeScheme::ImplicitEuler);
  for (int t = 0; t < 50; ++t) {
    VectorXcd u(op.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = Complex(n01(rng), n01(rng));
    CHECK(st.step(u).norm() <= u.norm());
  }
}

TEST_CASE("eigenvector of A_h is scaled by 1/(1 - dt lambda)") {
  auto f = families::case_II(1, 2, 0.3, true, 0.5, 3, families::Potential::weight(1.0, 1.0), spot(1));
  auto op = assemble(f, SimGrid::uniform(Box::cube(1, -2.0, 2.0), 40));
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(dense(op));
  Eigen::Index k;
  es.eigenvalues().cwiseAbs().minCoeff(&k);
  const double lam = es.eigenvalues()(k);
  const VectorXcd v = es.eigenvectors().col(k).cast<Complex>();
  const double dt = 0.05;
  CHECK((step(op, v, dt, TimeScheme::ImplicitEuler) - v / (1 - dt * lam)).norm() <= 1e-10);
  CHECK((step(op, v, dt, TimeScheme::CrankNicolson) - v * ((1 + dt * lam / 2) / (1 - dt * lam / 2))).norm() <= 1e-10);
}

TEST_CASE("solver failure carries iterations and residual") {
  auto op = assemble(families::heat(1, 1), SimGrid::uniform(Box::cube(1, 0.0, 1.0), 30));
  SolverSettings s;
  s.tolerance = 0.0;
  s.max_iterations = 2;
  try {
    step(op, VectorXcd::Ones(op.size()), 0.01, TimeScheme::ImplicitEuler, s);
    FAIL("expected an error");
  } catch (const SolverError& e) {
    CHECK(e.iterations() == 2);
    CHECK(e.residual() >= 0);
  }
  CHECK_THROWS_AS(Stepper(op, 0.0, TimeScheme::ImplicitEuler), PreconditionError);
}

TEST_CASE("heat audit in d = 1 has no contraction violations") {
  auto g = SimGrid::uniform(Box::cube(1, -4.0, 4.0), 128);
  auto op = assemble(families::heat(1, 1), g);
  auto u0 = gaussian_data(g, 1, 0.4);
  EvolutionConfig cfg;
  cfg.dt = 1e-3;
  cfg.steps = 200;
  cfg.p_list = {2.0};
  cfg.audit_tol = 1e-10;
  auto r = evolve_and_audit(op, u0, cfg);
  CHECK(r.violations.empty());
  cfg.p_list = {1.8, 2.2};
  cfg.audit_tol = 1e-8;
  r = evolve_and_audit(op, u0, cfg);
  CHECK(r.violations.empty());
  CHECK(r.max_violation <= cfg.audit_tol);
  CHECK(r.times.size() == 201);
  CHECK(r.norms[0].back() < r.norms[0].front());
  CHECK(std::isfinite(r.analyticity_proxy));
  CHECK(r.analyticity_proxy > 0);
  CHECK(r.boundary_mass < 1e-10);
}

TEST_CASE("coupled field near the window edge is audited as a diagnostic") {
  auto f = families::case_II(2, 2, 0.2, true, 0.0, 5, families::Potential::zero(), spot(2));
  auto g = SimGrid::uniform(Box::cube(2, -3.0, 3.0), 32);
  auto op = assemble(f, g);
  auto u0 = gaussian_data(g, 2, 0.5);
  const auto win = dissipativity_intervals(Real::inexact(0.2)).cond_p_window;
  EvolutionConfig cfg;
  cfg.dt = 2e-3;
  cfg.steps = 40;
  cfg.p_list = {win.lo.value * 1.001, 2.0, win.hi.value * 0.999};
  auto r = evolve_and_audit(op, u0, cfg, win);
  CHECK(r.max_violation <= cfg.audit_tol * 10);
  cfg.p_list = {40.0};
  CHECK_THROWS_AS(evolve_and_audit(op, u0, cfg, win), PreconditionError);
  cfg.exploratory = true;
  auto e = evolve_and_audit(op, u0, cfg, win);
  CHECK_FALSE(e.inside_window[0]);
}

TEST_CASE("violations list matches the maximum violation") {
  auto f = families::diag_antisym(2, 2, 0.5, 0.3, 0.05, 0.0, 2, families::Potential::zero(), spot(2));
  auto g = SimGrid::uniform(Box::cube(2, -3.0, 3.0), 24);
  auto op = assemble(f, g);
  EvolutionConfig cfg;
  cfg.dt = 5e-3;
  cfg.steps = 30;
  cfg.p_list = {1.5, 2.0, 3.0};
  for (double tol : {1e-8, 0.0, -1.0}) {
    cfg.audit_tol = tol;
    auto r = evolve_and_audit(op, gaussian_data(g, 2, 0.6), cfg);
    CHECK(r.violations.empty() == (r.max_violation <= tol));
  }
}

TEST_CASE("refinement orders for the 1-d heat equation") {
  const double pi = std::numbers::pi;
  auto f = families::heat(1, 1);
  const double T = 0.1;
  auto run = [&](int N, double dt, TimeScheme s) {
    auto g = SimGrid::uniform(Box::cube(1, 0.0, 1.0), N);
    auto op = assemble(f, g);
    auto u = sample_initial(g, 1, [&](const VectorXd& x) { return VectorXcd::Constant(1, std::sin(pi * x(0))); });
    Stepper st(op, dt, s);
    const int n = static_cast<int>(std::lround(T / dt));
    for (int i = 0; i < n; ++i) u = st.step(u);
    auto exact = sample_initial(g, 1, [&](const VectorXd& x) {
      return VectorXcd::Constant(1, std::exp(-pi * pi * T) * std::sin(pi * x(0)));
    });
    return discrete_lp_norm(u - exact, g, 1, 2.0);
  };
  // space: Crank-Nicolson with a tiny step
  std::vector<double> es;
  for (int N : {7, 15, 31}) es.push_back(run(N, 1e-4, TimeScheme::CrankNicolson));
  for (std::size_t i = 1; i < es.size(); ++i) CHECK(es[i - 1] / es[i] >= 1.8 * 1.8);
  // time: implicit Euler on a fine grid
  std::vector<double> et;
  for (double dt : {0.02, 0.01, 0.005}) et.push_back(run(255, dt, TimeScheme::ImplicitEuler));
  for (std::size_t i = 1; i < et.size(); ++i) CHECK(et[i - 1] / et[i] >= 1.8);
}

TEST_CASE("discrete norms") {
  auto g = SimGrid::uniform(Box::cube(2, 0.0, 1.0), 3);
  VectorXcd u = VectorXcd::Zero(18);
  u(0) = Complex(3.0, 4.0);
  CHECK_THAT(discrete_lp_norm(u, g, 2, 2.0), WithinRel(5.0 / 4.0, 1e-14));
  CHECK_THAT(discrete_lp_norm(u, g, 2, 1.0), WithinRel(5.0 / 16.0, 1e-14));
  CHECK(discrete_lp_norm(VectorXcd::Zero(18), g, 2, 1.5) == 0.0);
  CHECK(boundary_mass_fraction(u, g, 2) == 1.0);
}

TEST_CASE("truncation margin") {
  auto g = SimGrid::uniform(Box::cube(1, -4.0, 4.0), 10);
  CHECK_NOTHROW(check_truncation_margin(g, Box::cube(1, -3.0, 3.0)));
  CHECK_THROWS_AS(check_truncation_margin(g, Box::cube(1, -3.5, 3.5)), PreconditionError);
}

TEST_CASE("dumps") {
  auto g = SimGrid::uniform(Box::cube(1, 0.0, 1.0), 3);
  auto op = assemble(families::heat(1, 1), g);
  std::ostringstream mm;
  write_matrix_market(mm, op);
  const std::string s = mm.str();
  CHECK(s.rfind("%%MatrixMarket matrix coordinate real general\n", 0) == 0);
  CHECK(s.find("\n3 3 7\n") != std::string::npos);
  CHECK(s.find("\n1 1 -32\n") != std::string::npos);

  EvolutionConfig cfg;
  cfg.steps = 2;
  cfg.p_list = {1.5, 2.0};
  auto r = evolve_and_audit(op, VectorXcd::Ones(3), cfg);
  std::ostringstream csv;
  write_norms_csv(csv, r);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,t,norm_p1.5,norm_p2");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 3);
}
