#pragma once

// Finite-difference semigroup on a truncated box with zero Dirichlet data.
//
// Unknowns are ordered node-major: index = node * m + component, nodes with
// axis 0 varying fastest. Diagonal fluxes use midpoint coefficients, cross
// terms D_h(Q^{hk} D_k u) use centered differences with coefficients at the
// neighbouring nodes, which keeps A_h symmetric for symmetric fields.

#include "semigroup_lab/coefficient_models.hpp"
#include "semigroup_lab/constants_lab.hpp"
#include "semigroup_lab/parallel.hpp"
#include "semigroup_lab/types.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace sglab {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Interior grid: N[l] unknown nodes per axis, spacing width / (N[l] + 1).
struct SimGrid {
  Box box;
  std::vector<int> N;

  static SimGrid uniform(const Box& b, int n) { return {b, std::vector<int>(b.lo.size(), n)}; }

  int dim() const { return static_cast<int>(N.size()); }
  double spacing(int l) const { return (box.hi(l) - box.lo(l)) / (N[l] + 1); }
  std::size_t node_count() const {
    std::size_t n = 1;
    for (int v : N) n *= static_cast<std::size_t>(v);
    return n;
  }
  double cell_volume() const {
    double v = 1;
    for (int l = 0; l < dim(); ++l) v *= spacing(l);
    return v;
  }
  std::vector<int> multi_index(std::size_t node) const {
    std::vector<int> ix(N.size());
    for (std::size_t l = 0; l < N.size(); ++l) {
      ix[l] = static_cast<int>(node % static_cast<std::size_t>(N[l]));
      node /= static_cast<std::size_t>(N[l]);
    }
    return ix;
  }
  /// Linear index, or -1 when the multi-index is on or beyond the boundary.
  long linear(const std::vector<int>& ix) const {
    long idx = 0, stride = 1;
    for (std::size_t l = 0; l < N.size(); ++l) {
      if (ix[l] < 0 || ix[l] >= N[l]) return -1;
      idx += ix[l] * stride;
      stride *= N[l];
    }
    return idx;
  }
  /// Coordinates of a (possibly fractional, possibly boundary) multi-index.
  VectorXd point(const std::vector<double>& ix) const {
    VectorXd x(dim());
    for (int l = 0; l < dim(); ++l) x(l) = box.lo(l) + (ix[l] + 1.0) * spacing(l);
    return x;
  }
  VectorXd point(const std::vector<int>& ix) const { return point(std::vector<double>(ix.begin(), ix.end())); }
  /// Distance in cells to the nearest boundary plane (1 for nodes next to it).
  int cells_to_boundary(const std::vector<int>& ix) const {
    int best = 1 << 30;
    for (std::size_t l = 0; l < N.size(); ++l) best = std::min({best, ix[l] + 1, N[l] - ix[l]});
    return best;
  }
};

struct AssemblyWarning {
  VectorXd witness;
  int axis = 0;
  double relative_change = 0;
};

struct DiscreteOperator {
  SparseMatrix A;
  SimGrid grid;
  int m = 1;
  std::string scheme = "flux-form: midpoint diagonal fluxes, node-centered cross terms, zero Dirichlet";
  std::size_t coarse_cells = 0;  // cells where the coefficients change by more than 20%
  std::optional<AssemblyWarning> worst_change;

  Eigen::Index size() const { return A.rows(); }
  double symmetry_defect() const {
    const double n = norm_inf(A);
    if (n == 0) return 0;
    SparseMatrix T = A.transpose();
    return norm_inf(SparseMatrix(A - T)) / n;
  }
  static double norm_inf(const SparseMatrix& M) {
    double best = 0;
    for (Eigen::Index r = 0; r < M.outerSize(); ++r) {
      double s = 0;
      for (SparseMatrix::InnerIterator it(M, r); it; ++it) s += std::abs(it.value());
      best = std::max(best, s);
    }
    return best;
  }
};

namespace detail {

inline MatrixXd full_block(const CoupledBlockSample& s, int h, int k) {
  return s.A(h, k) + s.Q(h, k) * MatrixXd::Identity(s.m, s.m);
}

inline CoupledBlockSample sample_finite(const CoefficientField& f, const VectorXd& x) {
  try {
    return f.sample(x);
  } catch (const PreconditionError&) {
    throw;
  } catch (const std::exception& e) {
    throw PreconditionError(std::string("nonfinite coefficient at node ") + format_point(x) + ": " + e.what(), x);
  }
}

inline double block_norm(const CoupledBlockSample& s) {
  double n = s.Q.cwiseAbs().maxCoeff();
  for (int h = 0; h < s.d; ++h)
    for (int k = 0; k < s.d; ++k) n = std::max(n, s.A(h, k).cwiseAbs().maxCoeff());
  return n;
}

}  // namespace detail

/// Assembles A_h for the operator sum D_h(Q^{hk} D_k u) - V u.
inline DiscreteOperator assemble(const CoefficientField& f, const SimGrid& g) {
  if (g.dim() != f.d || g.box.lo.size() != f.d) throw DimensionError("assemble: grid dimension differs from field");
  for (int n : g.N)
    if (n < 1) throw PreconditionError("assemble: every axis needs at least one interior node");
  const int d = f.d, m = f.m;
  const std::size_t nodes = g.node_count();
  std::vector<double> hs(d);
  for (int l = 0; l < d; ++l) hs[l] = g.spacing(l);

  using Triplet = Eigen::Triplet<double>;
  std::vector<std::vector<Triplet>> rows(nodes);
  std::vector<double> change(nodes * d, 0.0);

  parallel_for(nodes, [&](std::size_t node) {
    const auto ix = g.multi_index(node);
    const VectorXd x = g.point(ix);
    const CoupledBlockSample s = detail::sample_finite(f, x);
    auto& out = rows[node];
    const long row0 = static_cast<long>(node) * m;
    auto add = [&](long col_node, const MatrixXd& B) {
      if (col_node < 0) return;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
          if (B(i, j) != 0.0) out.emplace_back(row0 + i, col_node * m + j, B(i, j));
    };
    add(static_cast<long>(node), -s.V);
    const double here = detail::block_norm(s);
    for (int h = 0; h < d; ++h) {
      // diagonal flux with midpoint coefficients
      std::vector<double> mp(ix.begin(), ix.end()), mm(ix.begin(), ix.end());
      mp[h] += 0.5;
      mm[h] -= 0.5;
      const MatrixXd Cp = detail::full_block(detail::sample_finite(f, g.point(mp)), h, h) / (hs[h] * hs[h]);
      const MatrixXd Cm = detail::full_block(detail::sample_finite(f, g.point(mm)), h, h) / (hs[h] * hs[h]);
      auto up = ix, dn = ix;
      up[h] += 1;
      dn[h] -= 1;
      add(static_cast<long>(node), -(Cp + Cm));
      add(g.linear(up), Cp);
      add(g.linear(dn), Cm);

      std::vector<double> nb(ix.begin(), ix.end());
      nb[h] += 1.0;
      const double there = detail::block_norm(detail::sample_finite(f, g.point(nb)));
      if (here > 0 || there > 0) change[node * d + h] = std::abs(there - here) / std::max(here, there);

      for (int k = 0; k < d; ++k) {
        if (k == h) continue;
        // [C(x+e_h) D_k u(x+e_h) - C(x-e_h) D_k u(x-e_h)] / (2 h_h), D_k centered
        const double scale = 1.0 / (4.0 * hs[h] * hs[k]);
        for (int sh : {1, -1}) {
          auto c = ix;
          c[h] += sh;
          const MatrixXd C = detail::full_block(detail::sample_finite(f, g.point(c)), h, k) * (sh * scale);
          for (int sk : {1, -1}) {
            auto t = c;
            t[k] += sk;
            add(g.linear(t), sk * C);
          }
        }
      }
    }
  });

  std::vector<Triplet> all;
  std::size_t total = 0;
  for (const auto& r : rows) total += r.size();
  all.reserve(total);
  for (const auto& r : rows) all.insert(all.end(), r.begin(), r.end());

  DiscreteOperator op;
  op.grid = g;
  op.m = m;
  op.A.resize(static_cast<Eigen::Index>(nodes * m), static_cast<Eigen::Index>(nodes * m));
  op.A.setFromTriplets(all.begin(), all.end());
  op.A.makeCompressed();
  for (std::size_t i = 0; i < change.size(); ++i) {
    if (change[i] > 0.2) ++op.coarse_cells;
    if (change[i] > 0.2 && (!op.worst_change || change[i] > op.worst_change->relative_change))
      op.worst_change = AssemblyWarning{g.point(g.multi_index(i / d)), static_cast<int>(i % d), change[i]};
  }
  return op;
}

// ---------------------------------------------------------------------------
// time stepping
// ---------------------------------------------------------------------------

enum class TimeScheme { ImplicitEuler, CrankNicolson };

inline const char* scheme_name(TimeScheme s) {
  return s == TimeScheme::ImplicitEuler ? "implicit-euler" : "crank-nicolson";
}

class SolverError : public Error {
 public:
  SolverError(const std::string& what, int iterations, double residual)
      : Error(what), iterations_(iterations), residual_(residual) {}
  int iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

 private:
  int iterations_;
  double residual_;
};

struct SolverSettings {
  double tolerance = 1e-12;  // relative to the right-hand side
  int max_iterations = 20;   // refinement sweeps after the direct solve
};

struct StepInfo {
  int iterations = 0;  // refinement sweeps beyond the direct solve
  double residual = 0;  // relative
};

/// Factorizes I - theta dt A_h once and applies one time step per call.
class Stepper {
 public:
  Stepper(const DiscreteOperator& op, double dt, TimeScheme scheme, SolverSettings settings = {})
      : op_(&op), dt_(dt), scheme_(scheme), settings_(settings) {
    if (!(dt > 0) || !std::isfinite(dt)) throw PreconditionError("time step must be positive", std::nullopt, dt);
    const double theta = scheme == TimeScheme::ImplicitEuler ? 1.0 : 0.5;
    SparseMatrix I(op.size(), op.size());
    I.setIdentity();
    lhs_ = Eigen::SparseMatrix<double>(I - (theta * dt) * op.A);
    lhs_.makeCompressed();
    lu_ = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
    lu_->compute(lhs_);
    if (lu_->info() != Eigen::Success) throw SolverError("factorization failed: " + lu_->lastErrorMessage(), 0, NAN);
  }

  double dt() const { return dt_; }
  TimeScheme scheme() const { return scheme_; }

  VectorXcd step(const VectorXcd& u, StepInfo* info = nullptr) const {
    if (u.size() != op_->size()) throw DimensionError("step: state has wrong size");
    VectorXcd rhs = u;
    if (scheme_ == TimeScheme::CrankNicolson) rhs += (0.5 * dt_) * apply(u);
    VectorXd re = rhs.real(), im = rhs.imag();
    StepInfo a, b;
    VectorXd xr = solve(re, a), xi = solve(im, b);
    if (info) *info = {std::max(a.iterations, b.iterations), std::max(a.residual, b.residual)};
    VectorXcd out(u.size());
    out.real() = xr;
    out.imag() = xi;
    return out;
  }

  VectorXcd apply(const VectorXcd& u) const {
    VectorXcd out(u.size());
    out.real() = op_->A * u.real();
    out.imag() = op_->A * u.imag();
    return out;
  }

 private:
  VectorXd solve(const VectorXd& b, StepInfo& info) const {
    const double bn = b.norm();
    VectorXd x = VectorXd::Zero(b.size());
    if (bn == 0) return x;
    VectorXd r = b;
    double res = 1;
    int it = 0;
    for (; it <= settings_.max_iterations; ++it) {
      x += lu_->solve(r);
      r = b - lhs_ * x;
      res = r.norm() / bn;
      if (res <= settings_.tolerance) break;
    }
    info = {std::min(it, settings_.max_iterations), res};
    if (!(res <= settings_.tolerance))
      throw SolverError("linear solve did not reach tolerance after " + std::to_string(info.iterations) +
                            " refinement sweeps",
                        info.iterations, res);
    return x;
  }

  const DiscreteOperator* op_;
  double dt_;
  TimeScheme scheme_;
  SolverSettings settings_;
  Eigen::SparseMatrix<double> lhs_;
  std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu_;
};

inline VectorXcd step(const DiscreteOperator& op, const VectorXcd& u, double dt, TimeScheme scheme,
                      SolverSettings settings = {}) {
  return Stepper(op, dt, scheme, settings).step(u);
}

// ---------------------------------------------------------------------------
// discrete norms, initial data, audit
// ---------------------------------------------------------------------------

/// (h_1 ... h_d sum_nodes |u(node)|^p)^{1/p}.
inline double discrete_lp_norm(const VectorXcd& u, const SimGrid& g, int m, double p) {
  const std::size_t nodes = g.node_count();
  double mx = 0;
  for (std::size_t n = 0; n < nodes; ++n) mx = std::max(mx, u.segment(static_cast<Eigen::Index>(n * m), m).norm());
  if (mx == 0) return 0;
  const double s = deterministic_sum(nodes, 0.0, [&](std::size_t n) {
    return std::pow(u.segment(static_cast<Eigen::Index>(n * m), m).norm() / mx, p);
  });
  return mx * std::pow(g.cell_volume() * s, 1.0 / p);
}

/// Share of the squared l2 mass within two cells of the boundary.
inline double boundary_mass_fraction(const VectorXcd& u, const SimGrid& g, int m) {
  double edge = 0, total = 0;
  for (std::size_t n = 0; n < g.node_count(); ++n) {
    const double w = u.segment(static_cast<Eigen::Index>(n * m), m).squaredNorm();
    total += w;
    if (g.cells_to_boundary(g.multi_index(n)) <= 2) edge += w;
  }
  return total > 0 ? edge / total : 0.0;
}

/// Samples fn at the interior nodes.
template <class Fn>
VectorXcd sample_initial(const SimGrid& g, int m, Fn&& fn) {
  VectorXcd u(static_cast<Eigen::Index>(g.node_count() * m));
  for (std::size_t n = 0; n < g.node_count(); ++n) {
    const VectorXcd v = fn(g.point(g.multi_index(n)));
    if (v.size() != m) throw DimensionError("initial data has wrong component count");
    u.segment(static_cast<Eigen::Index>(n * m), m) = v;
  }
  if (!u.allFinite()) throw PreconditionError("initial data is not finite");
  return u;
}

/// The box must contain the support enlarged by 30% about its center.
inline void check_truncation_margin(const SimGrid& g, const Box& support) {
  for (int l = 0; l < g.dim(); ++l) {
    const double c = 0.5 * (support.lo(l) + support.hi(l)), r = 0.65 * (support.hi(l) - support.lo(l));
    if (c - r < g.box.lo(l) || c + r > g.box.hi(l))
      throw PreconditionError("simulation box does not contain the initial support with a 30% margin");
  }
}

struct EvolutionConfig {
  double dt = 1e-3;
  int steps = 100;
  TimeScheme scheme = TimeScheme::ImplicitEuler;
  SolverSettings solver;
  std::vector<double> p_list{2.0};
  double audit_tol = 1e-8;
  bool exploratory = false;  // allow exponents outside the certified window
};

struct ContractionViolation {
  int step = 0;  // step n means ||u^n|| > ||u^{n-1}|| (1 + tol)
  double p = 0;
  double magnitude = 0;  // ||u^n|| / ||u^{n-1}|| - 1
};

struct TrajectoryReport {
  std::vector<double> p_list;
  std::vector<double> times;
  std::vector<std::vector<double>> norms;  // norms[i][n] for p_list[i]
  std::vector<ContractionViolation> violations;
  double max_violation = 0;  // largest relative increase, 0 if none
  double analyticity_proxy = 0;
  double boundary_mass = 0;  // largest boundary share over the trajectory
  double max_solver_residual = 0;
  double audit_tol = 0;
  bool exploratory = false;
  std::vector<bool> inside_window;
};

inline TrajectoryReport evolve_and_audit(const DiscreteOperator& op, const VectorXcd& u0, const EvolutionConfig& cfg,
                                         const std::optional<Interval>& window = std::nullopt) {
  if (!u0.allFinite()) throw PreconditionError("initial data is not finite");
  if (cfg.steps < 0) throw PreconditionError("step count must be nonnegative");
  if (!(cfg.solver.tolerance < 1e-8)) throw PreconditionError("contraction audits need a solver tolerance below 1e-8");
  TrajectoryReport rep;
  rep.p_list = cfg.p_list;
  rep.audit_tol = cfg.audit_tol;
  rep.exploratory = cfg.exploratory;
  for (double p : cfg.p_list) {
    if (!(p >= 1) || !std::isfinite(p)) throw PreconditionError("audit exponent must be at least 1", std::nullopt, p);
    const bool in = !window || window->contains(p);
    if (!in && !cfg.exploratory)
      throw PreconditionError("exponent outside the certified window (set exploratory to audit it)", std::nullopt, p);
    rep.inside_window.push_back(in);
  }
  const Stepper stepper(op, cfg.dt, cfg.scheme, cfg.solver);
  const double n0 = discrete_lp_norm(u0, op.grid, op.m, 2.0);
  rep.norms.assign(cfg.p_list.size(), {});
  auto record = [&](const VectorXcd& u, int n) {
    rep.times.push_back(n * cfg.dt);
    for (std::size_t i = 0; i < cfg.p_list.size(); ++i) {
      const double v = discrete_lp_norm(u, op.grid, op.m, cfg.p_list[i]);
      if (!std::isfinite(v)) throw Error("nonfinite norm at step " + std::to_string(n));
      auto& row = rep.norms[i];
      if (!row.empty() && row.back() > 0) {
        const double inc = v / row.back() - 1;
        if (inc > cfg.audit_tol) rep.violations.push_back({n, cfg.p_list[i], inc});
        rep.max_violation = std::max(rep.max_violation, inc);
      }
      row.push_back(v);
    }
    rep.boundary_mass = std::max(rep.boundary_mass, boundary_mass_fraction(u, op.grid, op.m));
    if (n > 0 && n0 > 0)
      rep.analyticity_proxy =
          std::max(rep.analyticity_proxy, n * cfg.dt * discrete_lp_norm(stepper.apply(u), op.grid, op.m, 2.0) / n0);
  };
  VectorXcd u = u0;
  record(u, 0);
  for (int n = 1; n <= cfg.steps; ++n) {
    StepInfo info;
    try {
      u = stepper.step(u, &info);
    } catch (const SolverError& e) {
      throw SolverError(std::string("step ") + std::to_string(n) + ": " + e.what(), e.iterations(), e.residual());
    }
    rep.max_solver_residual = std::max(rep.max_solver_residual, info.residual);
    record(u, n);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// dumps
// ---------------------------------------------------------------------------

/// Matrix Market coordinate format; grid metadata travels in comment lines.
inline void write_matrix_market(std::ostream& os, const DiscreteOperator& op) {
  os.precision(17);
  os << "%%MatrixMarket matrix coordinate real general\n";
  os << "% scheme: " << op.scheme << "\n";
  os << "% m: " << op.m << "\n";
  for (int l = 0; l < op.grid.dim(); ++l)
    os << "% axis " << l << ": lo " << op.grid.box.lo(l) << " hi " << op.grid.box.hi(l) << " interior " << op.grid.N[l]
       << " spacing " << op.grid.spacing(l) << "\n";
  os << op.A.rows() << ' ' << op.A.cols() << ' ' << op.A.nonZeros() << "\n";
  for (Eigen::Index r = 0; r < op.A.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(op.A, r); it; ++it)
      os << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value() << "\n";
}

/// One row per step: step,t,norm_p<p>... (p printed with %g).
inline void write_norms_csv(std::ostream& os, const TrajectoryReport& rep) {
  os.precision(17);
  os << "step,t";
  for (double p : rep.p_list) {
    char buf[64];
    std::snprintf(buf, sizeof buf, ",norm_p%g", p);
    os << buf;
  }
  os << "\n";
  for (std::size_t n = 0; n < rep.times.size(); ++n) {
    os << n << ',' << rep.times[n];
    for (const auto& row : rep.norms) os << ',' << row[n];
    os << "\n";
  }
}

}  // namespace sglab
