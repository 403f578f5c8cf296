#pragma once

// Coefficient families over R^d, sample plans, builders for the standard
// example classes, and sample-based certification of the structural
// hypotheses (positivity of Q, the constants c0 and scriptC, positivity of V,
// the log-weight constant K, the sector constant c_V and the potential-weight
// conditions).

#include "semigroup_lab/matrix_forms.hpp"
#include "semigroup_lab/parallel.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace sglab {

/// A field evaluation failed or produced unusable values at a point.
class FieldEvaluationError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

using MatrixFn = std::function<MatrixXd(const VectorXd&)>;
using BlockFn = std::function<BlockArray(const VectorXd&)>;
/// Partial derivatives: element l is the derivative along x_l.
using MatrixGradFn = std::function<std::vector<MatrixXd>(const VectorXd&)>;
using BlockGradFn = std::function<std::vector<BlockArray>(const VectorXd&)>;

struct ClaimedConstants {
  std::string family;
  std::optional<double> c0;
  std::optional<double> scriptC;
  std::optional<double> scriptC_alt;  // a second published bound, when there is one
};

struct CoefficientField {
  int d = 0;
  int m = 0;
  MatrixFn q;
  BlockFn a;
  MatrixFn v_mat;
  std::optional<MatrixGradFn> grad_q;
  std::optional<BlockGradFn> grad_a;
  ClaimedConstants claims;
  double h_fd = 1e-5;  // central-difference step is h_fd * (1 + |x|)

  bool has_analytic_gradients() const { return grad_q.has_value() && grad_a.has_value(); }

  /// Evaluates Q, A, V at x and validates shapes and finiteness.
  CoupledBlockSample sample(const VectorXd& x) const {
    if (x.size() != d) throw DimensionError("CoefficientField: point has wrong dimension");
    try {
      CoupledBlockSample s;
      s.d = d;
      s.m = m;
      s.Q = q(x);
      s.A = a ? a(x) : BlockArray(d, m);
      s.V = v_mat ? v_mat(x) : MatrixXd::Zero(m, m);
      s.validate();
      return s;
    } catch (const FieldEvaluationError&) {
      throw;
    } catch (const std::exception& e) {
      throw FieldEvaluationError(std::string("field evaluation failed at ") + format_point(x) + ": " + e.what(), x);
    }
  }

  /// d_l Q at x; falls back to central differences (and sets *used_fd).
  std::vector<MatrixXd> dq(const VectorXd& x, bool* used_fd = nullptr) const {
    if (grad_q) return (*grad_q)(x);
    if (used_fd) *used_fd = true;
    return central_diff<MatrixXd>(x, [&](const VectorXd& y) { return q(y); },
                                  [](const MatrixXd& a, const MatrixXd& b, double s) -> MatrixXd { return (a - b) * s; });
  }

  std::vector<BlockArray> da(const VectorXd& x, bool* used_fd = nullptr) const {
    if (!a) return std::vector<BlockArray>(d, BlockArray(d, m));
    if (grad_a) return (*grad_a)(x);
    if (used_fd) *used_fd = true;
    return central_diff<BlockArray>(x, [&](const VectorXd& y) { return a(y); },
                                    [](const BlockArray& a, const BlockArray& b, double s) { return s * (a - b); });
  }

  /// Full coefficient blocks Q^{hk} = q_hk I + A^{hk}.
  static BlockArray full_blocks(const CoupledBlockSample& s) {
    BlockArray out = s.A;
    for (int h = 0; h < s.d; ++h)
      for (int k = 0; k < s.d; ++k) out(h, k) += s.Q(h, k) * MatrixXd::Identity(s.m, s.m);
    return out;
  }

  /// D_l Q^{hk} for every l.
  std::vector<BlockArray> grad_full_blocks(const VectorXd& x, bool* used_fd = nullptr) const {
    auto gq = dq(x, used_fd);
    auto ga = da(x, used_fd);
    std::vector<BlockArray> out(d, BlockArray(d, m));
    for (int l = 0; l < d; ++l)
      for (int h = 0; h < d; ++h)
        for (int k = 0; k < d; ++k) out[l](h, k) = ga[l](h, k) + gq[l](h, k) * MatrixXd::Identity(m, m);
    return out;
  }

 private:
  template <class T, class Eval, class Diff>
  std::vector<T> central_diff(const VectorXd& x, Eval&& f, Diff&& diff) const {
    const double h = h_fd * (1.0 + x.norm());
    std::vector<T> out;
    out.reserve(d);
    for (int l = 0; l < d; ++l) {
      VectorXd xp = x, xm = x;
      xp(l) += h;
      xm(l) -= h;
      out.push_back(diff(f(xp), f(xm), 1.0 / (xp(l) - xm(l))));
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Sample plans
// ---------------------------------------------------------------------------

struct SamplePlan {
  enum class Mode { Grid, Random };
  Box box;
  Mode mode = Mode::Grid;
  std::vector<int> resolution;  // grid points per axis (1 means the midpoint)
  int count = 0;
  std::uint64_t seed = 0;

  static SamplePlan grid(Box b, std::vector<int> res) { return {std::move(b), Mode::Grid, std::move(res), 0, 0}; }
  static SamplePlan grid(Box b, int res) {
    const int d = b.dim();
    return grid(std::move(b), std::vector<int>(d, res));
  }
  static SamplePlan random(Box b, int count, std::uint64_t seed) { return {std::move(b), Mode::Random, {}, count, seed}; }

  void validate() const {
    box.validate();
    if (mode == Mode::Grid) {
      if (static_cast<int>(resolution.size()) != box.dim()) throw DimensionError("SamplePlan: resolution per axis required");
      for (int r : resolution)
        if (r <= 0) throw PreconditionError("SamplePlan: resolution must be positive");
    } else if (count <= 0) {
      throw PreconditionError("SamplePlan: count must be positive");
    }
  }

  std::vector<VectorXd> points() const {
    validate();
    const int d = box.dim();
    std::vector<VectorXd> pts;
    if (mode == Mode::Random) {
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      pts.reserve(count);
      for (int i = 0; i < count; ++i) {
        VectorXd x(d);
        for (int l = 0; l < d; ++l) x(l) = box.lo(l) + u(rng) * (box.hi(l) - box.lo(l));
        pts.push_back(std::move(x));
      }
      return pts;
    }
    std::size_t total = 1;
    for (int r : resolution) total *= static_cast<std::size_t>(r);
    pts.reserve(total);
    std::vector<int> idx(d, 0);
    for (std::size_t n = 0; n < total; ++n) {
      VectorXd x(d);
      for (int l = 0; l < d; ++l) {
        const int r = resolution[l];
        x(l) = r == 1 ? 0.5 * (box.lo(l) + box.hi(l)) : box.lo(l) + (box.hi(l) - box.lo(l)) * idx[l] / (r - 1);
      }
      pts.push_back(std::move(x));
      for (int l = 0; l < d && ++idx[l] == resolution[l]; ++l) idx[l] = 0;
    }
    return pts;
  }
};

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

enum class Status { Pass, Fail, Unknown };

inline const char* status_name(Status s) {
  switch (s) {
    case Status::Pass: return "pass";
    case Status::Fail: return "fail";
    default: return "unknown";
  }
}

struct ConditionResult {
  std::string name;
  Status status = Status::Unknown;
  double value = 0.0;  // the worst value observed (meaning depends on the condition)
  std::optional<VectorXd> witness;
  std::string message;
};

struct HypothesisReport {
  std::vector<ConditionResult> conditions;
  std::vector<std::pair<std::string, double>> constants;  // insertion order is report order
  std::size_t sample_count = 0;
  bool finite_difference = false;
  std::vector<std::string> notes;

  bool passed() const {
    for (const auto& c : conditions)
      if (c.status == Status::Fail) return false;
    return true;
  }
  const ConditionResult* condition(const std::string& name) const {
    for (const auto& c : conditions)
      if (c.name == name) return &c;
    return nullptr;
  }
  std::optional<double> constant(const std::string& name) const {
    for (const auto& [k, v] : constants)
      if (k == name) return v;
    return std::nullopt;
  }
  void set_constant(const std::string& name, double v) {
    for (auto& [k, old] : constants)
      if (k == name) {
        old = v;
        return;
      }
    constants.emplace_back(name, v);
  }
};

namespace detail {

/// Running extremum that keeps the first point attaining it (points are
/// visited in plan order, so the witness is deterministic).
struct Extremum {
  double value;
  std::optional<VectorXd> at;
  bool is_max;
  explicit Extremum(bool max) : value(max ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity()), is_max(max) {}
  void offer(double v, const VectorXd& x) {
    if (is_max ? v > value : v < value) value = v, at = x;
  }
};

inline std::string sample_note(std::size_t n) {
  return "sample-based check over " + std::to_string(n) + " points; not a proof";
}

}  // namespace detail

/// Pointwise structural check over a plan: Q_s positive definite, sup c0,
/// sup scriptC, nonnegativity of the symmetrized coupling (within tol), and
/// nonnegativity of sym(V) (within tol).
inline HypothesisReport certify_hypotheses(const CoefficientField& field, const SamplePlan& plan, double tol = 1e-10) {
  const auto pts = plan.points();
  if (pts.empty()) throw PreconditionError("certify_hypotheses: empty plan");
  struct PointResult {
    bool pd_ok = true;
    double qs_min = 0;
    PointwiseConstants pc;
    double coupling_scale = 1;
    double v_min = 0;
    double v_scale = 1;
  };
  std::vector<PointResult> res(pts.size());
  parallel_for(pts.size(), [&](std::size_t i) {
    CoupledBlockSample s = field.sample(pts[i]);
    PointResult& r = res[i];
    try {
      r.pc = scriptC_pointwise(s);
      r.qs_min = r.pc.qs_min_eig;
    } catch (const NotPositiveDefiniteError& e) {
      r.pd_ok = false;
      r.qs_min = e.eigenvalue();
    }
    r.coupling_scale = std::max(1.0, s.A.stacked().cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<MatrixXd> ves(sym_part(s.V), Eigen::EigenvaluesOnly);
    r.v_min = ves.eigenvalues().minCoeff();
    r.v_scale = std::max(1.0, s.V.cwiseAbs().maxCoeff());
  });

  detail::Extremum qs(false), c0(true), sc(true), cre(true), cim(true), lam(false), vmin(false);
  detail::Extremum lam_rel(false), v_rel(false);
  bool all_pd = true;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& r = res[i];
    qs.offer(r.qs_min, pts[i]);
    vmin.offer(r.v_min, pts[i]);
    v_rel.offer(r.v_min / r.v_scale, pts[i]);
    if (!r.pd_ok) {
      all_pd = false;
      continue;
    }
    c0.offer(r.pc.c0, pts[i]);
    sc.offer(r.pc.scriptC, pts[i]);
    cre.offer(r.pc.C_re, pts[i]);
    cim.offer(r.pc.C_im, pts[i]);
    lam.offer(r.pc.lambda_min_sym, pts[i]);
    lam_rel.offer(r.pc.lambda_min_sym / r.coupling_scale, pts[i]);
  }

  HypothesisReport rep;
  rep.sample_count = pts.size();
  rep.notes.push_back(detail::sample_note(pts.size()));
  rep.notes.push_back("local boundedness of V cannot be distinguished from global boundedness by sampling");

  ConditionResult pd{"qs_positive_definite", all_pd ? Status::Pass : Status::Fail, qs.value, std::nullopt, ""};
  if (!all_pd) {
    pd.witness = qs.at;
    pd.message = "symmetric part of Q is not positive definite at " + format_point(*qs.at);
  }
  rep.conditions.push_back(pd);

  ConditionResult cs{"coupling_nonnegative", Status::Unknown, lam.value, std::nullopt, ""};
  if (all_pd) {
    cs.status = lam_rel.value >= -tol ? Status::Pass : Status::Fail;
    if (cs.status == Status::Fail) {
      cs.witness = lam_rel.at;
      cs.message = "symmetrized coupling matrix has a negative eigenvalue at " + format_point(*lam_rel.at);
    }
  } else {
    cs.message = "not evaluated where Q fails positivity";
  }
  rep.conditions.push_back(cs);

  ConditionResult vp{"potential_nonnegative", v_rel.value >= -tol ? Status::Pass : Status::Fail, vmin.value, std::nullopt, ""};
  if (vp.status == Status::Fail) {
    vp.witness = v_rel.at;
    vp.message = "sym(V) has a negative eigenvalue at " + format_point(*v_rel.at);
  }
  rep.conditions.push_back(vp);

  if (all_pd) {
    rep.set_constant("c0", std::max(0.0, c0.value));
    rep.set_constant("scriptC", std::max(0.0, sc.value));
    rep.set_constant("C_re", std::max(0.0, cre.value));
    rep.set_constant("C_im", std::max(0.0, cim.value));
    rep.set_constant("lambda_min_sym", lam.value);
  }
  rep.set_constant("qs_min_eig", qs.value);
  rep.set_constant("v_min_sym_eig", vmin.value);
  if (field.claims.c0) rep.set_constant("c0_claimed", *field.claims.c0);
  if (field.claims.scriptC) rep.set_constant("scriptC_claimed", *field.claims.scriptC);
  if (field.claims.scriptC_alt) rep.set_constant("scriptC_claimed_alt", *field.claims.scriptC_alt);
  rep.finite_difference = false;
  return rep;
}

// ---------------------------------------------------------------------------
// Log-weight constant K
// ---------------------------------------------------------------------------

struct ScalarWeight {
  std::function<double(const VectorXd&)> value;
  std::function<VectorXd(const VectorXd&)> grad;
};

/// psi(x) = exp(sqrt(1 + |x|^2)).
inline ScalarWeight default_log_weight() {
  return {[](const VectorXd& x) { return std::exp(std::sqrt(1.0 + x.squaredNorm())); },
          [](const VectorXd& x) -> VectorXd {
            const double r = std::sqrt(1.0 + x.squaredNorm());
            return std::exp(r) / r * x;
          }};
}

struct KEstimate {
  double K = 0.0;
  std::optional<VectorXd> witness;
  std::size_t sample_count = 0;
};

/// Empirical sup of (Q grad psi, grad psi) / (psi log psi)^2. Rejects weights
/// that are not above 1 + margin on the plan, that are constant on it, or
/// whose maximum over the plan is not reached on the box boundary.
inline KEstimate estimate_K_logweight(const CoefficientField& field, const ScalarWeight& psi, const SamplePlan& plan,
                                      double margin = 1e-12) {
  if (!psi.value || !psi.grad) throw PreconditionError("estimate_K_logweight: psi and its gradient are required");
  const auto pts = plan.points();
  std::vector<double> ratio(pts.size()), val(pts.size());
  parallel_for(pts.size(), [&](std::size_t i) {
    const VectorXd& x = pts[i];
    const double p = psi.value(x);
    val[i] = p;
    if (!(p > 1.0 + margin)) return;
    const VectorXd g = psi.grad(x);
    const MatrixXd Q = field.q(x);
    ratio[i] = (g.transpose() * Q * g).value() / std::pow(p * std::log(p), 2);
  });
  detail::Extremum lo(false), hi(true), best(true);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    lo.offer(val[i], pts[i]);
    hi.offer(val[i], pts[i]);
  }
  if (!(lo.value > 1.0 + margin))
    throw PreconditionError("psi must exceed 1 on the plan (log psi > 0); fails at " + format_point(*lo.at), lo.at, lo.value);
  if (!(hi.value - lo.value > 1e-12 * hi.value))
    throw PreconditionError("psi is constant on the plan; it must blow up at infinity", lo.at, lo.value);
  // The weight must grow toward the boundary: its largest value over the box
  // corners has to dominate every sampled value.
  const int d = plan.box.dim();
  double corner_max = -std::numeric_limits<double>::infinity();
  for (int mask = 0; mask < (1 << d); ++mask) {
    VectorXd c(d);
    for (int l = 0; l < d; ++l) c(l) = (mask >> l & 1) ? plan.box.hi(l) : plan.box.lo(l);
    corner_max = std::max(corner_max, psi.value(c));
  }
  if (corner_max < hi.value * (1 - 1e-12))
    throw PreconditionError("psi does not grow toward the boundary of the plan box", hi.at, hi.value);
  for (std::size_t i = 0; i < pts.size(); ++i) best.offer(ratio[i], pts[i]);
  return {std::max(0.0, best.value), best.at, pts.size()};
}

struct KDivergenceCheck {
  KEstimate on_plan;
  KEstimate on_doubled;
  bool diverging = false;
};

/// Compares K on the plan with K on the box doubled about its center; a
/// noticeable increase suggests the ratio is unbounded on R^d.
inline KDivergenceCheck check_K_divergence(const CoefficientField& field, const ScalarWeight& psi, const SamplePlan& plan,
                                           double growth = 1.5) {
  KDivergenceCheck out;
  out.on_plan = estimate_K_logweight(field, psi, plan);
  SamplePlan big = plan;
  const VectorXd c = plan.box.center(), w = plan.box.width();
  big.box = {c - w, c + w};
  out.on_doubled = estimate_K_logweight(field, psi, big);
  out.diverging = out.on_doubled.K > growth * out.on_plan.K + 1e-12;
  return out;
}

// ---------------------------------------------------------------------------
// Sector constant of V
// ---------------------------------------------------------------------------

struct CVEstimate {
  double cV = 0.0;
  bool bounded = true;
  std::optional<VectorXd> witness;
};

inline CVEstimate estimate_cV(const CoefficientField& field, const SamplePlan& plan) {
  const auto pts = plan.points();
  std::vector<SectorConstant> sc(pts.size());
  parallel_for(pts.size(), [&](std::size_t i) {
    const MatrixXd V = field.sample(pts[i]).V;
    try {
      sc[i] = sector_constant(V);
    } catch (const PreconditionError& e) {
      throw PreconditionError(std::string("estimate_cV: ") + e.what() + " at " + format_point(pts[i]), pts[i], e.value());
    }
  });
  CVEstimate out;
  detail::Extremum best(true);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!sc[i].bounded) {
      out.bounded = false;
      out.cV = std::numeric_limits<double>::infinity();
      out.witness = pts[i];
      return out;
    }
    best.offer(sc[i].value, pts[i]);
  }
  out.cV = std::max(0.0, best.value);
  out.witness = best.at;
  return out;
}

// ---------------------------------------------------------------------------
// Potential weight
// ---------------------------------------------------------------------------

struct WeightData {
  ScalarWeight psi;  // optional log-weight
  ScalarWeight v;    // potential weight and gradient
  double gamma = 0.0;
  double C_gamma = 0.0;
  double v0 = 1.0;
  double c1 = 1.0;
  double c_V = 0.0;
};

/// Checks (Q grad v, grad v)^{1/2} <= gamma v^{3/2} + C_gamma,
/// sym(V) - v I >= 0 and |V|_2 <= c1 v at every sample.
inline HypothesisReport certify_potential_weight(const CoefficientField& field, const WeightData& w, const SamplePlan& plan,
                                                 double tol = 1e-10) {
  if (!w.v.value || !w.v.grad) throw PreconditionError("certify_potential_weight: v and its gradient are required");
  const auto pts = plan.points();
  struct Row {
    double v = 0, grad_gap = 0, lower_gap = 0, c1_gap = 0;
  };
  std::vector<Row> rows(pts.size());
  parallel_for(pts.size(), [&](std::size_t i) {
    const VectorXd& x = pts[i];
    CoupledBlockSample s = field.sample(x);
    Row& r = rows[i];
    r.v = w.v.value(x);
    const VectorXd g = w.v.grad(x);
    const double lhs = std::sqrt(std::max(0.0, (g.transpose() * s.Q * g).value()));
    r.grad_gap = lhs - (w.gamma * std::pow(std::max(r.v, 0.0), 1.5) + w.C_gamma);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym_part(s.V) - r.v * MatrixXd::Identity(s.m, s.m), Eigen::EigenvaluesOnly);
    r.lower_gap = es.eigenvalues().minCoeff() / std::max(1.0, std::abs(r.v));
    r.c1_gap = spectral_norm(s.V) - w.c1 * r.v;
  });
  detail::Extremum vmin(false), gg(true), lg(false), cg(true);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    vmin.offer(rows[i].v, pts[i]);
    gg.offer(rows[i].grad_gap, pts[i]);
    lg.offer(rows[i].lower_gap, pts[i]);
    cg.offer(rows[i].c1_gap, pts[i]);
  }
  if (vmin.value < w.v0 * (1 - 1e-12))
    throw PreconditionError("v falls below v0 at " + format_point(*vmin.at), vmin.at, vmin.value);

  HypothesisReport rep;
  rep.sample_count = pts.size();
  rep.notes.push_back(detail::sample_note(pts.size()));
  auto add = [&](const char* name, bool ok, const detail::Extremum& e, const char* what) {
    ConditionResult c{name, ok ? Status::Pass : Status::Fail, e.value, std::nullopt, ""};
    if (!ok) {
      c.witness = e.at;
      c.message = std::string(what) + " violated at " + format_point(*e.at);
    }
    rep.conditions.push_back(std::move(c));
  };
  add("potential_gradient_bound", gg.value <= tol, gg, "(Q grad v, grad v)^{1/2} <= gamma v^{3/2} + C_gamma");
  add("potential_lower_bound", lg.value >= -tol, lg, "(V xi, xi) >= v |xi|^2");
  add("potential_c1_bound", cg.value <= tol, cg, "|V xi| <= c1 v |xi|");
  rep.set_constant("v0_empirical", vmin.value);
  rep.set_constant("gamma", w.gamma);
  rep.set_constant("C_gamma", w.C_gamma);
  rep.set_constant("c1", w.c1);
  return rep;
}

// ---------------------------------------------------------------------------
// Builders for the example classes
// ---------------------------------------------------------------------------

namespace detail {

inline void spot_check(const SamplePlan& plan, const std::function<void(const VectorXd&)>& check) {
  for (const auto& x : plan.points()) check(x);
}

inline double min_eig_sym(const MatrixXd& M) {
  return Eigen::SelfAdjointEigenSolver<MatrixXd>(sym_part(M), Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

inline double max_eig_sym(const MatrixXd& M) {
  return Eigen::SelfAdjointEigenSolver<MatrixXd>(sym_part(M), Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
}

}  // namespace detail

/// Symmetric positive definite Q with coupling blocks bounded entrywise by
/// k0 * lambda_Q(x). Claimed scriptC = m d k0, c0 = 0.
inline CoefficientField make_symmetric_case_I(CoefficientField base, double k0, const SamplePlan& spot, double tol = 1e-12) {
  if (!(k0 >= 0.0)) throw PreconditionError("case I: k0 must be nonnegative", std::nullopt, k0);
  detail::spot_check(spot, [&](const VectorXd& x) {
    CoupledBlockSample s = base.sample(x);
    if ((s.Q - s.Q.transpose()).cwiseAbs().maxCoeff() > tol * std::max(1.0, s.Q.cwiseAbs().maxCoeff()))
      throw PreconditionError("case I: Q is not symmetric at " + format_point(x), x);
    const double lq = detail::min_eig_sym(s.Q);
    if (!(lq > 0)) throw PreconditionError("case I: Q is not positive definite at " + format_point(x), x, lq);
    const double amax = s.A.stacked().cwiseAbs().maxCoeff();
    if (amax > k0 * lq * (1 + tol) + tol)
      throw PreconditionError("case I: |a^{hk}_ij| exceeds k0 lambda_Q at " + format_point(x), x, amax - k0 * lq);
    const MatrixXd big = s.A.stacked();
    if (detail::min_eig_sym(big) < -tol * std::max(1.0, amax))
      throw PreconditionError("case I: coupling form is not nonnegative at " + format_point(x), x, detail::min_eig_sym(big));
  });
  base.claims.family = "symmetric_case_I";
  base.claims.c0 = 0.0;
  base.claims.scriptC = base.m * base.d * k0;
  base.claims.scriptC_alt.reset();
  return base;
}

/// A^{hk} = q_hk G with G entrywise nonnegative and sym(G) >= 0.
/// Claimed scriptC = Lambda_G = sup lambda_max(sym G), computed over the spot
/// plan unless supplied.
inline CoefficientField make_symmetric_case_II(int d, int m, MatrixFn Q, std::optional<MatrixGradFn> grad_Q, MatrixFn G,
                                               std::optional<MatrixGradFn> grad_G, MatrixFn V, const SamplePlan& spot,
                                               std::optional<double> Lambda_G = std::nullopt, double tol = 1e-12) {
  CoefficientField f;
  f.d = d;
  f.m = m;
  f.q = Q;
  f.grad_q = grad_Q;
  f.v_mat = std::move(V);
  f.a = [d, m, Q, G](const VectorXd& x) {
    const MatrixXd q = Q(x), g = G(x);
    BlockArray A(d, m);
    for (int h = 0; h < d; ++h)
      for (int k = 0; k < d; ++k) A(h, k) = q(h, k) * g;
    return A;
  };
  if (grad_Q && grad_G) {
    f.grad_a = [d, m, Q, G, gQ = *grad_Q, gG = *grad_G](const VectorXd& x) {
      const MatrixXd q = Q(x), g = G(x);
      const auto dq = gQ(x), dg = gG(x);
      std::vector<BlockArray> out(d, BlockArray(d, m));
      for (int l = 0; l < d; ++l)
        for (int h = 0; h < d; ++h)
          for (int k = 0; k < d; ++k) out[l](h, k) = dq[l](h, k) * g + q(h, k) * dg[l];
      return out;
    };
  }
  double lam = 0.0;
  detail::spot_check(spot, [&](const VectorXd& x) {
    const MatrixXd q = Q(x), g = G(x);
    if (g.rows() != m || g.cols() != m) throw DimensionError("case II: G must be m x m");
    if ((q - q.transpose()).cwiseAbs().maxCoeff() > tol * std::max(1.0, q.cwiseAbs().maxCoeff()))
      throw PreconditionError("case II: Q is not symmetric at " + format_point(x), x);
    if (!(detail::min_eig_sym(q) > 0)) throw PreconditionError("case II: Q is not positive definite at " + format_point(x), x);
    if (g.minCoeff() < 0) throw PreconditionError("case II: G has a negative entry at " + format_point(x), x, g.minCoeff());
    if (detail::min_eig_sym(g) < -tol * std::max(1.0, g.cwiseAbs().maxCoeff()))
      throw PreconditionError("case II: sym(G) is not positive semidefinite at " + format_point(x), x, detail::min_eig_sym(g));
    lam = std::max(lam, detail::max_eig_sym(g));
  });
  f.claims.family = "symmetric_case_II";
  f.claims.c0 = 0.0;
  f.claims.scriptC = Lambda_G.value_or(lam);
  return f;
}

/// Q = diag(q_11..q_dd) + Q0 with Q0 antisymmetric, q_ii > k1, off-diagonal
/// row sums <= k2 q_ii; coupling with 0 <= a^{hh}_ij <= k2 q_hh and
/// |a^{hk}_ij| <= k3 min_r q_rr for h != k. Claims c0 = k2 and both published
/// scriptC bounds: m(k2 + d k3) and md(k2 + k3).
inline CoefficientField make_diag_antisym(CoefficientField base, double k1, double k2, double k3, const SamplePlan& spot,
                                          double tol = 1e-12) {
  if (!(k1 > 0 && k2 > 0 && k3 >= 0)) throw PreconditionError("diagonal-antisymmetric case: constants must be positive");
  const int d = base.d, m = base.m;
  detail::spot_check(spot, [&](const VectorXd& x) {
    CoupledBlockSample s = base.sample(x);
    const MatrixXd Q0 = s.Q - MatrixXd(s.Q.diagonal().asDiagonal());
    if ((Q0 + Q0.transpose()).cwiseAbs().maxCoeff() > tol * std::max(1.0, Q0.cwiseAbs().maxCoeff()))
      throw PreconditionError("diagonal-antisymmetric case: off-diagonal part of Q is not antisymmetric at " + format_point(x), x);
    const double qmin = s.Q.diagonal().minCoeff();
    if (!(qmin > k1)) throw PreconditionError("diagonal-antisymmetric case: q_ii <= k1 at " + format_point(x), x, qmin);
    for (int i = 0; i < d; ++i) {
      const double row = Q0.row(i).cwiseAbs().sum();
      if (row > k2 * s.Q(i, i) * (1 + tol))
        throw PreconditionError("diagonal-antisymmetric case: off-diagonal row sum exceeds k2 q_ii at " + format_point(x), x, row);
    }
    for (int h = 0; h < d; ++h)
      for (int k = 0; k < d; ++k) {
        const MatrixXd& B = s.A(h, k);
        if (h == k) {
          if (B.minCoeff() < 0 || B.maxCoeff() > k2 * s.Q(h, h) * (1 + tol))
            throw PreconditionError("diagonal-antisymmetric case: diagonal block outside [0, k2 q_hh] at " + format_point(x), x);
        } else if (B.cwiseAbs().maxCoeff() > k3 * qmin * (1 + tol)) {
          throw PreconditionError("diagonal-antisymmetric case: off-diagonal block exceeds k3 min q_rr at " + format_point(x), x);
        }
      }
    const MatrixXd big = s.A.stacked();
    if (detail::min_eig_sym(big) < -tol * std::max(1.0, big.cwiseAbs().maxCoeff()))
      throw PreconditionError("diagonal-antisymmetric case: coupling form is not nonnegative at " + format_point(x), x);
  });
  base.claims.family = "diag_antisym";
  base.claims.c0 = k2;
  base.claims.scriptC = m * (k2 + d * k3);
  base.claims.scriptC_alt = m * d * (k2 + k3);
  return base;
}

}  // namespace sglab
