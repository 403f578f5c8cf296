#pragma once

// Quadrature of the dissipation identity and the integral inequalities on
// compactly supported test functions: the expansion of
// int (A u, u |u|_eps^{p-2}), the dissipativity margin, the sector ratio and
// the weighted estimate of the domain characterization.

#include "semigroup_lab/coefficient_models.hpp"
#include "semigroup_lab/constants_lab.hpp"
#include "semigroup_lab/parallel.hpp"

#include <array>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace sglab {

// ---------------------------------------------------------------------------
// Test functions
// ---------------------------------------------------------------------------

/// Value, gradient (Du(i, h) = D_h u_i) and Hessians (D2u[i](h, k)) at a point.
struct Jet {
  VectorXcd u;
  MatrixXcd Du;
  std::vector<MatrixXcd> D2u;

  static Jet zero(int d, int m) { return {VectorXcd::Zero(m), MatrixXcd::Zero(m, d), std::vector<MatrixXcd>(m, MatrixXcd::Zero(d, d))}; }
  Jet& operator+=(const Jet& o) {
    u += o.u;
    Du += o.Du;
    for (std::size_t i = 0; i < D2u.size(); ++i) D2u[i] += o.D2u[i];
    return *this;
  }
};

struct TestFunction {
  int d = 0;
  int m = 0;
  std::function<Jet(const VectorXd&)> jet;
  Box support;  // u vanishes outside
  bool real_valued = false;

  VectorXcd value(const VectorXd& x) const { return jet(x).u; }
  MatrixXcd grad(const VectorXd& x) const { return jet(x).Du; }
  std::vector<MatrixXcd> hess(const VectorXd& x) const { return jet(x).D2u; }
};

/// u(x) = c exp(-sum_l (x_l - mu_l)^2 / (2 s_l^2)), truncated outside
/// mu +- 8.5 s (where it is below 1e-15 of its peak).
inline TestFunction gaussian_bump(VectorXcd c, VectorXd mu, VectorXd s) {
  const int d = static_cast<int>(mu.size()), m = static_cast<int>(c.size());
  if (s.size() != d || (s.array() <= 0).any()) throw PreconditionError("gaussian_bump: widths must be positive");
  TestFunction f;
  f.d = d;
  f.m = m;
  f.support = {mu - 8.5 * s, mu + 8.5 * s};
  f.real_valued = c.imag().isZero(0);
  f.jet = [c, mu, s, d, m, box = f.support](const VectorXd& x) {
    Jet j = Jet::zero(d, m);
    if (!box.contains(x)) return j;
    const VectorXd z = (x - mu).cwiseQuotient(s.cwiseProduct(s));
    const double g = std::exp(-0.5 * (x - mu).cwiseQuotient(s).squaredNorm());
    const VectorXd dg = -g * z;
    MatrixXd d2g = g * z * z.transpose();
    for (int l = 0; l < d; ++l) d2g(l, l) -= g / (s(l) * s(l));
    j.u = c * g;
    j.Du = c * dg.transpose().cast<Complex>();
    for (int i = 0; i < m; ++i) j.D2u[i] = c(i) * d2g.cast<Complex>();
    return j;
  };
  return f;
}

/// u(x) = c (1 - |x - mu|^2 / r^2)^3 inside the ball, 0 outside (C^2).
inline TestFunction poly_bump(VectorXcd c, VectorXd mu, double r) {
  const int d = static_cast<int>(mu.size()), m = static_cast<int>(c.size());
  if (!(r > 0)) throw PreconditionError("poly_bump: radius must be positive");
  TestFunction f;
  f.d = d;
  f.m = m;
  f.support = {mu.array() - r, mu.array() + r};
  f.real_valued = c.imag().isZero(0);
  f.jet = [c, mu, r, d, m](const VectorXd& x) {
    Jet j = Jet::zero(d, m);
    const VectorXd y = (x - mu) / (r * r);
    const double w = 1.0 - (x - mu).squaredNorm() / (r * r);
    if (w <= 0) return j;
    const double b = w * w * w;
    const VectorXd db = -6.0 * w * w * y;
    MatrixXd d2b = 24.0 * w * y * y.transpose();
    d2b.diagonal().array() -= 6.0 * w * w / (r * r);
    j.u = c * b;
    j.Du = c * db.transpose().cast<Complex>();
    for (int i = 0; i < m; ++i) j.D2u[i] = c(i) * d2b.cast<Complex>();
    return j;
  };
  return f;
}

inline TestFunction mixture(const std::vector<TestFunction>& parts) {
  if (parts.empty()) throw PreconditionError("mixture: no parts");
  TestFunction f;
  f.d = parts.front().d;
  f.m = parts.front().m;
  f.support = parts.front().support;
  f.real_valued = true;
  for (const auto& p : parts) {
    if (p.d != f.d || p.m != f.m) throw DimensionError("mixture: parts of different shape");
    f.support.lo = f.support.lo.cwiseMin(p.support.lo);
    f.support.hi = f.support.hi.cwiseMax(p.support.hi);
    f.real_valued = f.real_valued && p.real_valued;
  }
  f.jet = [parts, d = f.d, m = f.m](const VectorXd& x) {
    Jet j = Jet::zero(d, m);
    for (const auto& p : parts) j += p.jet(x);
    return j;
  };
  return f;
}

/// u == 0 on the given box.
inline TestFunction zero_function(int d, int m, Box support) {
  TestFunction f;
  f.d = d;
  f.m = m;
  f.support = std::move(support);
  f.real_valued = true;
  f.jet = [d, m](const VectorXd&) { return Jet::zero(d, m); };
  return f;
}

struct MixtureSpec {
  int terms_min = 1;
  int terms_max = 3;
  double width_lo = 0.2;
  double width_hi = 0.4;
  bool complex_values = false;
  bool polynomial = false;  // C^2 polynomial bumps instead of Gaussians
};

/// Random mixture with centers drawn in the region.
inline TestFunction random_mixture(std::mt19937_64& rng, int d, int m, const Box& centers, const MixtureSpec& spec = {}) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  const int n = spec.terms_min + static_cast<int>(u(rng) * (spec.terms_max - spec.terms_min + 1) * 0.999999);
  std::vector<TestFunction> parts;
  for (int t = 0; t < n; ++t) {
    VectorXcd c(m);
    for (int i = 0; i < m; ++i) c(i) = Complex(g(rng), spec.complex_values ? g(rng) : 0.0);
    VectorXd mu(d), s(d);
    for (int l = 0; l < d; ++l) {
      mu(l) = centers.lo(l) + u(rng) * (centers.hi(l) - centers.lo(l));
      s(l) = spec.width_lo + u(rng) * (spec.width_hi - spec.width_lo);
    }
    parts.push_back(spec.polynomial ? poly_bump(c, mu, 3.0 * s.maxCoeff()) : gaussian_bump(c, mu, s));
  }
  return mixture(parts);
}

// ---------------------------------------------------------------------------
// Quadrature grids
// ---------------------------------------------------------------------------

struct QuadratureGrid {
  enum class Rule { Midpoint, Trapezoid };
  Box box;
  VectorXd h;
  Rule rule = Rule::Midpoint;

  /// Grid with spacing h on the smallest box containing `support` whose
  /// widths are multiples of h, anchored at support.lo.
  static QuadratureGrid covering(const Box& support, double h, Rule rule = Rule::Midpoint) {
    support.validate();
    if (!(h > 0)) throw PreconditionError("QuadratureGrid: spacing must be positive");
    QuadratureGrid g;
    g.rule = rule;
    g.h = VectorXd::Constant(support.dim(), h);
    g.box.lo = support.lo;
    g.box.hi = support.lo;
    for (int l = 0; l < support.dim(); ++l) {
      const double n = std::ceil(support.width()(l) / h - 1e-9);
      g.box.hi(l) = support.lo(l) + n * h;
    }
    return g;
  }

  std::vector<int> cells() const {
    std::vector<int> n(box.dim());
    for (int l = 0; l < box.dim(); ++l) n[l] = static_cast<int>(std::lround(box.width()(l) / h(l)));
    return n;
  }

  std::size_t node_count() const {
    std::size_t total = 1;
    for (int n : cells()) total *= static_cast<std::size_t>(rule == Rule::Midpoint ? n : n + 1);
    return total;
  }

  /// Position and weight of node idx (axis 0 fastest).
  std::pair<VectorXd, double> node(std::size_t idx, const std::vector<int>& n) const {
    const int d = box.dim();
    VectorXd x(d);
    double w = 1.0;
    for (int l = 0; l < d; ++l) {
      const std::size_t count = rule == Rule::Midpoint ? n[l] : n[l] + 1;
      const std::size_t j = idx % count;
      idx /= count;
      if (rule == Rule::Midpoint) {
        x(l) = box.lo(l) + (static_cast<double>(j) + 0.5) * h(l);
        w *= h(l);
      } else {
        x(l) = box.lo(l) + static_cast<double>(j) * h(l);
        w *= (j == 0 || j == count - 1) ? 0.5 * h(l) : h(l);
      }
    }
    return {x, w};
  }

  void check_covers(const TestFunction& u) const {
    box.validate();
    if (h.size() != box.dim() || u.d != box.dim()) throw DimensionError("QuadratureGrid: dimension mismatch");
    const double slack = 1e-9 * (1.0 + box.width().maxCoeff());
    if (!Box{box.lo.array() - slack, box.hi.array() + slack}.contains(u.support))
      throw PreconditionError("quadrature box does not contain the test-function support");
    for (int l = 0; l < box.dim(); ++l) {
      if (!(h(l) > 0)) throw PreconditionError("QuadratureGrid: spacing must be positive");
      if (h(l) > u.support.width()(l) / 8.0)
        throw PreconditionError("quadrature grid too coarse: h exceeds support width / 8 along axis " + std::to_string(l),
                                std::nullopt, h(l));
      const double cells = box.width()(l) / h(l);
      if (std::abs(cells - std::round(cells)) > 1e-6) throw PreconditionError("box width is not a multiple of h");
    }
  }
};

// ---------------------------------------------------------------------------
// Pointwise pieces
// ---------------------------------------------------------------------------

/// |u|_eps = (|u|^2 + eps)^{1/2} for p in (1, 2), |u| for p >= 2.
inline double regularized_modulus(const VectorXcd& u, double eps, double p) {
  return p < 2.0 ? std::sqrt(u.squaredNorm() + eps) : u.norm();
}

/// D_h |u|^2 = 2 Re (u, D_h u).
inline VectorXd modulus_sq_gradient(const Jet& j) {
  return 2.0 * (j.Du.adjoint() * j.u).real();
}

/// sum_{hk} Q^{hk} D_hk u + sum_{hk} (D_h Q^{hk}) D_k u - V u at x.
inline VectorXcd apply_operator(const CoefficientField& field, const Jet& j, const VectorXd& x, bool allow_fd = true,
                                bool* used_fd = nullptr) {
  if (!allow_fd && !field.has_analytic_gradients())
    throw PreconditionError("apply_operator: coefficient gradients unavailable and finite differences disabled", x);
  const CoupledBlockSample s = field.sample(x);
  const BlockArray Qf = CoefficientField::full_blocks(s);
  const auto dQ = field.grad_full_blocks(x, used_fd);
  const int d = s.d, m = s.m;
  VectorXcd out = -s.V.cast<Complex>() * j.u;
  VectorXcd dhk(m);
  for (int h = 0; h < d; ++h)
    for (int k = 0; k < d; ++k) {
      for (int i = 0; i < m; ++i) dhk(i) = j.D2u[i](h, k);
      out += Qf(h, k).cast<Complex>() * dhk + dQ[h](h, k).cast<Complex>() * j.Du.col(k);
    }
  return out;
}

inline VectorXcd apply_operator(const CoefficientField& field, const TestFunction& u, const VectorXd& x, bool allow_fd = true) {
  return apply_operator(field, u.jet(x), x, allow_fd);
}

// ---------------------------------------------------------------------------
// Integrated quantities
// ---------------------------------------------------------------------------

/// Terms of the expansion of int (A u, u |u|_eps^{p-2}); each term carries the
/// sign it has on the right-hand side of the identity.
struct FormBreakdown {
  Complex lhs;
  Complex gradient;     // - sum_i int (Q grad u_i, grad u_i) |u|^{p-2}
  Complex cross_q;      // - (p-2)/2 sum_i int (Q grad u_i, grad |u|^2) conj(u_i) |u|^{p-4}
  Complex a_gradient;   // - sum_{hk} int (A^{hk} D_k u, D_h u) |u|^{p-2}
  Complex a_cross;      // - (p-2)/2 sum_{hk} int (A^{hk} D_k u, u) D_h|u|^2 |u|^{p-4}
  Complex potential;    // - int (V u, u) |u|^{p-2}
  double A = 0.0;       // sum_i int Re (Q grad u_i, grad u_i) |u|^{p-2}
  double B = 0.0;       // int (Q grad |u|^2, grad |u|^2) |u|^{p-4}
  double im_gradient_abs = 0.0;  // int sum_i |Im (Q grad u_i, grad u_i)| |u|^{p-2}
  double potential_re = 0.0;     // int Re (V u, u) |u|^{p-2}
  double scale = 0.0;            // sum of the integrals of the absolute integrands
  double u_max = 0.0;
  std::size_t nodes = 0;
  bool finite_difference = false;

  Complex rhs() const { return gradient + cross_q + a_gradient + a_cross + potential; }
  bool all_finite() const {
    for (Complex c : {lhs, gradient, cross_q, a_gradient, a_cross, potential})
      if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) return false;
    return std::isfinite(A) && std::isfinite(B);
  }
};

/// Weighted quantities for the potential-weight estimate (real u).
struct WeightedIntegrals {
  double lhs = 0.0;    // int (f, u) |u|^{p-2} v^{p-1}, f = -A u
  double G = 0.0;      // sum_i int (Q grad u_i, grad u_i) |u|^{p-2} v^{p-1}
  double B = 0.0;      // int (Q grad |u|^2, grad |u|^2) |u|^{p-4} v^{p-1}
  double W = 0.0;      // int |u|^2 |u|^{p-2} v^p
  std::array<double, 5> Gamma{};  // the five remaining terms of the weighted identity
  double vu_p = 0.0;   // int |v u|^p
  double Au_p = 0.0;   // int |A u|^p
  double scale = 0.0;
};

namespace detail {

constexpr int kSlots = 32;

struct Sums {
  std::array<double, kSlots> v{};
  Sums operator+(const Sums& o) const {
    Sums r;
    for (int i = 0; i < kSlots; ++i) r.v[i] = v[i] + o.v[i];
    return r;
  }
};

enum Slot {
  kLhsRe, kLhsIm, kGradRe, kGradIm, kCrossRe, kCrossIm, kAGradRe, kAGradIm, kACrossRe, kACrossIm, kPotRe, kPotIm,
  kA, kB, kImGradAbs, kScale,
  kWLhs, kWG, kWB, kWW, kGam1, kGam2, kGam3, kGam4, kGam5, kVuP, kAuP, kWScale,
  kUMax  // not summed: handled separately
};

struct WeightSpec {
  const ScalarWeight* v = nullptr;
};

inline Complex form_value(const MatrixXd& M, const VectorXcd& theta, const VectorXcd& eta) {
  return eta.dot(M.cast<Complex>() * theta);  // (M theta, eta) = sum_i (M theta)_i conj(eta_i)
}

/// All node quantities at x. w is the quadrature weight.
inline Sums node_sums(const CoefficientField& field, const TestFunction& u, const VectorXd& x, double w, double p,
                      double eps, const WeightSpec& ws, bool* used_fd) {
  Sums out;
  const Jet j = u.jet(x);
  const double usq = j.u.squaredNorm();
  const bool vanishing = usq == 0.0 && j.Du.squaredNorm() == 0.0;
  if (vanishing && ws.v == nullptr) return out;
  const CoupledBlockSample s = field.sample(x);
  const BlockArray Qf = CoefficientField::full_blocks(s);
  const auto dQ = field.grad_full_blocks(x, used_fd);
  const int d = s.d, m = s.m;

  // A u
  VectorXcd Au = -s.V.cast<Complex>() * j.u;
  VectorXcd dhk(m);
  for (int h = 0; h < d; ++h)
    for (int k = 0; k < d; ++k) {
      for (int i = 0; i < m; ++i) dhk(i) = j.D2u[i](h, k);
      Au += Qf(h, k).cast<Complex>() * dhk + dQ[h](h, k).cast<Complex>() * j.Du.col(k);
    }

  const double mod = regularized_modulus(j.u, eps, p);
  const double wp2 = std::pow(mod, p - 2.0);
  const bool zero_mod = mod == 0.0;
  const double wp4 = zero_mod ? 0.0 : std::pow(mod, p - 4.0);
  const VectorXd dmod = modulus_sq_gradient(j);
  const MatrixXcd Qc = s.Q.cast<Complex>();

  // (Q grad u_i, grad u_i) = sum_hk q_hk D_k u_i conj(D_h u_i)
  Complex qgrad = 0.0, qcross = 0.0;
  double im_abs = 0.0, re_sum = 0.0;
  const VectorXcd dm = dmod.cast<Complex>();
  for (int i = 0; i < m; ++i) {
    const VectorXcd gi = j.Du.row(i).transpose();
    const Complex f = gi.dot(Qc * gi);
    qgrad += f;
    im_abs += std::abs(f.imag());
    re_sum += f.real();
    qcross += dm.dot(Qc * gi) * std::conj(j.u(i));  // (Q grad u_i, grad|u|^2) conj(u_i)
  }
  // sum_hk (A^{hk} D_k u, D_h u) and sum_hk (A^{hk} D_k u, u) D_h|u|^2
  Complex agrad = 0.0, across = 0.0;
  VectorXcd acu(m);
  for (int h = 0; h < d; ++h)
    for (int k = 0; k < d; ++k) {
      acu = s.A(h, k).cast<Complex>() * j.Du.col(k);
      agrad += j.Du.col(h).dot(acu);
      across += j.u.dot(acu) * dmod(h);
    }
  const Complex vuu = j.u.dot(s.V.cast<Complex>() * j.u);
  const double bq = (dmod.transpose() * s.Q * dmod).value();

  const Complex lhs = j.u.dot(Au) * wp2;
  const Complex t_grad = -qgrad * wp2;
  const Complex t_cross = zero_mod ? Complex(0.0) : -(p - 2.0) / 2.0 * qcross * wp4;
  const Complex t_agrad = -agrad * wp2;
  const Complex t_across = zero_mod ? Complex(0.0) : -(p - 2.0) / 2.0 * across * wp4;
  const Complex t_pot = -vuu * wp2;

  auto put = [&](int re, Complex c) {
    out.v[re] = w * c.real();
    out.v[re + 1] = w * c.imag();
  };
  put(kLhsRe, lhs);
  put(kGradRe, t_grad);
  put(kCrossRe, t_cross);
  put(kAGradRe, t_agrad);
  put(kACrossRe, t_across);
  put(kPotRe, t_pot);
  out.v[kA] = w * re_sum * wp2;
  out.v[kB] = w * bq * wp4;
  out.v[kImGradAbs] = w * im_abs * wp2;
  out.v[kScale] = w * (std::abs(lhs) + std::abs(t_grad) + std::abs(t_cross) + std::abs(t_agrad) + std::abs(t_across) +
                       std::abs(t_pot));

  if (ws.v) {
    const double v = ws.v->value(x);
    const VectorXd gv = ws.v->grad(x);
    const double vp1 = std::pow(v, p - 1.0), vp2 = std::pow(v, p - 2.0);
    const double wlhs = -(j.u.dot(Au)).real() * wp2 * vp1;
    const double G = re_sum * wp2 * vp1;
    const double Bw = bq * wp4 * vp1;
    const double W = usq * wp2 * std::pow(v, p);
    const double g1 = (p - 1.0) / 2.0 * (gv.transpose() * s.Q * dmod).value() * wp2 * vp2;
    const double g2 = agrad.real() * wp2 * vp1;
    const double g3 = zero_mod ? 0.0 : (p - 2.0) / 2.0 * across.real() * wp4 * vp1;
    Complex a_dv = 0.0;
    for (int h = 0; h < d; ++h)
      for (int k = 0; k < d; ++k) a_dv += j.u.dot(s.A(h, k).cast<Complex>() * j.Du.col(k)) * gv(h);
    const double g4 = (p - 1.0) * a_dv.real() * wp2 * vp2;
    const double g5 = vuu.real() * wp2 * vp1;
    out.v[kWLhs] = w * wlhs;
    out.v[kWG] = w * G;
    out.v[kWB] = w * Bw;
    out.v[kWW] = w * W;
    out.v[kGam1] = w * g1;
    out.v[kGam2] = w * g2;
    out.v[kGam3] = w * g3;
    out.v[kGam4] = w * g4;
    out.v[kGam5] = w * g5;
    out.v[kVuP] = w * std::pow(v * std::sqrt(usq), p);
    out.v[kAuP] = w * std::pow(Au.norm(), p);
    out.v[kWScale] = w * (std::abs(wlhs) + std::abs(G) + std::abs(Bw) + std::abs(W) + std::abs(g1) + std::abs(g2) +
                          std::abs(g3) + std::abs(g4) + std::abs(g5));
  }
  return out;
}

struct Integrated {
  Sums sums;
  double u_max = 0.0;
  std::size_t nodes = 0;
  bool finite_difference = false;
};

inline Integrated integrate(const CoefficientField& field, const TestFunction& u, double p, double eps,
                            const QuadratureGrid& grid, const WeightSpec& ws = {}) {
  if (!(p > 1.0)) throw PreconditionError("p must exceed 1", std::nullopt, p);
  if (p < 2.0 && !(eps > 0.0)) throw PreconditionError("eps must be positive for p < 2", std::nullopt, eps);
  if (u.d != field.d || u.m != field.m) throw DimensionError("test function and field have different shapes");
  grid.check_covers(u);
  const auto cells = grid.cells();
  const std::size_t n = grid.node_count();
  std::atomic<bool> fd{false};
  Integrated out;
  out.nodes = n;
  out.sums = deterministic_sum(n, Sums{}, [&](std::size_t i) {
    auto [x, w] = grid.node(i, cells);
    bool used = false;
    Sums s = node_sums(field, u, x, w, p, eps, ws, &used);
    if (used) fd.store(true, std::memory_order_relaxed);
    return s;
  });
  out.finite_difference = fd.load();
  // sup |u| on the nodes, for the default eps and reporting
  std::vector<double> block_max((n + 1023) / 1024, 0.0);
  parallel_for(block_max.size(), [&](std::size_t b) {
    double mx = 0.0;
    for (std::size_t i = b * 1024; i < std::min(n, (b + 1) * 1024); ++i) mx = std::max(mx, u.jet(grid.node(i, cells).first).u.norm());
    block_max[b] = mx;
  });
  for (double v : block_max) out.u_max = std::max(out.u_max, v);
  return out;
}

inline FormBreakdown breakdown_of(const Integrated& in) {
  const auto& v = in.sums.v;
  FormBreakdown fb;
  fb.lhs = {v[kLhsRe], v[kLhsIm]};
  fb.gradient = {v[kGradRe], v[kGradIm]};
  fb.cross_q = {v[kCrossRe], v[kCrossIm]};
  fb.a_gradient = {v[kAGradRe], v[kAGradIm]};
  fb.a_cross = {v[kACrossRe], v[kACrossIm]};
  fb.potential = {v[kPotRe], v[kPotIm]};
  fb.A = v[kA];
  fb.B = v[kB];
  fb.im_gradient_abs = v[kImGradAbs];
  fb.potential_re = -v[kPotRe];
  fb.scale = v[kScale];
  fb.u_max = in.u_max;
  fb.nodes = in.nodes;
  fb.finite_difference = in.finite_difference;
  return fb;
}

}  // namespace detail

/// Default regularization for p < 2: 1e-6 (sup |u|)^2 over the grid nodes.
inline double default_eps(const TestFunction& u, const QuadratureGrid& grid) {
  const auto cells = grid.cells();
  double mx = 0.0;
  for (std::size_t i = 0; i < grid.node_count(); ++i) mx = std::max(mx, u.jet(grid.node(i, cells).first).u.norm());
  return mx > 0 ? 1e-6 * mx * mx : 1e-6;
}

inline FormBreakdown form_breakdown(const CoefficientField& field, const TestFunction& u, double p, double eps,
                                    const QuadratureGrid& grid) {
  return detail::breakdown_of(detail::integrate(field, u, p, eps, grid));
}

struct IdentityResidual {
  double residual = 0.0;  // |LHS - RHS| over both real and imaginary parts
  double scale = 0.0;
  FormBreakdown breakdown;
};

inline IdentityResidual dissipation_identity_residual(const CoefficientField& field, const TestFunction& u, double p,
                                                      double eps, const QuadratureGrid& grid) {
  IdentityResidual r;
  r.breakdown = form_breakdown(field, u, p, eps, grid);
  if (!r.breakdown.all_finite()) throw Error("dissipation identity: nonfinite quadrature value");
  r.residual = std::abs(r.breakdown.lhs - r.breakdown.rhs());
  r.scale = r.breakdown.scale;
  return r;
}

struct MarginResult {
  double margin = 0.0;
  double gradient_term = 0.0;  // sum_i int Re (Q grad u_i, grad u_i) |u|^{p-2}
  double scale = 0.0;
  bool outside_theory = false;
  FormBreakdown breakdown;
};

/// -delta * A - Re int (A u, u) |u|_eps^{p-2}. If scriptC is given and p lies
/// outside J~ for it, the result is flagged (and still computed).
inline MarginResult dissipativity_margin(const CoefficientField& field, const TestFunction& u, double p, double eps,
                                         double delta, const QuadratureGrid& grid,
                                         std::optional<double> scriptC = std::nullopt) {
  MarginResult r;
  r.breakdown = form_breakdown(field, u, p, eps, grid);
  r.gradient_term = r.breakdown.A;
  r.margin = -delta * r.breakdown.A - r.breakdown.lhs.real();
  r.scale = r.breakdown.scale;
  if (scriptC) r.outside_theory = !dissipativity_intervals(Real::inexact(*scriptC)).Jtilde.contains(p);
  return r;
}

struct AnalyticityRatio {
  double num = 0.0;
  double den = 0.0;
  double ratio = 0.0;
  double gradient_part = 0.0;   // sum_i int Re (Q grad u_i, grad u_i) |u|^{p-2}
  double potential_part = 0.0;  // int Re (V u, u) |u|^{p-2}
  double C1 = 0.0;              // c0 + C + (5/2)|p-2| ((1+c0)/2 + C)
  double budget = 0.0;          // C1 * gradient_part + c_V * potential_part
  double scale = 0.0;
};

inline AnalyticityRatio analyticity_ratio(const CoefficientField& field, const TestFunction& u, double p, double eps,
                                          const QuadratureGrid& grid, double c0 = 0.0, double scriptC = 0.0,
                                          double cV = 0.0) {
  const FormBreakdown fb = form_breakdown(field, u, p, eps, grid);
  AnalyticityRatio r;
  r.num = std::abs(fb.lhs.imag());
  r.den = -fb.lhs.real();
  r.ratio = r.den > 0 ? r.num / r.den : (r.num > 0 ? std::numeric_limits<double>::infinity() : 0.0);
  r.gradient_part = fb.A;
  r.potential_part = fb.potential_re;
  r.C1 = c0 + scriptC + 2.5 * std::abs(p - 2.0) * ((1.0 + c0) / 2.0 + scriptC);
  r.budget = r.C1 * r.gradient_part + cV * r.potential_part;
  r.scale = fb.scale;
  return r;
}

struct WeightedAudit {
  WeightedIntegrals integrals;
  double scriptC_used = 0.0;
  double Lambda_p = 0.0;
  double Theta = 0.0;
  std::array<std::optional<double>, 4> eps_star;
  double psi1 = 0.0;
  double psi2 = 0.0;
  double combination = 0.0;        // psi1 G + (p-2)/4 B + psi2 W
  double margin = 0.0;             // lhs - combination
  double identity_residual = 0.0;  // |lhs - sum of the weighted identity terms|
  std::optional<double> K_ratio;   // ||v u||_p / ||A u||_p (empty when A u = 0)
  bool zero_function = false;
};

/// Checks the lower bound for int (f, u) |u|_eps^{p-2} v^{p-1} (f = -A u) at the
/// optimal parameters from appendixB_solve and reports ||v u||_p / ||A u||_p.
/// scriptC below 1e-12 is raised to 1e-12 (any larger constant is admissible).
inline WeightedAudit weighted_estimate_audit(const CoefficientField& field, const WeightData& weights,
                                             const TestFunction& u, double p, double eps, const QuadratureGrid& grid,
                                             double c0, double scriptC) {
  if (!u.real_valued) throw PreconditionError("weighted audit: the test function must be real-valued");
  if (!weights.v.value || !weights.v.grad) throw PreconditionError("weighted audit: v and its gradient are required");
  WeightedAudit a;
  a.scriptC_used = std::max(scriptC, 1e-12);
  LambdaInputs in{p, a.scriptC_used, c0, weights.gamma, weights.C_gamma, weights.v0};
  const ThetaLambda tl = theta_lambda(in);
  a.Theta = tl.Theta;
  a.Lambda_p = tl.Lambda;
  if (!(tl.Lambda > 0.0)) throw PreconditionError("weighted audit: Lambda_p is not positive", std::nullopt, tl.Lambda);
  const AppendixBProblem pr = appendixB_problem_for(in);
  const AppendixBSolution sol = appendixB_solve(pr);
  a.eps_star = sol.eps;
  std::array<double, 4> e{};
  for (int i = 0; i < 4; ++i) e[i] = sol.eps[i].value_or(1.0);
  a.psi1 = psi1_of(pr, p, e);
  a.psi2 = sol.psi2_at_eps;

  detail::WeightSpec ws{&weights.v};
  const auto res = detail::integrate(field, u, p, eps, grid, ws);
  const auto& v = res.sums.v;
  auto& I = a.integrals;
  I.lhs = v[detail::kWLhs];
  I.G = v[detail::kWG];
  I.B = v[detail::kWB];
  I.W = v[detail::kWW];
  I.Gamma = {v[detail::kGam1], v[detail::kGam2], v[detail::kGam3], v[detail::kGam4], v[detail::kGam5]};
  I.vu_p = v[detail::kVuP];
  I.Au_p = v[detail::kAuP];
  I.scale = v[detail::kWScale];
  a.zero_function = res.u_max == 0.0;
  a.combination = a.psi1 * I.G + (p - 2.0) / 4.0 * I.B + a.psi2 * I.W;
  a.margin = I.lhs - a.combination;
  const double rhs = I.G + (p - 2.0) / 4.0 * I.B + I.Gamma[0] + I.Gamma[1] + I.Gamma[2] + I.Gamma[3] + I.Gamma[4];
  a.identity_residual = std::abs(I.lhs - rhs);
  if (I.Au_p > 0) a.K_ratio = std::pow(I.vu_p, 1.0 / p) / std::pow(I.Au_p, 1.0 / p);
  return a;
}

}  // namespace sglab
