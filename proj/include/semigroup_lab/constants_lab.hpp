#pragma once

// Exponent calculus: the admissible p-intervals, the g_p minimization, the
// largest dissipativity gain delta for a given p, Theta/Lambda_p, the
// closed-form optimum of the weighted-estimate parameters, and the domain-norm
// constants M1, M2.
//
// Interval endpoints are carried both as doubles and, when every input is
// rational, as exact rationals. A double input is read as the decimal it
// prints as (0.2 -> 1/5), which is what a user typing a config means.

#include "semigroup_lab/types.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

namespace sglab {

using Rational = boost::multiprecision::cpp_rational;

inline std::string rational_str(const Rational& r) {
  using boost::multiprecision::denominator;
  using boost::multiprecision::numerator;
  if (denominator(r) == 1) return numerator(r).str();
  return numerator(r).str() + "/" + denominator(r).str();
}

inline double to_double(const Rational& r) { return r.convert_to<double>(); }

/// A real number with an optional exact rational value.
struct Real {
  double value = 0.0;
  std::optional<Rational> exact;

  Real() = default;
  Real(double v) : value(v), exact(decimal_rational(v)) {}  // NOLINT: implicit by design
  Real(const Rational& r) : value(to_double(r)), exact(r) {}  // NOLINT

  static Real inexact(double v) {
    Real r;
    r.value = v;
    return r;
  }

  /// The rational whose decimal expansion is the shortest round-trip
  /// representation of v.
  static std::optional<Rational> decimal_rational(double v) {
    if (!std::isfinite(v)) return std::nullopt;
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, res.ptr);
    bool neg = false;
    std::size_t i = 0;
    if (s[i] == '-') neg = true, ++i;
    boost::multiprecision::cpp_int mant = 0;
    int exp10 = 0;
    bool frac = false;
    for (; i < s.size() && s[i] != 'e'; ++i) {
      if (s[i] == '.') {
        frac = true;
        continue;
      }
      mant = mant * 10 + (s[i] - '0');
      if (frac) --exp10;
    }
    if (i < s.size()) exp10 += std::stoi(s.substr(i + 1));
    Rational r(mant);
    boost::multiprecision::cpp_int p10 = 1;
    for (int k = 0; k < std::abs(exp10); ++k) p10 *= 10;
    r = exp10 >= 0 ? r * Rational(p10) : r / Rational(p10);
    return neg ? Rational(-r) : r;
  }

  std::string str() const {
    if (exact) return rational_str(*exact);
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
  }
};

struct Endpoint {
  double value = 0.0;
  std::optional<Rational> exact;
  bool closed = true;
  bool infinite = false;

  static Endpoint finite(const Real& r, bool closed) { return {r.value, r.exact, closed, false}; }
  static Endpoint at_infinity(bool positive) {
    return {positive ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity(),
            std::nullopt, false, true};
  }
  Real real() const { return exact ? Real(*exact) : Real::inexact(value); }
  std::string str() const {
    if (infinite) return value > 0 ? "inf" : "-inf";
    return real().str();
  }
};

struct Interval {
  Endpoint lo;
  Endpoint hi;

  bool empty() const {
    if (lo.infinite || hi.infinite) return false;
    if (lo.exact && hi.exact) {
      if (*lo.exact == *hi.exact) return !(lo.closed && hi.closed);
      return *lo.exact > *hi.exact;
    }
    if (lo.value == hi.value) return !(lo.closed && hi.closed);
    return lo.value > hi.value;
  }

  /// Membership; decided exactly when both p and the endpoint are rational.
  bool contains(const Real& p) const {
    auto above = [&](const Endpoint& e) {
      if (e.infinite) return e.value < 0;
      if (p.exact && e.exact) return e.closed ? *p.exact >= *e.exact : *p.exact > *e.exact;
      return e.closed ? p.value >= e.value : p.value > e.value;
    };
    auto below = [&](const Endpoint& e) {
      if (e.infinite) return e.value > 0;
      if (p.exact && e.exact) return e.closed ? *p.exact <= *e.exact : *p.exact < *e.exact;
      return e.closed ? p.value <= e.value : p.value < e.value;
    };
    return above(lo) && below(hi);
  }
  bool contains(double p) const { return contains(Real::inexact(p)); }

  bool subset_of(const Interval& o) const {
    if (empty()) return true;
    auto lo_ok = [&] {
      if (o.lo.infinite) return true;
      if (lo.infinite) return false;
      double a = lo.value, b = o.lo.value;
      if (lo.exact && o.lo.exact) {
        if (*lo.exact != *o.lo.exact) return *lo.exact > *o.lo.exact;
      } else if (a != b) {
        return a > b;
      }
      return o.lo.closed || !lo.closed;
    };
    auto hi_ok = [&] {
      if (o.hi.infinite) return true;
      if (hi.infinite) return false;
      double a = hi.value, b = o.hi.value;
      if (hi.exact && o.hi.exact) {
        if (*hi.exact != *o.hi.exact) return *hi.exact < *o.hi.exact;
      } else if (a != b) {
        return a < b;
      }
      return o.hi.closed || !hi.closed;
    };
    return lo_ok() && hi_ok();
  }

  std::string str() const {
    if (empty()) return "empty";
    return std::string(lo.closed ? "[" : "(") + lo.str() + ", " + hi.str() + (hi.closed ? "]" : ")");
  }
};

struct ExponentReport {
  Real scriptC;
  Real delta;
  Interval J;
  Interval Jtilde;
  Interval J_delta;
  Interval cond_p_window;
  Interval domain_window;
  std::optional<double> Theta;
  std::optional<double> Lambda_p;
  std::optional<double> M1;
  std::optional<double> M2;
};

namespace detail {

/// Evaluates f on the exact rationals when available, else on doubles.
template <class F>
Real lift(const Real& a, const Real& b, F&& f) {
  if (a.exact && b.exact) return Real(f(*a.exact, *b.exact));
  return Real::inexact(f(a.value, b.value));
}

template <class T>
T j_lower(const T& C, const T& delta) {
  return T(2) - (T(1) - delta) / (T(2) * C + T(1));
}

template <class T>
T j_upper(const T& C, const T& delta) {
  if (C < T(1)) return T(2) + (T(1) - delta) / (C * C);
  return T(2) + (T(1) - delta) / (T(2) * C - T(1));
}

inline void require_scriptC(const Real& C) {
  if (!std::isfinite(C.value) || C.value < 0.0)
    throw PreconditionError("scriptC must be a finite nonnegative number", std::nullopt, C.value);
}

}  // namespace detail

/// J_delta = 2 + (1 - delta)(J - 2), the exact solution set of the quadratic
/// condition (1-delta) t^2 - |p-2| C t + (p-2)/4 >= 0 for all t >= 1/2.
/// C = 0 is accepted as the limit case (no upper restriction).
inline Interval j_delta_interval(const Real& C, const Real& delta) {
  detail::require_scriptC(C);
  if (!(delta.value >= 0.0 && delta.value < 1.0)) throw PreconditionError("delta must lie in [0, 1)", std::nullopt, delta.value);
  Interval out;
  out.lo = Endpoint::finite(detail::lift(C, delta, [](auto c, auto dl) -> decltype(c) { return detail::j_lower(c, dl); }), true);
  if (C.value == 0.0)
    out.hi = Endpoint::at_infinity(true);
  else
    out.hi = Endpoint::finite(detail::lift(C, delta, [](auto c, auto dl) -> decltype(c) { return detail::j_upper(c, dl); }), true);
  return out;
}

inline ExponentReport dissipativity_intervals(const Real& C, const Real& delta = Real(0.0)) {
  ExponentReport r;
  r.scriptC = C;
  r.delta = delta;
  r.J = j_delta_interval(C, Real(0.0));
  r.J_delta = j_delta_interval(C, delta);
  r.Jtilde = r.J;
  r.Jtilde.hi.closed = false;

  const Real one(Rational(1));
  if (C.value == 0.0) {
    r.cond_p_window = {Endpoint::finite(Real(Rational(1)), false), Endpoint::at_infinity(true)};
  } else {
    // |1/p - 1/2| <= 1/(2(4C+1))  <=>  p in [(4C+1)/(2C+1), (4C+1)/(2C)].
    // The lower end is the lower end of J; write both ends in the same form
    // as J so the double path rounds identically.
    r.cond_p_window.lo = r.J.lo;
    r.cond_p_window.hi = Endpoint::finite(detail::lift(C, one, [](auto c, auto) -> decltype(c) { return 2 + 1 / (2 * c); }), true);
  }
  if (C.value == 0.0) {
    r.domain_window = {Endpoint::finite(Real(Rational(1)), false), Endpoint::at_infinity(true)};
  } else {
    r.domain_window.lo = Endpoint::finite(detail::lift(C, one, [](auto c, auto) -> decltype(c) { return 1 + 6 * c / (4 * c + 1); }), false);
    r.domain_window.hi = Endpoint::finite(
        detail::lift(C, one, [](auto c, auto) -> decltype(c) { return decltype(c)(3) / 2 + 1 / (4 * c); }), false);
  }
  return r;
}

// ---------------------------------------------------------------------------
// g_p and the dissipativity gain
// ---------------------------------------------------------------------------

/// g_p(sigma) = (-1 + |p-2| C sigma) A + (|p-2| C / (4 sigma) - (p-2)/4) B.
inline double gp_value(double A, double B, double p, double C, double sigma) {
  return (-1.0 + std::abs(p - 2) * C * sigma) * A + (std::abs(p - 2) * C / (4 * sigma) - (p - 2) / 4) * B;
}

struct GpMin {
  double min = 0.0;
  std::optional<double> argmin;  // empty when B = 0 (no interior minimizer)
};

inline GpMin gp_min(double A, double B, double p, double C) {
  if (!(A > 0.0)) throw PreconditionError("gp_min: A must be positive", std::nullopt, A);
  if (!(B >= 0.0)) throw PreconditionError("gp_min: B must be nonnegative", std::nullopt, B);
  if (B > 4 * A) throw PreconditionError("gp_min: B exceeds 4A", std::nullopt, B - 4 * A);
  if (B == 0.0) return {-A, std::nullopt};
  return {-A - (p - 2) / 4 * B + std::abs(p - 2) * C * std::sqrt(A * B), std::sqrt(B / (4 * A))};
}

struct DeltaResult {
  double delta = 0.0;
  bool out_of_range = false;
  bool supremum_not_attained = false;
};

/// Largest delta with p in J_delta. Outside Jtilde returns 0 flagged; p = 2
/// returns 1 flagged (every delta < 1 works).
inline DeltaResult max_delta_for(const Real& p, const Real& C) {
  detail::require_scriptC(C);
  if (!(p.value > 1.0)) return {0.0, true, false};
  const Interval Jt = dissipativity_intervals(C).Jtilde;
  if (!Jt.contains(p)) return {0.0, true, false};
  if (p.exact ? *p.exact == 2 : p.value == 2.0) return {1.0, false, true};
  double delta;
  if (p.value > 2.0) {
    if (Jt.hi.infinite) return {1.0, false, true};
    Real r = detail::lift(p, Jt.hi.real(), [](auto pp, auto hi) -> decltype(pp) { return 1 - (pp - 2) / (hi - 2); });
    delta = r.value;
  } else {
    Real r = detail::lift(p, Jt.lo.real(), [](auto pp, auto lo) -> decltype(pp) { return 1 - (2 - pp) / (2 - lo); });
    delta = r.value;
  }
  return {std::clamp(delta, 0.0, 1.0), false, false};
}

// ---------------------------------------------------------------------------
// Theta, Lambda_p and the closed-form optimum
// ---------------------------------------------------------------------------

struct LambdaInputs {
  double p = 2.0;
  double scriptC = 0.0;
  double c0 = 0.0;
  double gamma = 0.0;
  double C_gamma = 0.0;
  double v0 = 1.0;
};

struct ThetaLambda {
  double Theta = 0.0;
  double Lambda = 0.0;
  double Lambda_alt = 0.0;  // the equivalent (gamma + C_gamma v0^{-3/2}) form
};

inline double theta_of(double p, double C) {
  return p < 2.0 ? p - 1 - 2 * C * (5 - 2 * p) : 1 - 2 * C * (2 * p - 3);
}

inline void check_lambda_inputs(const LambdaInputs& in) {
  if (!(in.scriptC > 0.0 && in.scriptC < 0.5))
    throw PreconditionError("scriptC must lie in (0, 1/2)", std::nullopt, in.scriptC);
  if (!(in.v0 > 0.0)) throw PreconditionError("v0 must be positive", std::nullopt, in.v0);
  if (in.c0 < 0 || in.gamma < 0 || in.C_gamma < 0)
    throw PreconditionError("c0, gamma and C_gamma must be nonnegative");
  const Interval w = dissipativity_intervals(Real::inexact(in.scriptC)).domain_window;
  if (!w.contains(in.p)) throw PreconditionError("p lies outside the domain window " + w.str(), std::nullopt, in.p);
}

inline ThetaLambda theta_lambda(const LambdaInputs& in) {
  check_lambda_inputs(in);
  ThetaLambda out;
  out.Theta = theta_of(in.p, in.scriptC);
  if (!(out.Theta > 0.0)) throw PreconditionError("Theta is not positive", std::nullopt, out.Theta);
  const double pm1 = in.p - 1, k = 1 + in.c0 + 2 * in.scriptC;
  const double g1 = in.gamma * std::pow(in.v0, 1.5) + in.C_gamma;
  out.Lambda = 1 - pm1 * pm1 * g1 * g1 * k * k / (4 * in.v0 * in.v0 * in.v0 * out.Theta);
  const double g2 = in.gamma + in.C_gamma * std::pow(in.v0, -1.5);
  out.Lambda_alt = 1 - pm1 * pm1 * g2 * g2 * k * k / (4 * out.Theta);
  if (std::abs(out.Lambda - out.Lambda_alt) > 1e-12 * std::max(1.0, std::abs(out.Lambda)))
    throw Error("theta_lambda: the two forms of Lambda_p disagree");
  return out;
}

/// Coefficients of psi~1 = e1 - a1 e0 - b1 e1 - c1 e2 - d1 e3 and
/// psi2 = 1 - a2/e0 - b2/e1 - c2/e2 - d2/e3. Pair i is (x1[i], x2[i]) with
/// i = 0..3 standing for a, b, c, d.
struct AppendixBProblem {
  std::array<double, 4> x1{};
  std::array<double, 4> x2{};
  double e1 = 0.0;

  double psi_tilde1(const std::array<double, 4>& eps) const {
    double s = e1;
    for (int i = 0; i < 4; ++i) s -= x1[i] * eps[i];
    return s;
  }
  double psi2(const std::array<double, 4>& eps) const {
    double s = 1.0;
    for (int i = 0; i < 4; ++i)
      if (x2[i] != 0.0) s -= x2[i] / eps[i];
    return s;
  }
};

inline AppendixBProblem appendixB_problem_for(const LambdaInputs& in) {
  check_lambda_inputs(in);
  const double pm1 = in.p - 1, v3 = in.v0 * in.v0 * in.v0;
  AppendixBProblem pr;
  pr.x1 = {pm1 * (1 + in.c0) * in.gamma, pm1 * (1 + in.c0) * in.C_gamma, in.scriptC * pm1 * in.gamma,
           in.scriptC * pm1 * in.C_gamma};
  pr.x2 = {pr.x1[0] / 4, pr.x1[1] / (4 * v3), pr.x1[2], pr.x1[3] / v3};
  pr.e1 = theta_of(in.p, in.scriptC);
  return pr;
}

/// psi1 at the given parameters: psi~1 with the (p - 2) shift removed for p < 2.
inline double psi1_of(const AppendixBProblem& pr, double p, const std::array<double, 4>& eps) {
  return pr.psi_tilde1(eps) - (p < 2.0 ? p - 2.0 : 0.0);
}

struct AppendixBSolution {
  double sup = 1.0;
  std::array<std::optional<double>, 4> eps;
  std::array<bool, 4> degenerate{};
  double slack = 0.0;  // e1 - sum over non-degenerate pairs except a of x1 * eps
  double psi2_at_eps = 1.0;
};

/// Closed-form supremum 1 - (sum_i sqrt(x1_i x2_i))^2 / e1 with the stationary
/// point eps_i = e1 sqrt(x2_i) / (sqrt(x1_i) S). A pair with x1 x2 = 0 drops
/// out of the problem (its eps is left empty) when allow_degenerate is set.
inline AppendixBSolution appendixB_solve(const AppendixBProblem& pr, bool allow_degenerate = true) {
  if (!(pr.e1 > 0.0)) throw PreconditionError("appendixB_solve: e1 must be positive", std::nullopt, pr.e1);
  AppendixBSolution sol;
  double S = 0.0;
  for (int i = 0; i < 4; ++i) {
    if (!(pr.x1[i] >= 0.0) || !(pr.x2[i] >= 0.0) || !std::isfinite(pr.x1[i]) || !std::isfinite(pr.x2[i]))
      throw PreconditionError("appendixB_solve: coefficients must be finite and nonnegative");
    sol.degenerate[i] = pr.x1[i] == 0.0 || pr.x2[i] == 0.0;
    if (sol.degenerate[i] && !allow_degenerate)
      throw PreconditionError("appendixB_solve: vanishing coefficient pair " + std::to_string(i));
    if (!sol.degenerate[i]) S += std::sqrt(pr.x1[i] * pr.x2[i]);
  }
  sol.sup = 1.0 - S * S / pr.e1;
  if (S == 0.0) {
    sol.slack = pr.e1;
    sol.psi2_at_eps = 1.0;
    return sol;
  }
  std::array<double, 4> eps{};
  int first = -1;
  for (int i = 0; i < 4; ++i) {
    if (sol.degenerate[i]) continue;
    if (first < 0) first = i;
    eps[i] = pr.e1 * std::sqrt(pr.x2[i]) / (std::sqrt(pr.x1[i]) * S);
  }
  // Recover the first active parameter from the constraint psi~1 = 0.
  double slack = pr.e1;
  for (int i = 0; i < 4; ++i)
    if (!sol.degenerate[i] && i != first) slack -= pr.x1[i] * eps[i];
  if (!(slack > 0.0)) throw Error("appendixB_solve: active-constraint slack is not positive");
  sol.slack = slack;
  eps[first] = slack / pr.x1[first];
  double psi2 = 1.0;
  for (int i = 0; i < 4; ++i) {
    if (sol.degenerate[i]) continue;
    sol.eps[i] = eps[i];
    psi2 -= pr.x2[i] / eps[i];
  }
  sol.psi2_at_eps = psi2;
  if (std::abs(psi2 - sol.sup) > 1e-10 * std::max(1.0, std::abs(sol.sup)))
    throw Error("appendixB_solve: psi2 at the stationary point does not match the closed form");
  return sol;
}

// ---------------------------------------------------------------------------
// Domain-norm constants
// ---------------------------------------------------------------------------

struct DomainNormConstants {
  double M1 = 0.0;
  double M2 = 0.0;
};

/// M1 = 1 / (2 (1 + (c1 + 1) K_op)), M2 = 1 + c1 + 1/v0.
inline DomainNormConstants domain_norm_constants(double c1, double K_op, double v0) {
  if (!(c1 >= 0.0)) throw PreconditionError("c1 must be nonnegative", std::nullopt, c1);
  if (!(K_op > 0.0)) throw PreconditionError("K_op must be positive", std::nullopt, K_op);
  if (!(v0 > 0.0)) throw PreconditionError("v0 must be positive", std::nullopt, v0);
  return {1.0 / (2.0 * (1.0 + (c1 + 1.0) * K_op)), 1.0 + c1 + 1.0 / v0};
}

}  // namespace sglab
