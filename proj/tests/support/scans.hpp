#pragma once

// Brute-force counterparts of the closed forms in constants_lab.

#include "semigroup_lab/constants_lab.hpp"
#include "support/optim.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace oracle {

// min over t in [1/2, 100] of (1-delta) t^2 - |p-2| C t + (p-2)/4 by dense scan.
inline double quad_scan_min(double p, double C, double delta) {
  double best = std::numeric_limits<double>::infinity();
  const int n = 400000;
  for (int i = 0; i <= n; ++i) {
    double t = 0.5 + 99.5 * i / n;
    best = std::min(best, (1 - delta) * t * t - std::abs(p - 2) * C * t + (p - 2) / 4);
  }
  // also the analytic vertex if it lies in range
  double tv = std::abs(p - 2) * C / (2 * (1 - delta));
  if (tv >= 0.5 && tv <= 100) best = std::min(best, (1 - delta) * tv * tv - std::abs(p - 2) * C * tv + (p - 2) / 4);
  return best;
}

inline double gp_scan(double A, double B, double p, double C) {
  // Dense log scan, then golden-section on the bracketing cell.
  const int n = 20000;
  double lo = std::log(1e-8), hi = std::log(1e3);
  double best = std::numeric_limits<double>::infinity();
  int bi = 0;
  for (int i = 0; i <= n; ++i) {
    double s = std::exp(lo + (hi - lo) * i / n);
    double v = sglab::gp_value(A, B, p, C, s);
    if (v < best) best = v, bi = i;
  }
  double a = std::exp(lo + (hi - lo) * std::max(0, bi - 1) / n);
  double b = std::exp(lo + (hi - lo) * std::min(n, bi + 1) / n);
  return std::min(best, golden_min([&](double s) { return sglab::gp_value(A, B, p, C, s); }, a, b));
}

// Numerical maximizer of psi2 over {psi~1 >= 0}. psi2 increases in every
// parameter, so the maximum lies on psi~1 = 0; parametrize that face by
// simplex weights w (softmax of free variables): eps_i = e1 w_i / x1_i.
inline double appendixB_numeric_sup(const sglab::AppendixBProblem& pr) {
  std::vector<int> act;
  for (int i = 0; i < 4; ++i)
    if (pr.x1[i] > 0 && pr.x2[i] > 0) act.push_back(i);
  if (act.empty()) return 1.0;
  auto psi2_w = [&](const std::vector<double>& z) {
    std::vector<double> w(act.size());
    double mx = 0;
    for (std::size_t i = 0; i + 1 < act.size(); ++i) mx = std::max(mx, z[i]);
    double s = 0;
    for (std::size_t i = 0; i < act.size(); ++i) s += w[i] = std::exp((i + 1 < act.size() ? z[i] : 0.0) - mx);
    double v = 1.0;
    for (std::size_t i = 0; i < act.size(); ++i) {
      int k = act[i];
      double eps = pr.e1 * (w[i] / s) / pr.x1[k];
      v -= pr.x2[k] / eps;
    }
    return v;
  };
  if (act.size() == 1) return psi2_w({});
  double best = -std::numeric_limits<double>::infinity();
  for (double start : {0.0, 1.0, -1.0}) {
    std::vector<double> z0(act.size() - 1, start);
    auto z = nelder_mead([&](const std::vector<double>& x) { return -psi2_w(x); }, z0, 0.7, 50000, 1e-16);
    z = nelder_mead([&](const std::vector<double>& x) { return -psi2_w(x); }, z, 0.05, 50000, 1e-16);
    best = std::max(best, psi2_w(z));
  }
  return best;
}

}  // namespace oracle
