#pragma once

// Small derivative-free optimizers for the test oracles.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

/// Nelder-Mead minimization from x0 with initial simplex size `step`.
inline std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x0, double step = 0.5, int max_iter = 20000,
                                       double ftol = 1e-15) {
  const std::size_t n = x0.size();
  std::vector<std::vector<double>> pts(n + 1, x0);
  for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += step;
  std::vector<double> val(n + 1);
  for (std::size_t i = 0; i <= n; ++i) val[i] = f(pts[i]);
  std::vector<std::size_t> idx(n + 1);
  for (int it = 0; it < max_iter; ++it) {
    for (std::size_t i = 0; i <= n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return val[a] < val[b]; });
    const auto best = idx.front(), worst = idx.back(), second = idx[n - 1];
    if (std::abs(val[worst] - val[best]) <= ftol * (1 + std::abs(val[best]))) break;
    std::vector<double> c(n, 0.0);
    for (std::size_t i = 0; i <= n; ++i)
      if (i != worst)
        for (std::size_t j = 0; j < n; ++j) c[j] += pts[i][j] / n;
    auto along = [&](double t) {
      std::vector<double> y(n);
      for (std::size_t j = 0; j < n; ++j) y[j] = c[j] + t * (pts[worst][j] - c[j]);
      return y;
    };
    auto xr = along(-1.0);
    double fr = f(xr);
    if (fr < val[best]) {
      auto xe = along(-2.0);
      double fe = f(xe);
      if (fe < fr) pts[worst] = xe, val[worst] = fe;
      else pts[worst] = xr, val[worst] = fr;
    } else if (fr < val[second]) {
      pts[worst] = xr, val[worst] = fr;
    } else {
      auto xc = along(fr < val[worst] ? -0.5 : 0.5);
      double fc = f(xc);
      if (fc < std::min(fr, val[worst])) {
        pts[worst] = xc, val[worst] = fc;
      } else {
        for (std::size_t i = 0; i <= n; ++i) {
          if (i == best) continue;
          for (std::size_t j = 0; j < n; ++j) pts[i][j] = pts[best][j] + 0.5 * (pts[i][j] - pts[best][j]);
          val[i] = f(pts[i]);
        }
      }
    }
  }
  std::size_t b = 0;
  for (std::size_t i = 1; i <= n; ++i)
    if (val[i] < val[b]) b = i;
  return pts[b];
}

/// Golden-section minimization of a unimodal function on [a, b].
inline double golden_min(const std::function<double(double)>& f, double a, double b, int iters = 200) {
  const double r = (std::sqrt(5.0) - 1) / 2;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < iters && b - a > 1e-15 * (1 + std::abs(a)); ++i) {
    if (fc < fd) {
      b = d, d = c, fd = fc;
      c = b - r * (b - a), fc = f(c);
    } else {
      a = c, c = d, fc = fd;
      d = a + r * (b - a), fd = f(d);
    }
  }
  return std::min(fc, fd);
}

}  // namespace oracle
