#pragma once

// Concrete coefficient families used by the CLI, the demos and the tests.
// Every family has the form Q(x) = s(x) Q^, A(x) = s(x) A^ with the radial
// profile s(x) = 1 + alpha |x|^2, so gradients are analytic.

#include "semigroup_lab/coefficient_models.hpp"

#include <Eigen/Dense>

#include <random>

namespace sglab::families {

struct Profile {
  double alpha = 0.0;
  double value(const VectorXd& x) const { return 1.0 + alpha * x.squaredNorm(); }
  VectorXd grad(const VectorXd& x) const { return 2.0 * alpha * x; }
};

struct Potential {
  enum class Kind { Zero, Constant, Weight };
  Kind kind = Kind::Zero;
  MatrixXd matrix;  // Constant: V itself
  double v0 = 1.0;  // Weight: V = (v0 + beta |x|^2) I
  double beta = 1.0;

  static Potential zero() { return {}; }
  static Potential constant(MatrixXd V) { return {Kind::Constant, std::move(V), 1.0, 0.0}; }
  static Potential weight(double v0, double beta) { return {Kind::Weight, MatrixXd(), v0, beta}; }

  MatrixFn as_fn(int m) const {
    switch (kind) {
      case Kind::Constant: {
        if (matrix.rows() != m || matrix.cols() != m) throw DimensionError("potential matrix must be m x m");
        MatrixXd V = matrix;
        return [V](const VectorXd&) { return V; };
      }
      case Kind::Weight: {
        const double a = v0, b = beta;
        return [a, b, m](const VectorXd& x) -> MatrixXd { return (a + b * x.squaredNorm()) * MatrixXd::Identity(m, m); };
      }
      default:
        return [m](const VectorXd&) -> MatrixXd { return MatrixXd::Zero(m, m); };
    }
  }

  /// The scalar weight v(x) with V = v I (Weight kind only).
  ScalarWeight weight_fn() const {
    if (kind != Kind::Weight) throw PreconditionError("potential is not of weight type");
    const double a = v0, b = beta;
    return {[a, b](const VectorXd& x) { return a + b * x.squaredNorm(); },
            [b](const VectorXd& x) -> VectorXd { return 2.0 * b * x; }};
  }
};

/// Q = s(x) Qh, A = s(x) Ah with analytic gradients.
inline CoefficientField scaled_field(MatrixXd Qh, BlockArray Ah, Profile prof, const Potential& pot) {
  CoefficientField f;
  f.d = static_cast<int>(Qh.rows());
  f.m = Ah.system_size();
  f.q = [Qh, prof](const VectorXd& x) -> MatrixXd { return prof.value(x) * Qh; };
  f.a = [Ah, prof](const VectorXd& x) { return prof.value(x) * Ah; };
  f.grad_q = [Qh, prof](const VectorXd& x) {
    const VectorXd g = prof.grad(x);
    std::vector<MatrixXd> out;
    for (int l = 0; l < g.size(); ++l) out.push_back(g(l) * Qh);
    return out;
  };
  f.grad_a = [Ah, prof](const VectorXd& x) {
    const VectorXd g = prof.grad(x);
    std::vector<BlockArray> out;
    for (int l = 0; l < g.size(); ++l) out.push_back(g(l) * Ah);
    return out;
  };
  f.v_mat = pot.as_fn(f.m);
  return f;
}

inline CoefficientField heat(int d, int m, const Potential& pot = Potential::zero()) {
  CoefficientField f = scaled_field(MatrixXd::Identity(d, d), BlockArray(d, m), Profile{0.0}, pot);
  f.claims.family = "heat";
  f.claims.c0 = 0.0;
  f.claims.scriptC = 0.0;
  return f;
}

namespace detail {

inline MatrixXd random_spd(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXd R(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) R(i, j) = g(rng);
  return R * R.transpose() / n + 0.5 * MatrixXd::Identity(n, n);
}

}  // namespace detail

/// Symmetric PD Q, coupling big matrix k0 lambda_Q(x) B with |B_ij| <= 1 and
/// sym(B) PSD (B also carries an antisymmetric part).
inline CoefficientField case_I(int d, int m, double k0, double alpha, std::uint64_t seed, const Potential& pot,
                               const SamplePlan& spot) {
  std::mt19937_64 rng(seed);
  const MatrixXd Q0 = detail::random_spd(rng, d);
  const double lam = Eigen::SelfAdjointEigenSolver<MatrixXd>(Q0).eigenvalues().minCoeff();
  const int n = d * m;
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXd R(n, n), W(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) R(i, j) = g(rng), W(i, j) = g(rng);
  MatrixXd B = R * R.transpose() + 0.5 * (W - W.transpose());
  B /= B.cwiseAbs().maxCoeff();
  const BlockArray Ah = BlockArray::from_stacked(k0 * lam * B, d, m);
  return make_symmetric_case_I(scaled_field(Q0, Ah, Profile{alpha}, pot), k0, spot);
}

/// A^{hk} = q_hk G with G = Lambda_G I_m (random == false) or a random
/// entrywise-nonnegative PSD matrix scaled so that lambda_max(G) = Lambda_G.
inline CoefficientField case_II(int d, int m, double Lambda_G, bool random_G, double alpha, std::uint64_t seed,
                                const Potential& pot, const SamplePlan& spot) {
  std::mt19937_64 rng(seed);
  const MatrixXd Q0 = detail::random_spd(rng, d);
  MatrixXd G = MatrixXd::Identity(m, m);
  if (random_G) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    MatrixXd R(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) R(i, j) = u(rng);
    G = R * R.transpose();
    G /= Eigen::SelfAdjointEigenSolver<MatrixXd>(G).eigenvalues().maxCoeff();
  }
  G *= Lambda_G;
  const Profile prof{alpha};
  MatrixFn Qf = [Q0, prof](const VectorXd& x) -> MatrixXd { return prof.value(x) * Q0; };
  MatrixGradFn gQ = [Q0, prof](const VectorXd& x) {
    const VectorXd gr = prof.grad(x);
    std::vector<MatrixXd> out;
    for (int l = 0; l < gr.size(); ++l) out.push_back(gr(l) * Q0);
    return out;
  };
  MatrixFn Gf = [G](const VectorXd&) { return G; };
  MatrixGradFn gG = [G, d](const VectorXd&) { return std::vector<MatrixXd>(d, MatrixXd::Zero(G.rows(), G.cols())); };
  return make_symmetric_case_II(d, m, Qf, gQ, Gf, gG, pot.as_fn(m), spot, Lambda_G);
}

/// Q = diag(q) + Q0 (Q0 antisymmetric) with coupling blocks admissible for
/// the constants k1, k2, k3. Diagonal blocks k2 q_hh (I + off-diagonal
/// entries in [0, 1/(2(m-1))]); off-diagonal blocks bounded by s k3 min q_rr
/// with s chosen so that the symmetrized coupling is diagonally dominant.
inline CoefficientField diag_antisym(int d, int m, double k1, double k2, double k3, double alpha, std::uint64_t seed,
                                     const Potential& pot, const SamplePlan& spot) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0), su(-1.0, 1.0);
  VectorXd q(d);
  for (int i = 0; i < d; ++i) q(i) = (k1 + 1.0) * (1.0 + u(rng));
  const double qmin = q.minCoeff();
  MatrixXd Qh = q.asDiagonal();
  if (d > 1)
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j) {
        const double r = su(rng) * k2 * qmin / (d - 1);
        Qh(i, j) = r;
        Qh(j, i) = -r;
      }
  const double rho = m > 1 ? 1.0 / (2.0 * (m - 1)) : 0.0;
  const double s = (d > 1 && k3 > 0) ? std::min(1.0, k2 / (2.0 * (d - 1) * m * k3)) : 1.0;
  BlockArray Ah(d, m);
  for (int h = 0; h < d; ++h)
    for (int k = 0; k < d; ++k) {
      MatrixXd B(m, m);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
          if (h == k)
            B(i, j) = k2 * q(h) * (i == j ? 1.0 : rho * u(rng));
          else
            B(i, j) = s * k3 * qmin * su(rng);
        }
      Ah(h, k) = B;
    }
  return make_diag_antisym(scaled_field(Qh, Ah, Profile{alpha}, pot), k1, k2, k3, spot);
}

}  // namespace sglab::families
