#pragma once

// Pointwise linear algebra for the coupled operator
//   A u = sum_{h,k} D_h (Q^{hk} D_k u) - V u,   Q^{hk} = q_{hk} I_m + A^{hk}.
//
// Forms use the inner product (x, y) = sum_i x_i conj(y_i). Block data are
// flattened with the ordering of BlockArray::stacked(), i.e. the "big" matrix
// has a^{hk}_{ij} at row h*m+i, column k*m+j, and a direction set theta is
// flattened to the vector with theta^k_j at index k*m+j. With that ordering
//   sum_{h,k} (A^{hk} theta^k, eta^h) = eta^* Big theta.

#include "semigroup_lab/types.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

namespace sglab {

/// Relative threshold for positive definiteness: min eig > kPdTol * max eig.
inline constexpr double kPdTol = 1e-10;

struct CoupledBlockSample {
  int d = 0;
  int m = 0;
  MatrixXd Q;
  BlockArray A;
  MatrixXd V;

  CoupledBlockSample() = default;
  CoupledBlockSample(MatrixXd q, BlockArray a, MatrixXd v)
      : d(static_cast<int>(q.rows())), m(a.system_size()), Q(std::move(q)), A(std::move(a)), V(std::move(v)) {
    validate();
  }

  void validate() const {
    if (Q.rows() != d || Q.cols() != d) throw DimensionError("CoupledBlockSample: Q must be d x d");
    if (A.dim() != d || A.system_size() != m) throw DimensionError("CoupledBlockSample: A must be d x d blocks of m x m");
    A.validate();
    if (V.rows() != m || V.cols() != m) throw DimensionError("CoupledBlockSample: V must be m x m");
    if (!Q.allFinite() || !A.all_finite() || !V.allFinite()) throw Error("CoupledBlockSample: nonfinite coefficient entry");
  }
};

struct PointwiseConstants {
  double c0 = 0.0;
  double C_re = 0.0;
  double C_im = 0.0;
  double scriptC = 0.0;
  double lambda_min_sym = 0.0;
  double qs_min_eig = 0.0;
};

// ---------------------------------------------------------------------------
// Splitting and forms
// ---------------------------------------------------------------------------

inline MatrixXd sym_part(const MatrixXd& M) { return 0.5 * (M + M.transpose()); }
inline MatrixXd antisym_part(const MatrixXd& M) { return 0.5 * (M - M.transpose()); }

/// A_s^{hk} = (A^{hk} + (A^{kh})^T)/2 and A_as^{hk} = (A^{hk} - (A^{kh})^T)/2.
inline std::pair<BlockArray, BlockArray> split_sym_antisym(const BlockArray& A) {
  A.validate();
  const int d = A.dim(), m = A.system_size();
  BlockArray s(d, m), as(d, m);
  for (int h = 0; h < d; ++h)
    for (int k = 0; k < d; ++k) {
      s(h, k) = 0.5 * (A(h, k) + A(k, h).transpose());
      as(h, k) = 0.5 * (A(h, k) - A(k, h).transpose());
    }
  return {s, as};
}

namespace detail {
inline void check_directions(const DirectionSet& t, int d, int m, const char* who) {
  if (t.dim() != d) throw DimensionError(std::string(who) + ": direction set has wrong length");
  for (const auto& v : t.theta)
    if (v.size() != m) throw DimensionError(std::string(who) + ": direction vector has wrong size");
}
}  // namespace detail

/// sum_{h,k,i,j} a^{hk}_{ij} theta^k_j conj(eta^h_i).
inline Complex block_form(const BlockArray& A, const DirectionSet& theta, const DirectionSet& eta) {
  A.validate();
  const int d = A.dim(), m = A.system_size();
  detail::check_directions(theta, d, m, "block_form");
  detail::check_directions(eta, d, m, "block_form");
  Complex sum = 0.0;
  for (int h = 0; h < d; ++h)
    for (int k = 0; k < d; ++k) sum += eta.theta[h].dot(A(h, k).cast<Complex>() * theta.theta[k]);
  return sum;
}

/// (Q xi, zeta) = sum_{h,k} q_{hk} xi_k conj(zeta_h) for xi, zeta in C^d.
inline Complex q_form(const MatrixXd& Q, const VectorXcd& xi, const VectorXcd& zeta) {
  if (Q.rows() != xi.size() || Q.rows() != zeta.size() || Q.rows() != Q.cols())
    throw DimensionError("q_form: dimension mismatch");
  return zeta.dot(Q.cast<Complex>() * xi);
}

/// sum_{h,k} q_{hk} (theta^k, eta^h): the scalar part of the coefficient
/// acting on direction sets.
inline Complex scalar_block_form(const MatrixXd& Q, const DirectionSet& theta, const DirectionSet& eta) {
  const int d = static_cast<int>(Q.rows());
  const int m = theta.system_size();
  detail::check_directions(theta, d, m, "scalar_block_form");
  detail::check_directions(eta, d, m, "scalar_block_form");
  Complex sum = 0.0;
  for (int h = 0; h < d; ++h)
    for (int k = 0; k < d; ++k) sum += Q(h, k) * eta.theta[h].dot(theta.theta[k]);
  return sum;
}

/// The stacked matrix of Q (x) I_m in the block ordering above.
inline MatrixXd kron_identity(const MatrixXd& Q, int m) {
  const int d = static_cast<int>(Q.rows());
  MatrixXd out = MatrixXd::Zero(d * m, d * m);
  for (int h = 0; h < d; ++h)
    for (int k = 0; k < d; ++k) out.block(h * m, k * m, m, m) = Q(h, k) * MatrixXd::Identity(m, m);
  return out;
}

// ---------------------------------------------------------------------------
// Spectral constants
// ---------------------------------------------------------------------------

/// Eigen-decomposition of a symmetric positive definite matrix; throws
/// NotPositiveDefiniteError (with the smallest eigenvalue) otherwise.
inline Eigen::SelfAdjointEigenSolver<MatrixXd> require_pd(const MatrixXd& S, const std::string& what) {
  if (!S.allFinite()) throw Error(what + ": nonfinite entries");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(S);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().cwiseAbs().maxCoeff();
  if (!(lo > kPdTol * hi) || hi == 0.0) {
    std::ostringstream os;
    os.precision(17);
    os << what << " is not positive definite (smallest eigenvalue " << lo << ")";
    throw NotPositiveDefiniteError(os.str(), lo);
  }
  return es;
}

inline double spectral_norm(const MatrixXd& M) {
  if (M.size() == 0) return 0.0;
  Eigen::JacobiSVD<MatrixXd> svd(M);
  return svd.singularValues()(0);
}

/// Smallest c0 with |Im(Q xi, xi)| <= c0 Re(Q xi, xi) for all complex xi.
/// For xi = a + ib: Re = a^T Qs a + b^T Qs b and Im = 2 a^T Qas b, so the
/// supremum is the largest singular value of Qs^{-1/2} Qas Qs^{-1/2}.
inline double c0_pointwise(const MatrixXd& Q) {
  if (Q.rows() != Q.cols() || Q.rows() == 0) throw DimensionError("c0_pointwise: Q must be square");
  auto es = require_pd(sym_part(Q), "symmetric part of Q");
  const VectorXd inv_sqrt = es.eigenvalues().cwiseSqrt().cwiseInverse();
  const MatrixXd W = es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose();
  return spectral_norm(W * antisym_part(Q) * W);
}

/// Sector constant of a matrix whose symmetric part is only semidefinite:
/// sup |Im(M z, z)| / Re(M z, z). Unbounded when the antisymmetric part does
/// not vanish on the kernel of the symmetric part.
struct SectorConstant {
  bool bounded = true;
  double value = 0.0;
  double min_sym_eig = 0.0;
};

inline SectorConstant sector_constant(const MatrixXd& M, double tol = 1e-12) {
  if (M.rows() != M.cols() || M.rows() == 0) throw DimensionError("sector_constant: matrix must be square");
  if (!M.allFinite()) throw Error("sector_constant: nonfinite entries");
  const MatrixXd S = sym_part(M), K = antisym_part(M);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(S);
  const VectorXd& lam = es.eigenvalues();
  const MatrixXd& U = es.eigenvectors();
  SectorConstant out;
  out.min_sym_eig = lam.minCoeff();
  const double scale = std::max({lam.cwiseAbs().maxCoeff(), K.cwiseAbs().maxCoeff(), 1e-300});
  const double cut = std::max(tol, kPdTol) * scale;
  if (out.min_sym_eig < -cut) throw PreconditionError("sector_constant: symmetric part is not positive semidefinite", std::nullopt, out.min_sym_eig);
  std::vector<int> range, kernel;
  for (int i = 0; i < lam.size(); ++i) (lam(i) > cut ? range : kernel).push_back(i);
  const MatrixXd Kt = U.transpose() * K * U;
  // Im(M z, z) = 2 a^T K b; any coupling between kernel and anything makes the
  // ratio unbounded (take a in the kernel, b with Re-form arbitrarily small).
  for (int i : kernel)
    for (int j = 0; j < lam.size(); ++j)
      if (std::abs(Kt(i, j)) > tol * scale) {
        out.bounded = false;
        out.value = std::numeric_limits<double>::infinity();
        return out;
      }
  if (range.empty()) return out;
  MatrixXd R(range.size(), range.size());
  for (std::size_t a = 0; a < range.size(); ++a)
    for (std::size_t b = 0; b < range.size(); ++b)
      R(a, b) = Kt(range[a], range[b]) / std::sqrt(lam(range[a]) * lam(range[b]));
  out.value = spectral_norm(R);
  return out;
}

/// Constants of the coupling blocks relative to the scalar form of Q:
///   C_re: largest generalized eigenvalue of (sym Big, Qs (x) I_m)
///   C_im: largest singular value of L^{-1} antisym(Big) L^{-T}, D = L L^T.
inline PointwiseConstants scriptC_pointwise(const CoupledBlockSample& s) {
  s.validate();
  PointwiseConstants pc;
  const MatrixXd Qs = sym_part(s.Q);
  auto qes = require_pd(Qs, "symmetric part of Q");
  pc.qs_min_eig = qes.eigenvalues().minCoeff();
  pc.c0 = c0_pointwise(s.Q);

  const MatrixXd big = s.A.stacked();
  const MatrixXd S = sym_part(big), K = antisym_part(big);
  const MatrixXd D = kron_identity(Qs, s.m);
  Eigen::LLT<MatrixXd> llt(D);
  if (llt.info() != Eigen::Success) throw NotPositiveDefiniteError("Qs (x) I is not positive definite", pc.qs_min_eig);
  const MatrixXd L = llt.matrixL();
  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> ges(S, D, Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
  if (ges.info() != Eigen::Success) throw Error("scriptC_pointwise: generalized eigensolver failed");
  pc.C_re = std::max(0.0, ges.eigenvalues().maxCoeff());
  const MatrixXd Kt = L.triangularView<Eigen::Lower>().solve(
      L.triangularView<Eigen::Lower>().solve(K).transpose());
  pc.C_im = spectral_norm(Kt);
  pc.scriptC = std::max(pc.C_re, pc.C_im);
  Eigen::SelfAdjointEigenSolver<MatrixXd> ses(S, Eigen::EigenvaluesOnly);
  pc.lambda_min_sym = ses.eigenvalues().minCoeff();
  return pc;
}

// ---------------------------------------------------------------------------
// Mixed Cauchy-Schwarz
// ---------------------------------------------------------------------------

enum class MixedCsMode {
  Antisymmetric,  // |form(A_as)| <= C0 sqrt(Re M(theta)) sqrt(Re M(eta))
  Full,           // |form(A)| <= (C0 + C1) sqrt(...) sqrt(...)
};

/// RHS - LHS of the mixed Cauchy-Schwarz inequality on one pair of direction
/// sets. Nonnegative means the inequality holds on this pair.
inline double mixed_cs_margin(const BlockArray& A, const BlockArray& M, const DirectionSet& theta,
                              const DirectionSet& eta, double C0, double C1,
                              MixedCsMode mode = MixedCsMode::Antisymmetric) {
  A.require_same_shape(M);
  const double mt = block_form(M, theta, theta).real();
  const double me = block_form(M, eta, eta).real();
  const double scale = std::max(1.0, std::abs(mt) + std::abs(me));
  if (mt < -1e-12 * scale || me < -1e-12 * scale)
    throw PreconditionError("mixed_cs_margin: Re M-form is negative on a supplied direction set", std::nullopt,
                            std::min(mt, me));
  double lhs, c;
  if (mode == MixedCsMode::Antisymmetric) {
    lhs = std::abs(block_form(split_sym_antisym(A).second, theta, eta));
    c = C0;
  } else {
    lhs = std::abs(block_form(A, theta, eta));
    c = C0 + C1;
  }
  return c * std::sqrt(std::max(0.0, mt)) * std::sqrt(std::max(0.0, me)) - lhs;
}

}  // namespace sglab
