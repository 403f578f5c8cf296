#pragma once

// Core value types shared by every module: coupling block arrays, complex
// direction sets, axis-aligned boxes and the error hierarchy.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sglab {

using Complex = std::complex<double>;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A matrix that must be positive definite is not; carries the offending
/// (smallest) eigenvalue.
class NotPositiveDefiniteError : public Error {
 public:
  NotPositiveDefiniteError(const std::string& what, double eigenvalue)
      : Error(what), eigenvalue_(eigenvalue) {}
  double eigenvalue() const noexcept { return eigenvalue_; }

 private:
  double eigenvalue_;
};

/// A documented precondition failed at a specific point of the domain.
class PreconditionError : public Error {
 public:
  PreconditionError(const std::string& what, std::optional<VectorXd> witness = std::nullopt,
                    double value = std::nan(""))
      : Error(what), witness_(std::move(witness)), value_(value) {}
  const std::optional<VectorXd>& witness() const noexcept { return witness_; }
  double value() const noexcept { return value_; }

 private:
  std::optional<VectorXd> witness_;
  double value_;
};

inline std::string format_point(const VectorXd& x) {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x(i);
  os << ')';
  return os.str();
}

// ---------------------------------------------------------------------------
// BlockArray: d x d array of real m x m blocks A^{hk}
// ---------------------------------------------------------------------------

/// Square array of coupling blocks. The stacked ("big") matrix places entry
/// a^{hk}_{ij} at row h*m + i, column k*m + j.
class BlockArray {
 public:
  BlockArray() = default;
  BlockArray(int d, int m) : d_(d), m_(m), blocks_(static_cast<std::size_t>(d * d), MatrixXd::Zero(m, m)) {
    if (d <= 0 || m <= 0) throw DimensionError("BlockArray: dimensions must be positive");
  }

  int dim() const noexcept { return d_; }
  int system_size() const noexcept { return m_; }

  MatrixXd& operator()(int h, int k) { return blocks_[static_cast<std::size_t>(h * d_ + k)]; }
  const MatrixXd& operator()(int h, int k) const { return blocks_[static_cast<std::size_t>(h * d_ + k)]; }

  MatrixXd stacked() const {
    MatrixXd big(d_ * m_, d_ * m_);
    for (int h = 0; h < d_; ++h)
      for (int k = 0; k < d_; ++k) big.block(h * m_, k * m_, m_, m_) = (*this)(h, k);
    return big;
  }

  static BlockArray from_stacked(const MatrixXd& big, int d, int m) {
    if (big.rows() != d * m || big.cols() != d * m)
      throw DimensionError("BlockArray::from_stacked: expected a square matrix of size d*m");
    BlockArray out(d, m);
    for (int h = 0; h < d; ++h)
      for (int k = 0; k < d; ++k) out(h, k) = big.block(h * m, k * m, m, m);
    return out;
  }

  /// Throws DimensionError unless every block is m x m.
  void validate() const {
    if (static_cast<int>(blocks_.size()) != d_ * d_) throw DimensionError("BlockArray: wrong block count");
    for (const auto& b : blocks_)
      if (b.rows() != m_ || b.cols() != m_) throw DimensionError("BlockArray: block is not m x m");
  }

  bool all_finite() const {
    for (const auto& b : blocks_)
      if (!b.allFinite()) return false;
    return true;
  }

  BlockArray& operator+=(const BlockArray& o) {
    require_same_shape(o);
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i] += o.blocks_[i];
    return *this;
  }
  BlockArray& operator-=(const BlockArray& o) {
    require_same_shape(o);
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i] -= o.blocks_[i];
    return *this;
  }
  BlockArray& operator*=(double s) {
    for (auto& b : blocks_) b *= s;
    return *this;
  }
  friend BlockArray operator+(BlockArray a, const BlockArray& b) { return a += b; }
  friend BlockArray operator-(BlockArray a, const BlockArray& b) { return a -= b; }
  friend BlockArray operator*(double s, BlockArray a) { return a *= s; }

  void require_same_shape(const BlockArray& o) const {
    if (o.d_ != d_ || o.m_ != m_) throw DimensionError("BlockArray: shape mismatch");
  }

 private:
  int d_ = 0;
  int m_ = 0;
  std::vector<MatrixXd> blocks_;
};

// ---------------------------------------------------------------------------
// DirectionSet: d complex m-vectors (theta^1, ..., theta^d)
// ---------------------------------------------------------------------------

struct DirectionSet {
  std::vector<VectorXcd> theta;

  DirectionSet() = default;
  explicit DirectionSet(std::vector<VectorXcd> t) : theta(std::move(t)) {}
  static DirectionSet zeros(int d, int m) { return DirectionSet(std::vector<VectorXcd>(d, VectorXcd::Zero(m))); }

  int dim() const noexcept { return static_cast<int>(theta.size()); }
  int system_size() const noexcept { return theta.empty() ? 0 : static_cast<int>(theta.front().size()); }

  /// Index k*m + j holds theta^k_j.
  VectorXcd stacked() const {
    const int d = dim(), m = system_size();
    VectorXcd out(d * m);
    for (int k = 0; k < d; ++k) {
      if (theta[k].size() != m) throw DimensionError("DirectionSet: vectors of unequal length");
      out.segment(k * m, m) = theta[k];
    }
    return out;
  }

  static DirectionSet from_stacked(const VectorXcd& v, int d, int m) {
    if (v.size() != d * m) throw DimensionError("DirectionSet::from_stacked: size mismatch");
    DirectionSet out;
    for (int k = 0; k < d; ++k) out.theta.emplace_back(v.segment(k * m, m));
    return out;
  }

  bool is_zero() const {
    for (const auto& t : theta)
      if (t.squaredNorm() != 0.0) return false;
    return true;
  }
};

// ---------------------------------------------------------------------------
// Axis-aligned boxes
// ---------------------------------------------------------------------------

struct Box {
  VectorXd lo;
  VectorXd hi;

  int dim() const noexcept { return static_cast<int>(lo.size()); }

  void validate() const {
    if (lo.size() == 0 || lo.size() != hi.size()) throw DimensionError("Box: inconsistent corner dimensions");
    for (Eigen::Index i = 0; i < lo.size(); ++i)
      if (!(hi(i) > lo(i))) throw PreconditionError("Box: empty along axis " + std::to_string(i));
  }

  VectorXd center() const { return 0.5 * (lo + hi); }
  VectorXd width() const { return hi - lo; }

  bool contains(const VectorXd& x, double slack = 0.0) const {
    for (Eigen::Index i = 0; i < lo.size(); ++i)
      if (x(i) < lo(i) - slack || x(i) > hi(i) + slack) return false;
    return true;
  }

  bool contains(const Box& other) const {
    return (other.lo.array() >= lo.array()).all() && (other.hi.array() <= hi.array()).all();
  }

  Box shifted(const VectorXd& offset) const { return {lo + offset, hi + offset}; }

  static Box cube(int d, double a, double b) {
    return {VectorXd::Constant(d, a), VectorXd::Constant(d, b)};
  }
};

}  // namespace sglab
