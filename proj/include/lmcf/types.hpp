#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "lmcf/error.hpp"

namespace lmcf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr int kMaxDim = 3;
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kSqrt2 = std::numbers::sqrt2;

/// Fully symmetric third-order tensor in n <= 3 dimensions.
class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(int n) : n_(n) { data_.fill(0.0); }

  int dim() const { return n_; }
  double operator()(int i, int j, int k) const { return data_[idx(i, j, k)]; }
  double& operator()(int i, int j, int k) { return data_[idx(i, j, k)]; }

  /// Writes `value` into every index permutation of (i, j, k).
  void set_sym(int i, int j, int k, double value) {
    (*this)(i, j, k) = value;
    (*this)(i, k, j) = value;
    (*this)(j, i, k) = value;
    (*this)(j, k, i) = value;
    (*this)(k, i, j) = value;
    (*this)(k, j, i) = value;
  }

  /// Contraction T(v)_ij = sum_k T_ijk v_k.
  Mat contract(const Vec& v) const {
    Mat out = Mat::Zero(n_, n_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j)
        for (int k = 0; k < n_; ++k) out(i, j) += (*this)(i, j, k) * v(k);
    return out;
  }

  /// Slice S_ij = T_ijk for fixed k.
  Mat slice(int k) const {
    Mat out(n_, n_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) out(i, j) = (*this)(i, j, k);
    return out;
  }

  /// Change of frame: out_abc = sum Q_ia Q_jb Q_kc T_ijk.
  Tensor3 rotated(const Mat& q) const {
    Tensor3 out(n_);
    for (int a = 0; a < n_; ++a)
      for (int b = 0; b < n_; ++b)
        for (int c = 0; c < n_; ++c) {
          double s = 0.0;
          for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j)
              for (int k = 0; k < n_; ++k) s += q(i, a) * q(j, b) * q(k, c) * (*this)(i, j, k);
          out(a, b, c) = s;
        }
    return out;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

 private:
  static int idx(int i, int j, int k) { return (i * kMaxDim + j) * kMaxDim + k; }

  int n_ = 0;
  std::array<double, kMaxDim * kMaxDim * kMaxDim> data_{};
};

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order; columns of `vectors` are the matching unit eigenvectors.
struct SymEigen {
  Vec values;
  Mat vectors;
};

inline SymEigen sym_eigen(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> solver(a);
  const int n = static_cast<int>(a.rows());
  SymEigen out{Vec(n), Mat(n, n)};
  for (int i = 0; i < n; ++i) {
    out.values(i) = solver.eigenvalues()(n - 1 - i);
    out.vectors.col(i) = solver.eigenvectors().col(n - 1 - i);
  }
  return out;
}

inline double min_eigenvalue(const Mat& a) {
  if (a.rows() == 0) return 0.0;
  return Eigen::SelfAdjointEigenSolver<Mat>(a, Eigen::EigenvaluesOnly).eigenvalues()(0);
}

inline double max_eigenvalue(const Mat& a) {
  if (a.rows() == 0) return 0.0;
  auto ev = Eigen::SelfAdjointEigenSolver<Mat>(a, Eigen::EigenvaluesOnly).eigenvalues();
  return ev(ev.size() - 1);
}

/// Spectral norm of a symmetric matrix.
inline double spectral_norm_sym(const Mat& a) {
  if (a.rows() == 0) return 0.0;
  auto ev = Eigen::SelfAdjointEigenSolver<Mat>(a, Eigen::EigenvaluesOnly).eigenvalues();
  return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
}

/// Operator 2-norm of a general matrix.
inline double operator_norm(const Mat& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(a);
  return svd.singularValues()(0);
}

/// Smallest gap between consecutive descending eigenvalues; +inf for n = 1.
inline double min_eigen_gap(const Vec& descending) {
  double gap = std::numeric_limits<double>::infinity();
  for (int i = 0; i + 1 < descending.size(); ++i) gap = std::min(gap, descending(i) - descending(i + 1));
  return gap;
}

}  // namespace lmcf
