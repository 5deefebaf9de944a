#pragma once

#include <cmath>
#include <optional>

#include <json.hpp>

#include "lmcf/grid.hpp"
#include "lmcf/phase.hpp"
#include "lmcf/types.hpp"

namespace lmcf {

/// Eigenvalue gaps below this make the Hessian eigenframe ambiguous.
inline constexpr double kEigenGapTolerance = 1e-9;

/// Pointwise geometry of the gradient graph (x, Du(x)).
struct PointGeometry {
  Vec x;
  Vec grad;
  Mat hess;
  Vec lambda;      // descending
  Mat frame;       // columns: eigenvectors matching lambda
  Mat metric;      // g = I + (D^2u)^2
  Mat metric_inv;
  double volume = 1.0;      // sqrt(det g)
  double log_volume = 0.0;  // b = log V
  std::optional<Tensor3> third;     // D^3u in coordinates
  std::optional<Tensor3> h_tensor;  // h_ijk in the eigenframe
  double eigen_gap = 0.0;
  bool degenerate_frame = false;

  int dim() const { return static_cast<int>(x.size()); }

  /// g^{ii} = 1/(1 + lambda_i^2) in the eigenframe.
  double g_inv_diag(int i) const { return 1.0 / (1.0 + lambda(i) * lambda(i)); }
};

inline void check_symmetric(const Mat& hess, double tol = 1e-10) {
  const double asym = (hess - hess.transpose()).cwiseAbs().maxCoeff();
  if (asym > tol * (1.0 + hess.cwiseAbs().maxCoeff()))
    throw Error(ErrorKind::NonSymmetric, "Hessian asymmetry exceeds tolerance");
}

/// Lagrangian angle sum_i arctan(lambda_i) of a symmetric matrix.
inline double lagrangian_angle(const Mat& hess) {
  check_symmetric(hess);
  const Vec lambda = sym_eigen(hess).values;
  double angle = 0.0;
  for (int i = 0; i < lambda.size(); ++i) angle += std::atan(lambda(i));
  return angle;
}

/// Geometry from derivative data. h_ijk is u_ijk rotated into the eigenframe
/// and scaled by sqrt(g^ii g^jj g^kk).
inline PointGeometry make_point_geometry(const Vec& x, const Vec& grad, const Mat& hess,
                                         const std::optional<Tensor3>& third = std::nullopt) {
  check_symmetric(hess);
  const int n = static_cast<int>(x.size());
  PointGeometry pg;
  pg.x = x;
  pg.grad = grad;
  pg.hess = 0.5 * (hess + hess.transpose());
  const SymEigen e = sym_eigen(pg.hess);
  pg.lambda = e.values;
  pg.frame = e.vectors;
  pg.metric = Mat::Identity(n, n) + pg.hess * pg.hess;
  pg.metric_inv = pg.metric.inverse();
  double log_v = 0.0;
  for (int i = 0; i < n; ++i) log_v += 0.5 * std::log1p(pg.lambda(i) * pg.lambda(i));
  pg.log_volume = log_v;
  pg.volume = std::exp(log_v);
  pg.eigen_gap = min_eigen_gap(pg.lambda);
  pg.degenerate_frame = pg.eigen_gap < kEigenGapTolerance;
  if (third) {
    pg.third = third;
    Tensor3 h = third->rotated(pg.frame);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c)
          h(a, b, c) *= std::sqrt(pg.g_inv_diag(a) * pg.g_inv_diag(b) * pg.g_inv_diag(c));
    pg.h_tensor = h;
  }
  return pg;
}

inline PointGeometry point_geometry(const PotentialField& field, const Node& node, bool with_third = false) {
  const Vec x = field.spec.position(node);
  const Vec grad = gradient_at(field, node);
  const Mat hess = hessian_at(field, node);
  if (with_third) return make_point_geometry(x, grad, hess, third_at(field, node));
  return make_point_geometry(x, grad, hess);
}

/// Components of a coordinate-frame covector in the Hessian eigenframe.
inline Vec to_eigenframe(const PointGeometry& pg, const Vec& v) { return pg.frame.transpose() * v; }

/// |grad_g v|^2 = g^{ij} v_i v_j.
inline double metric_gradient_sq(const PointGeometry& pg, const Vec& dv) {
  if (dv.size() != pg.dim()) throw Error(ErrorKind::InvalidArgument, "gradient dimension mismatch");
  return dv.dot(pg.metric_inv * dv);
}

/// |H|_g^2 = sum_i g^{ii} (d_i Theta)^2 with d Theta given in the eigenframe.
inline double mean_curvature_norm_sq(const PointGeometry& pg, const Vec& dtheta_eigen) {
  double acc = 0.0;
  for (int i = 0; i < pg.dim(); ++i) acc += pg.g_inv_diag(i) * dtheta_eigen(i) * dtheta_eigen(i);
  return acc;
}

/// Drift form of the Laplace-Beltrami operator:
/// g^{ij} v_ij - g^{jp} u_pq (d_q Theta) v_j.
inline double laplace_beltrami_drift(const PointGeometry& pg, const Vec& dv, const Mat& d2v, const Vec& dtheta) {
  const double second = (pg.metric_inv.cwiseProduct(d2v)).sum();
  const Vec drift = pg.metric_inv * (pg.hess * dtheta);
  return second - drift.dot(dv);
}

/// Both finite-difference routes of Delta_g v at a node.
struct LaplaceBeltramiRoutes {
  double divergence = 0.0;
  double drift = 0.0;
};

/// Delta_g v at `node` by (a) differencing the flux sqrt(g) g^{ij} v_j at the
/// neighbours and (b) the drift form with d Theta from the phase. Needs two
/// nodes of clearance.
inline LaplaceBeltramiRoutes laplace_beltrami(const PotentialField& field, const PotentialField& v, const Node& node,
                                              const PhaseSpec& phase) {
  if (!(field.spec == v.spec)) throw Error(ErrorKind::InvalidArgument, "v must live on the potential's grid");
  detail::require_depth(field.spec, node, 2);
  const int n = field.spec.dim();
  const double h = field.spec.spacing();
  const PointGeometry pg = point_geometry(field, node);

  LaplaceBeltramiRoutes out;
  double div = 0.0;
  for (int i = 0; i < n; ++i) {
    auto flux = [&](int delta) {
      const Node y = detail::shifted(node, i, delta);
      const PointGeometry gy = point_geometry(field, y);
      const Vec dv = gradient_at(v, y);
      return gy.volume * (gy.metric_inv.row(i).dot(dv));
    };
    div += (flux(1) - flux(-1)) / (2.0 * h);
  }
  out.divergence = div / pg.volume;

  const Vec dtheta = total_derivative(phase, pg.x, field.at(node), pg.grad, pg.hess);
  out.drift = laplace_beltrami_drift(pg, gradient_at(v, node), hessian_at(v, node), dtheta);
  return out;
}

/// The field b = log sqrt(det g) on the nodes with one node of clearance;
/// boundary nodes carry 0 and must not be differenced.
inline PotentialField log_volume_field(const PotentialField& field) {
  PotentialField b(field.spec);
  field.spec.for_each_node([&](const Node& node) {
    if (field.spec.depth(node) < 1) return;
    const SymEigen e = sym_eigen(hessian_at(field, node));
    double acc = 0.0;
    for (int i = 0; i < e.values.size(); ++i) acc += 0.5 * std::log1p(e.values(i) * e.values(i));
    b.at(node) = acc;
  });
  b.metadata["quantity"] = "log_volume";
  return b;
}

inline nlohmann::json to_json(const PointGeometry& pg) {
  auto vec = [](const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  auto mat = [&](const Mat& m) {
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < m.rows(); ++i) rows.push_back(vec(m.row(i).transpose()));
    return rows;
  };
  nlohmann::json j;
  j["x"] = vec(pg.x);
  j["grad"] = vec(pg.grad);
  j["hess"] = mat(pg.hess);
  j["lambda"] = vec(pg.lambda);
  j["frame"] = mat(pg.frame);
  j["metric"] = mat(pg.metric);
  j["metric_inv"] = mat(pg.metric_inv);
  j["volume"] = pg.volume;
  j["log_volume"] = pg.log_volume;
  j["degenerate_frame"] = pg.degenerate_frame;
  if (pg.h_tensor) {
    std::vector<double> h;
    const int n = pg.dim();
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c) h.push_back((*pg.h_tensor)(a, b, c));
    j["h_tensor"] = h;
  }
  return j;
}

}  // namespace lmcf
