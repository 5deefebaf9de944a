#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <fmt/core.h>
#include <json.hpp>

#include "lmcf/field_io.hpp"
#include "lmcf/geometry.hpp"
#include "lmcf/grid.hpp"
#include "lmcf/phase.hpp"
#include "lmcf/polynomial.hpp"

namespace lmcf {

struct RotatedSample {
  Node node{0, 0, 0};
  Vec x;
  double u = 0.0;
  Vec grad;
  Mat hess;
  Vec xbar;
  Vec ybar;
  double ubar = 0.0;
  Mat hess_bar;
  Vec lambda;      // eigenvalues of hess, descending
  Vec lambda_bar;  // matching Cayley images
  Mat frame;       // shared eigenvectors
  double cell_image_volume = 0.0;  // det(dxbar/dx) h^n
  bool boundary = false;
};

/// The graph (x, Du) written as (xbar, Dubar) after rotating C^n by -pi/4.
struct RotatedGraph {
  int n = 1;
  BallRegion region;
  double spacing = 0.0;
  std::vector<RotatedSample> samples;
  std::size_t origin_index = 0;
  Vec xbar0;
  double inradius_estimate = 0.0;
};

namespace detail {

inline RotatedSample rotate_sample(const Vec& x, double u, const Vec& grad, const Mat& hess, double tol) {
  const int n = static_cast<int>(x.size());
  RotatedSample s;
  s.x = x;
  s.u = u;
  s.grad = grad;
  s.hess = 0.5 * (hess + hess.transpose());
  const SymEigen e = sym_eigen(s.hess);
  if (e.values.minCoeff() < -tol)
    throw Error(ErrorKind::NotConvex, fmt::format("potential is not convex: min eigenvalue {:.6g}", e.values.minCoeff()));
  s.lambda = e.values;
  s.frame = e.vectors;
  s.lambda_bar = Vec(n);
  for (int i = 0; i < n; ++i) s.lambda_bar(i) = (s.lambda(i) - 1.0) / (s.lambda(i) + 1.0);
  const Mat id = Mat::Identity(n, n);
  s.xbar = (x + grad) / kSqrt2;
  s.ybar = (grad - x) / kSqrt2;
  // d ubar = ybar . d xbar holds identically for this expression
  s.ubar = u - 0.25 * x.squaredNorm() + 0.25 * grad.squaredNorm() - 0.5 * x.dot(grad);
  s.hess_bar = (s.hess - id) * (s.hess + id).inverse();
  s.hess_bar = 0.5 * (s.hess_bar + s.hess_bar.transpose());
  s.cell_image_volume = ((s.hess + id) / kSqrt2).determinant();
  return s;
}

/// Distance from `c` to the boundary of the convex hull of `points`
/// (negative when c lies outside). Exact for n <= 2; for n = 3 it is the
/// minimum of the support-function gap over a dense set of directions.
inline double hull_inradius(const std::vector<Vec>& points, const Vec& c) {
  if (points.empty()) throw Error(ErrorKind::EmptyRegion, "no boundary samples");
  const int n = static_cast<int>(c.size());
  auto support_gap = [&](const Vec& d) {
    double best = -std::numeric_limits<double>::infinity();
    for (const Vec& p : points) best = std::max(best, d.dot(p));
    return best - d.dot(c);
  };
  if (n == 1) return std::min(support_gap(Vec::Constant(1, 1.0)), support_gap(Vec::Constant(1, -1.0)));
  if (n == 2) {
    std::vector<std::pair<double, double>> pts;
    for (const Vec& p : points) pts.emplace_back(p(0), p(1));
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3) return 0.0;
    auto cross = [](const auto& o, const auto& a, const auto& b) {
      return (a.first - o.first) * (b.second - o.second) - (a.second - o.second) * (b.first - o.first);
    };
    std::vector<std::pair<double, double>> hull(2 * pts.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
      hull[k++] = pts[i];
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
      while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
      hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < hull.size(); ++i) {
      const auto& a = hull[i];
      const auto& b = hull[(i + 1) % hull.size()];
      Vec normal(2);
      normal << b.second - a.second, a.first - b.first;  // outward for counter-clockwise order
      normal.normalize();
      Vec pa(2);
      pa << a.first, a.second;
      best = std::min(best, normal.dot(pa - c));
    }
    return best;
  }
  // Fibonacci directions on the sphere
  const int count = 4096;
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < count; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / count;
    const double rad = std::sqrt(1.0 - z * z);
    Vec d(3);
    d << rad * std::cos(golden * i), rad * std::sin(golden * i), z;
    best = std::min(best, support_gap(d));
  }
  return best;
}

inline void finish_rotation(RotatedGraph& rg) {
  if (rg.samples.empty()) throw Error(ErrorKind::EmptyRegion, "no samples to rotate");
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < rg.samples.size(); ++k) {
    const double d = (rg.samples[k].x - rg.region.center).norm();
    if (d < best) {
      best = d;
      rg.origin_index = k;
    }
  }
  const double shift = rg.samples[rg.origin_index].ubar;
  for (auto& s : rg.samples) s.ubar -= shift;
  rg.xbar0 = rg.samples[rg.origin_index].xbar;
  std::vector<Vec> rim;
  for (const auto& s : rg.samples)
    if (s.boundary) rim.push_back(s.xbar);
  if (!rim.empty()) rg.inradius_estimate = hull_inradius(rim, rg.xbar0);
}

}  // namespace detail

/// Rotates the graph of a sampled convex potential over the nodes of
/// `region` (one node of clearance needed for the Hessian). Nodes with an
/// axis neighbour outside the region are flagged as boundary samples.
inline RotatedGraph rotate(const PotentialField& u, const BallRegion& region, double tol = 1e-8) {
  const GridSpec& spec = u.spec;
  RotatedGraph rg;
  rg.n = spec.dim();
  rg.region = region;
  rg.spacing = spec.spacing();
  const double cell = std::pow(spec.spacing(), rg.n);
  for (const Node& node : nodes_in_ball(spec, region, 1)) {
    RotatedSample s = detail::rotate_sample(spec.position(node), u.at(node), gradient_at(u, node), hessian_at(u, node), tol);
    s.node = node;
    s.cell_image_volume *= cell;
    for (int a = 0; a < rg.n && !s.boundary; ++a)
      for (int d : {-1, 1}) {
        const Node y = detail::shifted(node, a, d);
        if (!spec.contains(y) || spec.depth(y) < 1 || !region.contains(spec.position(y))) s.boundary = true;
      }
    rg.samples.push_back(std::move(s));
  }
  detail::finish_rotation(rg);
  return rg;
}

/// Rotation of an analytic potential at scattered points; `boundary` marks
/// the points whose images bound the rotated domain.
inline RotatedGraph rotate(const AnalyticPotential& u, const std::vector<Vec>& points, const std::vector<bool>& boundary,
                           const BallRegion& region, double tol = 1e-8) {
  RotatedGraph rg;
  rg.n = u.n;
  rg.region = region;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const Vec& x = points[k];
    RotatedSample s = detail::rotate_sample(x, u.value(x), u.gradient(x), u.hessian(x), tol);
    s.boundary = k < boundary.size() && boundary[k];
    rg.samples.push_back(std::move(s));
  }
  detail::finish_rotation(rg);
  return rg;
}

struct RotationBoundsReport {
  double hess_bar_min_eig = std::numeric_limits<double>::infinity();
  double hess_bar_max_eig = -std::numeric_limits<double>::infinity();
  double gbar_min_eig = std::numeric_limits<double>::infinity();
  double gbar_max_eig = -std::numeric_limits<double>::infinity();
  double max_cayley_error = 0.0;  // |arctan lambda_bar - (arctan lambda - pi/4)|
  double rho = 0.0;
  double max_xbar_norm = 0.0;
  double inradius = 0.0;
  double inradius_bound = 0.0;
  bool hess_ok = true;
  bool metric_ok = true;
  bool rho_ok = true;
  bool inradius_ok = true;
  std::vector<std::string> failures;
  bool ok() const { return failures.empty(); }
};

struct RotationBoundsOptions {
  double tol = 1e-9;
  std::optional<double> inradius_tol;  // default: two grid spacings
};

/// Checks -I <= D^2 ubar <= I, I <= gbar <= 2I, |xbar| <= rho(R) and the
/// inradius of the image. `radius` is the radius R of the source ball around
/// the origin and `max_grad` bounds |Du| on it.
inline RotationBoundsReport verify_rotation_bounds(const RotatedGraph& rg, double radius, double max_grad,
                                                   const RotationBoundsOptions& opt = {}) {
  RotationBoundsReport out;
  const int n = rg.n;
  for (const auto& s : rg.samples) {
    const SymEigen e = sym_eigen(s.hess_bar);
    out.hess_bar_min_eig = std::min(out.hess_bar_min_eig, e.values.minCoeff());
    out.hess_bar_max_eig = std::max(out.hess_bar_max_eig, e.values.maxCoeff());
    const Vec gbar = sym_eigen(Mat::Identity(n, n) + s.hess_bar * s.hess_bar).values;
    out.gbar_min_eig = std::min(out.gbar_min_eig, gbar.minCoeff());
    out.gbar_max_eig = std::max(out.gbar_max_eig, gbar.maxCoeff());
    for (int i = 0; i < n; ++i)
      out.max_cayley_error =
          std::max(out.max_cayley_error, std::abs(std::atan(s.lambda_bar(i)) - (std::atan(s.lambda(i)) - kPi / 4.0)));
    out.max_xbar_norm = std::max(out.max_xbar_norm, s.xbar.norm());
  }
  out.rho = (radius + max_grad) * kSqrt2 / 2.0;
  out.inradius = rg.inradius_estimate;
  out.inradius_bound = kSqrt2 / 2.0 * radius;
  const double inradius_tol = opt.inradius_tol.value_or(2.0 * rg.spacing);

  out.hess_ok = out.hess_bar_min_eig >= -1.0 - opt.tol && out.hess_bar_max_eig <= 1.0 + opt.tol;
  out.metric_ok = out.gbar_min_eig >= 1.0 - opt.tol && out.gbar_max_eig <= 2.0 + opt.tol;
  out.rho_ok = out.max_xbar_norm <= out.rho + opt.tol;
  out.inradius_ok = out.inradius >= out.inradius_bound - inradius_tol;
  if (!out.hess_ok)
    out.failures.push_back(fmt::format("rotated Hessian eigenvalues [{:.17g}, {:.17g}] leave [-1, 1]", out.hess_bar_min_eig,
                                       out.hess_bar_max_eig));
  if (!out.metric_ok)
    out.failures.push_back(
        fmt::format("rotated metric eigenvalues [{:.17g}, {:.17g}] leave [1, 2]", out.gbar_min_eig, out.gbar_max_eig));
  if (!out.rho_ok)
    out.failures.push_back(fmt::format("max |xbar| = {:.17g} exceeds rho = {:.17g}", out.max_xbar_norm, out.rho));
  if (!out.inradius_ok)
    out.failures.push_back(
        fmt::format("image inradius {:.17g} below {:.17g} - {:.3g}", out.inradius, out.inradius_bound, inradius_tol));
  return out;
}

inline nlohmann::json to_json(const RotationBoundsReport& r) {
  nlohmann::json j;
  j["hess_bar_eig_range"] = {r.hess_bar_min_eig, r.hess_bar_max_eig};
  j["gbar_eig_range"] = {r.gbar_min_eig, r.gbar_max_eig};
  j["max_cayley_error"] = r.max_cayley_error;
  j["rho"] = r.rho;
  j["max_xbar_norm"] = r.max_xbar_norm;
  j["inradius"] = r.inradius;
  j["inradius_bound"] = r.inradius_bound;
  j["failures"] = r.failures;
  j["ok"] = r.ok();
  return j;
}

struct PushedScalar {
  double value = 0.0;
  Vec grad_bar;
};

/// v carried to the rotated coordinates; d/dxbar = sqrt(2) (I + D^2u)^{-1} d/dx.
inline std::vector<PushedScalar> pushforward_scalar(const RotatedGraph& rg, const std::vector<double>& values,
                                                    const std::vector<Vec>& grads) {
  if (values.size() != rg.samples.size() || grads.size() != rg.samples.size())
    throw Error(ErrorKind::InvalidArgument, "one value and gradient per sample expected");
  std::vector<PushedScalar> out(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) {
    const auto& s = rg.samples[k];
    const Mat jac = s.hess + Mat::Identity(rg.n, rg.n);
    if (s.lambda.minCoeff() <= -1.0) throw Error(ErrorKind::NotConvex, "chain-rule matrix I + D^2u is singular");
    out[k].value = values[k];
    out[k].grad_bar = kSqrt2 * jac.ldlt().solve(grads[k]);
  }
  return out;
}

inline std::vector<PushedScalar> pushforward_scalar(const RotatedGraph& rg, const PotentialField& v) {
  std::vector<double> values;
  std::vector<Vec> grads;
  for (const auto& s : rg.samples) {
    values.push_back(v.at(s.node));
    grads.push_back(gradient_at(v, s.node));
  }
  return pushforward_scalar(rg, values, grads);
}

struct DriftReport {
  double max_coefficient = 0.0;
  double bound = 0.0;             // sqrt(2) nu1 (1 + osc)
  double max_pointwise_ratio = 0.0;  // coefficient / (sqrt(2) nu1 (1 + |Du|)) at the sample
  std::size_t worst_index = 0;
  bool ok = true;
};

/// Per-axis coefficients of d Theta / d xbar in the common eigenframe,
///   (sqrt2/2)(Theta_x + Theta_z Du)_q (1 - lambda_bar_q) + (sqrt2/2)(Theta_p)_q (1 + lambda_bar_q),
/// compared against sqrt(2) nu1 (1 + osc).
inline DriftReport rotated_drift_bound(const RotatedGraph& rg, const PhaseSpec& phase, double osc, double nu1,
                                       double tol = 1e-9) {
  DriftReport out;
  out.bound = kSqrt2 * nu1 * (1.0 + osc);
  for (std::size_t k = 0; k < rg.samples.size(); ++k) {
    const auto& s = rg.samples[k];
    const PhasePartials d = phase.partials(s.x, s.u, s.grad);
    const Vec a = s.frame.transpose() * (d.x + d.z * s.grad);
    const Vec c = s.frame.transpose() * d.p;
    for (int q = 0; q < rg.n; ++q) {
      const double coef =
          std::abs(kSqrt2 / 2.0 * a(q) * (1.0 - s.lambda_bar(q)) + kSqrt2 / 2.0 * c(q) * (1.0 + s.lambda_bar(q)));
      if (coef > out.max_coefficient) {
        out.max_coefficient = coef;
        out.worst_index = k;
      }
      const double local = kSqrt2 * nu1 * (1.0 + s.grad.norm());
      if (local > 0.0) out.max_pointwise_ratio = std::max(out.max_pointwise_ratio, coef / local);
      else if (coef > tol) out.max_pointwise_ratio = std::numeric_limits<double>::infinity();
    }
  }
  out.ok = out.max_coefficient <= out.bound + tol;
  return out;
}

/// d Theta / d xbar in the source coordinate frame (not the eigenframe); the
/// drift coefficients above are its eigenframe components.
inline Vec rotated_phase_gradient(const RotatedSample& s, const PhaseSpec& phase) {
  const int n = static_cast<int>(s.x.size());
  const Vec total = total_derivative(phase, s.x, s.u, s.grad, s.hess);
  return kSqrt2 * (s.hess + Mat::Identity(n, n)).ldlt().solve(total);
}

inline nlohmann::json to_json(const DriftReport& r) {
  return {{"max_coefficient", r.max_coefficient}, {"bound", r.bound}, {"max_pointwise_ratio", r.max_pointwise_ratio},
          {"ok", r.ok}};
}

inline std::string rotation_csv(const RotatedGraph& rg) {
  std::string out;
  auto cols = [&](const char* name) {
    std::string c;
    for (int i = 0; i < rg.n; ++i) c += fmt::format(",{}{}", name, i);
    return c;
  };
  out += "sample" + cols("x") + cols("xbar") + cols("ybar") + ",ubar" + cols("lambda_bar") + ",boundary\n";
  for (std::size_t k = 0; k < rg.samples.size(); ++k) {
    const auto& s = rg.samples[k];
    std::string row = std::to_string(k);
    for (const Vec* v : {&s.x, &s.xbar, &s.ybar})
      for (int i = 0; i < rg.n; ++i) row += "," + fmt17((*v)(i));
    row += "," + fmt17(s.ubar);
    for (int i = 0; i < rg.n; ++i) row += "," + fmt17(s.lambda_bar(i));
    row += s.boundary ? ",1\n" : ",0\n";
    out += row;
  }
  return out;
}

}  // namespace lmcf
