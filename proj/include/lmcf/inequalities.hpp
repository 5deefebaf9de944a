#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <fmt/core.h>
#include <json.hpp>

#include "lmcf/field_io.hpp"
#include "lmcf/grid.hpp"
#include "lmcf/phase.hpp"
#include "lmcf/rotation.hpp"
#include "lmcf/verify.hpp"

namespace lmcf {

/// lhs <= C(n) rhs_core with C(n) unknown: the measured ratio is reported.
struct ImpliedConstantReport {
  double lhs = 0.0;
  double rhs_core = 0.0;
  double implied_constant = 0.0;
  nlohmann::json context = nlohmann::json::object();
};

namespace detail {

inline double implied_ratio(double lhs, double rhs) {
  if (rhs > 0.0) return lhs / rhs;
  return lhs > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
}

inline double unit_ball_volume(int n) { return std::pow(kPi, 0.5 * n) / std::tgamma(0.5 * n + 1.0); }

// (sum w |v|^p)^(1/p); p = infinity is the max.
inline double weighted_norm(const std::vector<double>& v, const std::vector<double>& w, double p) {
  if (std::isinf(p)) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) acc += w[k] * std::pow(std::abs(v[k]), p);
  return std::pow(acc, 1.0 / p);
}

inline double sobolev_exponent(int n) {
  return n == 1 ? std::numeric_limits<double>::infinity() : static_cast<double>(n) / (n - 1);
}

}  // namespace detail

struct SobolevOptions {
  double convex_tol = 1e-8;
};

/// Graph Sobolev inequality for a positive f on the gradient graph of a convex
/// potential:
///   (int_{B_r} ((f - ft)^+)^{n/(n-1)} dv_g)^{(n-1)/n}
///     <= C(n) (rho^2 / (r eps))^{n-1} int_{B_R} |grad_g (f - ft)^+| dv_g
/// with ft = (2 / |B_r|) int_{B_R} f dx and rho = (R + max_{B_R}|Du|) sqrt2 / 2.
/// For n = 1 the left side is the sup norm.
inline ImpliedConstantReport verify_sobolev(const PotentialField& u, const PotentialField& f, double r, double R,
                                            double eps, const SobolevOptions& opt = {}) {
  if (!(u.spec == f.spec)) throw Error(ErrorKind::InvalidArgument, "f must live on the potential's grid");
  if (!(r > 0.0 && R > r && eps > 0.0)) throw Error(ErrorKind::InvalidArgument, "need 0 < r < R and eps > 0");
  if (R - r <= 2.0 * kSqrt2 * eps)
    throw Error(ErrorKind::PreconditionGap, fmt::format("R - r = {:.6g} must exceed 2 sqrt2 eps = {:.6g}", R - r,
                                                        2.0 * kSqrt2 * eps));
  const GridSpec& spec = u.spec;
  const int n = spec.dim();
  const double cell = std::pow(spec.spacing(), n);
  const auto nodes = nodes_in_ball(spec, BallRegion::origin(n, R), 1);
  if (nodes.empty()) throw Error(ErrorKind::EmptyRegion, "no interior node in B_R");

  double integral_f = 0.0;
  double max_grad = 0.0;
  for (const Node& node : nodes) {
    integral_f += f.at(node) * cell;
    max_grad = std::max(max_grad, gradient_at(u, node).norm());
  }
  const double ball_r = detail::unit_ball_volume(n) * std::pow(r, n);
  const double f_tilde = 2.0 * integral_f / ball_r;
  const double rho = (R + max_grad) * kSqrt2 / 2.0;

  std::vector<double> excess, weights;
  double grad_integral = 0.0;
  for (const Node& node : nodes) {
    const Mat hess = hessian_at(u, node);
    if (min_eigenvalue(hess) < -opt.convex_tol)
      throw Error(ErrorKind::NotConvex, "potential is not convex on B_R");
    const Vec x = spec.position(node);
    const PointGeometry pg = make_point_geometry(x, gradient_at(u, node), hess);
    const double w = f.at(node) - f_tilde;
    if (w > 0.0) grad_integral += std::sqrt(metric_gradient_sq(pg, gradient_at(f, node))) * pg.volume * cell;
    if (x.norm() <= r * (1.0 + 1e-12)) {
      excess.push_back(std::max(w, 0.0));
      weights.push_back(pg.volume * cell);
    }
  }

  ImpliedConstantReport out;
  out.lhs = detail::weighted_norm(excess, weights, detail::sobolev_exponent(n));
  out.rhs_core = std::pow(rho * rho / (r * eps), n - 1) * grad_integral;
  out.implied_constant = detail::implied_ratio(out.lhs, out.rhs_core);
  out.context = {{"inequality", "sobolev"}, {"n", n}, {"r", r}, {"R", R}, {"eps", eps}, {"rho", rho},
                 {"f_tilde", f_tilde}, {"nodes_B_R", nodes.size()}, {"nodes_B_r", excess.size()}};
  return out;
}

inline ImpliedConstantReport verify_sobolev(const PotentialField& u, const std::function<double(const Vec&)>& f,
                                            double r, double R, double eps, const SobolevOptions& opt = {}) {
  return verify_sobolev(u, sample(u.spec, f), r, R, eps, opt);
}

struct LocalMaxOptions {
  double ellipticity_tol = 1e-9;
};

/// Local maximum principle on the rotated graph for a subsolution `values`
/// (L values >= f_values) sampled at rg.samples:
///   sup_{B_R(y)} v <= C(n) ((R C)^{n-1} ||v^+||_{L^{n/(n-1)}(B_{2R})} + R ||f||_{L^n(B_{2R})}),
/// balls and measures taken in the rotated coordinates. The operator is the
/// rotated Laplace-Beltrami operator, so the ellipticity window is read off gbar.
inline ImpliedConstantReport verify_local_max(const RotatedGraph& rg, const std::vector<double>& values,
                                              const std::vector<double>& f_values, double R, const Vec& y,
                                              double c_op, const LocalMaxOptions& opt = {}) {
  if (values.size() != rg.samples.size() || f_values.size() != rg.samples.size())
    throw Error(ErrorKind::InvalidArgument, "one value and one right-hand side per sample expected");
  if (!(R > 0.0)) throw Error(ErrorKind::InvalidArgument, "R must be positive");
  const int n = rg.n;
  std::vector<Vec> rim;
  for (const auto& s : rg.samples)
    if (s.boundary) rim.push_back(s.xbar);
  const double inradius = rim.empty() ? 0.0 : detail::hull_inradius(rim, y);
  if (inradius < 2.0 * R)
    throw Error(ErrorKind::RegionTooSmall,
                fmt::format("B_2R(y) with 2R = {:.6g} does not fit the rotated region (inradius {:.6g})", 2.0 * R, inradius));

  double sup = -std::numeric_limits<double>::infinity();
  double a_min = std::numeric_limits<double>::infinity(), a_max = 0.0;
  std::vector<double> pos, rhs, weights;
  std::size_t inner = 0;
  for (std::size_t k = 0; k < rg.samples.size(); ++k) {
    const auto& s = rg.samples[k];
    const double d = (s.xbar - y).norm();
    if (d > 2.0 * R) continue;
    const Vec a = sym_eigen(Mat::Identity(n, n) + s.hess_bar * s.hess_bar).values.cwiseInverse();
    a_min = std::min(a_min, a.minCoeff());
    a_max = std::max(a_max, a.maxCoeff());
    pos.push_back(std::max(values[k], 0.0));
    rhs.push_back(f_values[k]);
    weights.push_back(s.cell_image_volume);
    if (d <= R) {
      sup = std::max(sup, values[k]);
      ++inner;
    }
  }
  if (inner == 0) throw Error(ErrorKind::EmptyRegion, "no rotated sample inside B_R(y)");
  if (a_min < 0.5 - opt.ellipticity_tol || a_max > 1.0 + opt.ellipticity_tol)
    throw Error(ErrorKind::EllipticityViolated,
                fmt::format("inverse metric eigenvalues [{:.17g}, {:.17g}] leave [1/2, 1]", a_min, a_max));

  ImpliedConstantReport out;
  out.lhs = std::max(sup, 0.0);
  const double u_norm = detail::weighted_norm(pos, weights, detail::sobolev_exponent(n));
  const double f_norm = detail::weighted_norm(rhs, weights, static_cast<double>(n));
  out.rhs_core = std::pow(R * c_op, n - 1) * u_norm + R * f_norm;
  out.implied_constant = detail::implied_ratio(out.lhs, out.rhs_core);
  out.context = {{"inequality", "local_max"}, {"n", n}, {"R", R}, {"y", std::vector<double>(y.data(), y.data() + n)},
                 {"C", c_op}, {"sup", sup}, {"samples_B_R", inner}, {"samples_B_2R", pos.size()},
                 {"inradius", inradius}, {"inverse_metric_eig_range", {a_min, a_max}}};
  return out;
}

/// Local maximum principle applied to b = log V with f = -C_jacobi (so that
/// Delta_g b >= f) and C = 1 + nu1 + nu1 osc. With `normalize` the constant
/// b at the rotated centre is subtracted first.
inline ImpliedConstantReport verify_local_max_jacobi(const RotatedGraph& rg, const PhaseSpec& phase, double R,
                                                     const Vec& y, double nu1, double osc, bool normalize = false,
                                                     const LocalMaxOptions& opt = {}) {
  std::vector<double> b, f;
  for (const auto& s : rg.samples) {
    b.push_back(detail::log_volume_of(s.hess));
    f.push_back(-jacobi_constant(phase, s.x, s.grad, BallContext{osc}));
  }
  if (normalize) {
    const double b0 = b[rg.origin_index];
    for (double& v : b) v -= b0;
  }
  auto out = verify_local_max(rg, b, f, R, y, 1.0 + nu1 + nu1 * osc, opt);
  out.context["nu1"] = nu1;
  out.context["osc"] = osc;
  out.context["phase"] = phase_to_json(phase);
  return out;
}

inline nlohmann::json to_json(const ImpliedConstantReport& r) {
  nlohmann::json j = r.context;
  j["lhs"] = r.lhs;
  j["rhs_core"] = r.rhs_core;
  j["implied_constant"] = std::isfinite(r.implied_constant) ? nlohmann::json(r.implied_constant) : nlohmann::json("inf");
  return j;
}

inline std::string implied_constants_csv(const std::vector<std::pair<std::string, ImpliedConstantReport>>& rows) {
  std::string out = "label,inequality,lhs,rhs_core,implied_constant\n";
  for (const auto& [label, r] : rows)
    out += fmt::format("{},{},{},{},{}\n", label, r.context.value("inequality", ""), fmt17(r.lhs), fmt17(r.rhs_core),
                       fmt17(r.implied_constant));
  return out;
}

}  // namespace lmcf
