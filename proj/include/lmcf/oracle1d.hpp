#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/numeric/odeint.hpp>

#include "lmcf/geometry.hpp"
#include "lmcf/grid.hpp"
#include "lmcf/phase.hpp"
#include "lmcf/polynomial.hpp"

namespace lmcf {

enum class OracleKind { GrimReaper, CircleShrinker, Quadratic, RotatorOde };

/// A potential solving one of the soliton equations, with exact (or ODE-exact)
/// derivatives and the phase it solves.
struct OracleSolution {
  OracleKind kind = OracleKind::Quadratic;
  std::string name;
  int n = 1;
  double lo = -std::numeric_limits<double>::infinity();  // per-axis domain
  double hi = std::numeric_limits<double>::infinity();
  PhaseSpec phase;
  AnalyticPotential potential;
  // Independent second derivative used for the self-check; defaults to the
  // potential's Hessian.
  std::function<Mat(const Vec&)> check_hessian;

  bool in_domain(const Vec& x) const {
    for (int a = 0; a < x.size(); ++a)
      if (!(x(a) > lo && x(a) < hi)) return false;
    return true;
  }

  double u(double x) const { return potential.value(scalar(x)); }
  double du(double x) const { return potential.gradient(scalar(x))(0); }
  double d2u(double x) const { return potential.hessian(scalar(x))(0, 0); }
  double d3u(double x) const { return potential.third(scalar(x))(0, 0, 0); }

  /// sum arctan lambda(D^2u) - Theta(x, u, Du).
  double residual(const Vec& x) const {
    const Mat hess = check_hessian ? check_hessian(x) : potential.hessian(x);
    return lagrangian_angle(hess) - phase.eval(x, potential.value(x), potential.gradient(x));
  }

  double residual(double x) const { return residual(scalar(x)); }

  PotentialField sample(const GridSpec& spec) const {
    if (spec.dim() != n) throw Error(ErrorKind::InvalidArgument, name + " oracle lives in dimension " + std::to_string(n));
    if (!(spec.half_width() < hi && -spec.half_width() > lo))
      throw Error(ErrorKind::DomainEdge, name + " is not defined on the whole box");
    PotentialField f = lmcf::sample(spec, potential.value);
    f.metadata["oracle"] = name;
    f.metadata["phase"] = phase.name();
    return f;
  }

 private:
  static Vec scalar(double x) { return Vec::Constant(1, x); }
};

namespace detail {

inline void require_inside(double x, double lo, double hi, const char* what) {
  if (!(x > lo && x < hi)) throw Error(ErrorKind::DomainEdge, std::string(what) + " evaluated outside its domain");
}

inline AnalyticPotential potential_1d(std::function<double(double)> u, std::function<double(double)> u1,
                                      std::function<double(double)> u2, std::function<double(double)> u3) {
  AnalyticPotential p;
  p.n = 1;
  p.value = [u](const Vec& x) { return u(x(0)); };
  p.gradient = [u1](const Vec& x) { return Vec::Constant(1, u1(x(0))); };
  p.hessian = [u2](const Vec& x) { return Mat::Constant(1, 1, u2(x(0))); };
  p.third = [u3](const Vec& x) {
    Tensor3 t(1);
    t(0, 0, 0) = u3(x(0));
    return t;
  };
  return p;
}

}  // namespace detail

/// Translator t2 = 1: u' = -log cos x on (-pi/2, pi/2), u(0) = 0.
inline OracleSolution grim_reaper(double guard = 1e-6) {
  const double edge = kPi / 2.0 - guard;
  auto slope = [edge](double x) {
    detail::require_inside(x, -edge, edge, "grim reaper");
    return -std::log(std::cos(x));
  };
  auto value = [slope](double x) {
    if (x == 0.0) return 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(slope, 0.0, x, 6, 1e-14);
  };
  auto second = [edge](double x) {
    detail::require_inside(x, -edge, edge, "grim reaper");
    return std::tan(x);
  };
  auto third = [edge](double x) {
    detail::require_inside(x, -edge, edge, "grim reaper");
    const double c = std::cos(x);
    return 1.0 / (c * c);
  };
  OracleSolution s;
  s.kind = OracleKind::GrimReaper;
  s.name = "grim-reaper";
  s.lo = -edge;
  s.hi = edge;
  s.phase = PhaseSpec::translator(0.0, Vec::Ones(1), Vec::Zero(1));
  s.potential = detail::potential_1d(value, slope, second, third);
  return s;
}

/// Shrinker s1 = 0, s2 = 1: the circle x^2 + u'^2 = 1.
inline OracleSolution circle_shrinker(double guard = 1e-6) {
  const double edge = 1.0 - guard;
  auto check = [edge](double x) { detail::require_inside(x, -edge, edge, "circle shrinker"); };
  auto value = [check](double x) {
    check(x);
    return 0.5 * (x * std::sqrt(1.0 - x * x) + std::asin(x));
  };
  auto slope = [check](double x) {
    check(x);
    return std::sqrt(1.0 - x * x);
  };
  auto second = [check](double x) {
    check(x);
    return -x / std::sqrt(1.0 - x * x);
  };
  auto third = [check](double x) {
    check(x);
    return -1.0 / std::pow(1.0 - x * x, 1.5);
  };
  OracleSolution s;
  s.kind = OracleKind::CircleShrinker;
  s.name = "circle-shrinker";
  s.lo = -edge;
  s.hi = edge;
  s.phase = PhaseSpec::shrinker(0.0, 1.0);
  s.potential = detail::potential_1d(value, slope, second, third);
  return s;
}

/// u = 1/2 x^T a x with the constant phase sum arctan eig(a).
inline OracleSolution quadratic(const Mat& a) {
  check_symmetric(a, 0.0);
  OracleSolution s;
  s.kind = OracleKind::Quadratic;
  s.name = "quadratic";
  s.n = static_cast<int>(a.rows());
  s.phase = PhaseSpec::constant(lagrangian_angle(a));
  s.potential = AnalyticPotential::from(Polynomial::quadratic(a));
  return s;
}

namespace detail {

/// One branch x >= 0 of u'' = tan(r1 + r2/2 (x^2 + u'^2)) sampled at a fixed
/// step; evaluated by quintic Hermite interpolation.
struct RotatorBranch {
  double r1 = 0.0, r2 = 0.0, step = 1e-3;
  std::vector<double> u, u1;  // at x_k = k * step

  double arg(double x, double p) const { return r1 + 0.5 * r2 * (x * x + p * p); }
  double second(double x, double p) const { return std::tan(arg(x, p)); }
  double third(double x, double p) const {
    const double c = std::cos(arg(x, p));
    return r2 * (x + p * second(x, p)) / (c * c);
  }
  double reach() const { return step * static_cast<double>(u.size() - 1); }

  // Quintic Hermite on [x_k, x_k+1] from f, f', f'' at both ends.
  static double hermite(double t, double dx, double f0, double d0, double s0, double f1, double d1, double s1,
                        double* derivative) {
    const double t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
    const double h00 = 1 - 10 * t3 + 15 * t4 - 6 * t5, h01 = 10 * t3 - 15 * t4 + 6 * t5;
    const double h10 = t - 6 * t3 + 8 * t4 - 3 * t5, h11 = -4 * t3 + 7 * t4 - 3 * t5;
    const double h20 = 0.5 * (t2 - 3 * t3 + 3 * t4 - t5), h21 = 0.5 * (t3 - 2 * t4 + t5);
    if (derivative) {
      const double g00 = -30 * t2 + 60 * t3 - 30 * t4, g10 = 1 - 18 * t2 + 32 * t3 - 15 * t4;
      const double g11 = -12 * t2 + 28 * t3 - 15 * t4, g20 = 0.5 * (2 * t - 9 * t2 + 12 * t3 - 5 * t4);
      const double g21 = 0.5 * (3 * t2 - 8 * t3 + 5 * t4);
      *derivative = (g00 * (f0 - f1)) / dx + g10 * d0 + g11 * d1 + dx * (g20 * s0 + g21 * s1);
    }
    return h00 * f0 + h01 * f1 + dx * (h10 * d0 + h11 * d1) + dx * dx * (h20 * s0 + h21 * s1);
  }

  // Returns (u, u', d/dx of the u' interpolant).
  std::array<double, 3> eval(double x) const {
    if (x < 0.0 || x > reach()) throw Error(ErrorKind::DomainEdge, "rotator ODE evaluated beyond its reach");
    std::size_t k = static_cast<std::size_t>(x / step);
    if (k + 1 >= u.size()) k = u.size() - 2;
    const double x0 = step * static_cast<double>(k), x1 = x0 + step;
    const double t = (x - x0) / step;
    const double p0 = u1[k], p1 = u1[k + 1];
    const double s0 = second(x0, p0), s1 = second(x1, p1);
    const double val = hermite(t, step, u[k], p0, s0, u[k + 1], p1, s1, nullptr);
    double dp = 0.0;
    const double p = hermite(t, step, p0, s0, third(x0, p0), p1, s1, third(x1, p1), &dp);
    return {val, p, dp};
  }
};

inline RotatorBranch integrate_rotator_branch(double r1, double r2, double slope0, double extent, double guard,
                                              double step) {
  using State = std::array<double, 2>;
  namespace ode = boost::numeric::odeint;
  RotatorBranch br{r1, r2, step, {}, {}};
  const double limit = kPi / 2.0 - guard;
  // The slope is clamped at the guard so the stepper never sees the pole;
  // reaching the clamp ends the integration.
  auto rhs = [&](const State& s, State& ds, double x) {
    ds[0] = s[1];
    ds[1] = std::tan(std::clamp(br.arg(x, s[1]), -limit, limit));
  };
  auto stepper = ode::make_dense_output(1e-13, 1e-13, ode::runge_kutta_dopri5<State>());
  stepper.initialize(State{0.0, slope0}, 0.0, 0.1 * step);
  State s{0.0, slope0};
  for (std::size_t k = 0;; ++k) {
    const double xk = step * static_cast<double>(k);
    if (xk > extent + 0.5 * step) break;
    while (stepper.current_time() < xk) {
      const State& cur = stepper.current_state();
      if (std::abs(br.arg(stepper.current_time(), cur[1])) >= limit) {
        throw Error(ErrorKind::BlowUp, "rotator phase argument reaches pi/2 at |x| ~ " +
                                           std::to_string(stepper.current_time()) + " (requested " +
                                           std::to_string(extent) + ")");
      }
      stepper.do_step(rhs);
    }
    if (k > 0) stepper.calc_state(xk, s);
    if (std::abs(br.arg(xk, s[1])) >= limit)
      throw Error(ErrorKind::BlowUp, "rotator phase argument reaches pi/2 at |x| ~ " + std::to_string(xk) +
                                         " (requested " + std::to_string(extent) + ")");
    br.u.push_back(s[0]);
    br.u1.push_back(s[1]);
  }
  return br;
}

}  // namespace detail

/// Rotator u'' = tan(r1 + r2/2 (x^2 + u'^2)), u(0) = 0, u'(0) = slope0, on
/// [-extent, extent]. The branch x < 0 is the forward problem for u(-x).
inline OracleSolution rotator_ode(double r1, double r2, double slope0, double extent = 1.0, double guard = 1e-3,
                                  double step = 1e-3) {
  if (r2 < 0.0) throw Error(ErrorKind::InvalidArgument, "rotator requires r2 >= 0");
  if (std::abs(r1) >= kPi / 2.0 - guard) throw Error(ErrorKind::BlowUp, "rotator phase is critical at the origin");
  auto right = std::make_shared<detail::RotatorBranch>(detail::integrate_rotator_branch(r1, r2, slope0, extent, guard, step));
  auto left = std::make_shared<detail::RotatorBranch>(detail::integrate_rotator_branch(r1, r2, -slope0, extent, guard, step));
  // values for x < 0: u(x) = w(-x), u'(x) = -w'(-x), u'' = w'', u''' = -w'''
  auto eval = [right, left](double x) {
    if (x >= 0.0) return right->eval(x);
    auto w = left->eval(-x);
    return std::array<double, 3>{w[0], -w[1], w[2]};
  };
  auto branch = [right, left](double x) { return x >= 0.0 ? right : left; };
  auto value = [eval](double x) { return eval(x)[0]; };
  auto slope = [eval](double x) { return eval(x)[1]; };
  auto second = [eval, branch](double x) {
    const auto v = eval(x);
    return branch(x)->second(x, v[1]);
  };
  auto third = [eval, branch](double x) {
    const auto v = eval(x);
    return branch(x)->third(x, v[1]);
  };
  OracleSolution s;
  s.kind = OracleKind::RotatorOde;
  s.name = "rotator-ode";
  s.lo = -extent;
  s.hi = extent;
  s.phase = PhaseSpec::rotator(r1, r2);
  s.potential = detail::potential_1d(value, slope, second, third);
  s.check_hessian = [eval](const Vec& x) { return Mat::Constant(1, 1, eval(x(0))[2]); };
  return s;
}

struct OracleCheck {
  std::string name;
  double half_width = 0.0;
  int m_coarse = 0, m_fine = 0;
  double h_coarse = 0.0, h_fine = 0.0;
  double residual_coarse = 0.0;  // max interior |sum arctan lambda(FD Hessian) - Theta|
  double residual_fine = 0.0;
  double ratio = 0.0;
  double self_residual = 0.0;  // with the exact Hessian, at the fine nodes
  bool ok = false;             // ratio in [3.5, 4.5] and fine residual below 1e-3
};

/// Samples the oracle at m and 2m - 1 nodes per axis and compares the
/// finite-difference residuals, which should shrink by four.
inline OracleCheck oracle_check(const OracleSolution& o, double half_width, int m) {
  OracleCheck c;
  c.name = o.name;
  c.half_width = half_width;
  c.m_coarse = m;
  c.m_fine = 2 * m - 1;
  auto worst = [&](int points, double& h) {
    const GridSpec spec(o.n, half_width, points);
    h = spec.spacing();
    const PotentialField u = o.sample(spec);
    double r = 0.0;
    spec.for_each_node([&](const Node& node) {
      if (spec.depth(node) < 1) return;
      const Vec x = spec.position(node);
      r = std::max(r, std::abs(lagrangian_angle(hessian_at(u, node)) - o.phase.eval(x, u.at(node), o.potential.gradient(x))));
      if (points == c.m_fine) c.self_residual = std::max(c.self_residual, std::abs(o.residual(x)));
    });
    return r;
  };
  c.residual_coarse = worst(c.m_coarse, c.h_coarse);
  c.residual_fine = worst(c.m_fine, c.h_fine);
  c.ratio = c.residual_fine > 0.0 ? c.residual_coarse / c.residual_fine : std::numeric_limits<double>::infinity();
  c.ok = c.ratio >= 3.5 && c.ratio <= 4.5 && c.residual_fine < 1e-3;
  return c;
}

inline nlohmann::json to_json(const OracleCheck& c) {
  return {{"name", c.name},
          {"half_width", c.half_width},
          {"m", {c.m_coarse, c.m_fine}},
          {"h", {c.h_coarse, c.h_fine}},
          {"residual", {c.residual_coarse, c.residual_fine}},
          {"ratio", c.ratio},
          {"self_residual", c.self_residual},
          {"ok", c.ok}};
}

/// Lookup by CLI name.
inline OracleSolution oracle_by_name(const std::string& name) {
  if (name == "grim-reaper") return grim_reaper();
  if (name == "circle-shrinker") return circle_shrinker();
  if (name == "rotator-ode") return rotator_ode(0.0, 1.0, 0.0, 1.3);
  throw Error(ErrorKind::InvalidArgument, "unknown oracle '" + name + "'");
}

}  // namespace lmcf
