#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <variant>

#include <json.hpp>

#include "lmcf/grid.hpp"
#include "lmcf/polynomial.hpp"
#include "lmcf/types.hpp"

namespace lmcf {

/// Value and all first/second partials of Theta(x, z, p), with x, z, p
/// treated as independent variables. `xp(i, j)` is d^2 Theta / dx_i dp_j.
struct PhasePartials {
  double value = 0.0;
  Vec x, p;
  double z = 0.0;
  Mat xx, xp, pp;
  Vec xz, zp;
  double zz = 0.0;

  static PhasePartials zero(int n) {
    PhasePartials d;
    d.x = Vec::Zero(n);
    d.p = Vec::Zero(n);
    d.xx = Mat::Zero(n, n);
    d.xp = Mat::Zero(n, n);
    d.pp = Mat::Zero(n, n);
    d.xz = Vec::Zero(n);
    d.zp = Vec::Zero(n);
    return d;
  }
};

namespace phases {

struct Constant {
  double c = 0.0;
};

/// Theta = s1 + s2 (x.p - 2z); s2 > 0 shrinker, s2 < 0 expander.
struct Shrinker {
  double s1 = 0.0;
  double s2 = 1.0;
};

/// Theta = t1 + t2.x + t3.p.
struct Translator {
  double t1 = 0.0;
  Vec t2;
  Vec t3;
};

/// Theta = r1 + (r2/2)(|x|^2 + |p|^2), r2 >= 0.
struct Rotator {
  double r1 = 0.0;
  double r2 = 0.0;
};

/// User-supplied phase; must declare its structure constants.
struct Custom {
  std::string name = "custom";
  std::function<PhasePartials(const Vec& x, double z, const Vec& p)> evaluate;
  double nu1 = 0.0;
  double nu2 = 0.0;
};

}  // namespace phases

using PhaseVariant =
    std::variant<phases::Constant, phases::Shrinker, phases::Translator, phases::Rotator, phases::Custom>;

class PhaseSpec {
 public:
  PhaseSpec() : v_(phases::Constant{}) {}
  PhaseSpec(PhaseVariant v) : v_(std::move(v)) { validate(); }

  static PhaseSpec constant(double c) { return PhaseSpec(phases::Constant{c}); }
  static PhaseSpec shrinker(double s1, double s2) { return PhaseSpec(phases::Shrinker{s1, s2}); }
  static PhaseSpec translator(double t1, Vec t2, Vec t3) {
    return PhaseSpec(phases::Translator{t1, std::move(t2), std::move(t3)});
  }
  static PhaseSpec rotator(double r1, double r2) { return PhaseSpec(phases::Rotator{r1, r2}); }

  const PhaseVariant& variant() const { return v_; }
  bool is_custom() const { return std::holds_alternative<phases::Custom>(v_); }

  std::string name() const {
    return std::visit(
        [](const auto& p) -> std::string {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, phases::Constant>) return "constant";
          if constexpr (std::is_same_v<T, phases::Shrinker>) return p.s2 >= 0 ? "shrinker" : "expander";
          if constexpr (std::is_same_v<T, phases::Translator>) return "translator";
          if constexpr (std::is_same_v<T, phases::Rotator>) return "rotator";
          if constexpr (std::is_same_v<T, phases::Custom>) return p.name;
        },
        v_);
  }

  PhasePartials partials(const Vec& x, double z, const Vec& p) const {
    const int n = static_cast<int>(x.size());
    return std::visit(
        [&](const auto& ph) -> PhasePartials {
          using T = std::decay_t<decltype(ph)>;
          PhasePartials d = PhasePartials::zero(n);
          if constexpr (std::is_same_v<T, phases::Constant>) {
            d.value = ph.c;
          } else if constexpr (std::is_same_v<T, phases::Shrinker>) {
            d.value = ph.s1 + ph.s2 * (x.dot(p) - 2.0 * z);
            d.x = ph.s2 * p;
            d.z = -2.0 * ph.s2;
            d.p = ph.s2 * x;
            d.xp = ph.s2 * Mat::Identity(n, n);
          } else if constexpr (std::is_same_v<T, phases::Translator>) {
            check_size(ph.t2, n);
            check_size(ph.t3, n);
            d.value = ph.t1 + ph.t2.dot(x) + ph.t3.dot(p);
            d.x = ph.t2;
            d.p = ph.t3;
          } else if constexpr (std::is_same_v<T, phases::Rotator>) {
            d.value = ph.r1 + 0.5 * ph.r2 * (x.squaredNorm() + p.squaredNorm());
            d.x = ph.r2 * x;
            d.p = ph.r2 * p;
            d.xx = ph.r2 * Mat::Identity(n, n);
            d.pp = ph.r2 * Mat::Identity(n, n);
          } else {
            d = ph.evaluate(x, z, p);
          }
          return d;
        },
        v_);
  }

  double eval(const Vec& x, double z, const Vec& p) const { return partials(x, z, p).value; }

  /// Declared (Custom) structure constants; nullopt for named variants.
  std::optional<std::pair<double, double>> declared_nu() const {
    if (const auto* c = std::get_if<phases::Custom>(&v_)) return std::make_pair(c->nu1, c->nu2);
    return std::nullopt;
  }

 private:
  static void check_size(const Vec& v, int n) {
    if (v.size() != n) throw Error(ErrorKind::InvalidArgument, "translator vectors must match the dimension");
  }

  void validate() const {
    if (const auto* r = std::get_if<phases::Rotator>(&v_); r && r->r2 < 0.0)
      throw Error(ErrorKind::InvalidArgument, "rotator requires r2 >= 0");
    if (const auto* s = std::get_if<phases::Shrinker>(&v_); s && s->s2 == 0.0)
      throw Error(ErrorKind::InvalidArgument, "shrinker/expander requires s2 != 0");
    if (const auto* t = std::get_if<phases::Translator>(&v_); t && t->t2.size() != t->t3.size())
      throw Error(ErrorKind::InvalidArgument, "translator t2 and t3 must have equal length");
    if (const auto* c = std::get_if<phases::Custom>(&v_); c && !c->evaluate)
      throw Error(ErrorKind::InvalidArgument, "custom phase needs an evaluator");
  }

  PhaseVariant v_;
};

/// First derivative of x -> Theta(x, u(x), Du(x)) in the coordinate frame:
/// Theta_x + Theta_z Du + D^2u Theta_p.
inline Vec total_derivative(const PhasePartials& d, const Vec& grad, const Mat& hess) {
  return d.x + d.z * grad + hess * d.p;
}

inline Vec total_derivative(const PhaseSpec& phase, const Vec& x, double z, const Vec& p, const Mat& hess) {
  return total_derivative(phase.partials(x, z, p), p, hess);
}

/// Second derivative of x -> Theta(x, u(x), Du(x)) by the full chain rule,
/// including the Theta_p . D^3u term.
inline Mat total_second_derivative(const PhasePartials& d, const Vec& grad, const Mat& hess,
                                   const std::optional<Tensor3>& third) {
  const Vec hzp = hess * d.zp;
  Mat out = d.xx + d.xz * grad.transpose() + grad * d.xz.transpose() + d.xp * hess + hess * d.xp.transpose() +
            d.zz * grad * grad.transpose() + grad * hzp.transpose() + hzp * grad.transpose() + d.z * hess +
            hess * d.pp * hess;
  if (d.p.cwiseAbs().maxCoeff() > 0.0) {
    if (!third) throw Error(ErrorKind::MissingThirdDerivative, "Theta_p != 0 needs D^3u");
    out += third->contract(d.p);
  }
  return out;
}

inline Mat total_second_derivative(const PhaseSpec& phase, const Vec& x, double z, const Vec& p, const Mat& hess,
                                   const std::optional<Tensor3>& third) {
  return total_second_derivative(phase.partials(x, z, p), p, hess, third);
}

/// Scaling v(x) = u(kx)/k^2 maps a solution for `phase` to a solution for
/// the returned phase.
inline PhaseSpec rescale_phase(const PhaseSpec& phase, double k) {
  return std::visit(
      [&](const auto& ph) -> PhaseSpec {
        using T = std::decay_t<decltype(ph)>;
        if constexpr (std::is_same_v<T, phases::Constant>) return PhaseSpec(ph);
        if constexpr (std::is_same_v<T, phases::Shrinker>) return PhaseSpec::shrinker(ph.s1, ph.s2 * k * k);
        if constexpr (std::is_same_v<T, phases::Translator>) return PhaseSpec::translator(ph.t1, k * ph.t2, k * ph.t3);
        if constexpr (std::is_same_v<T, phases::Rotator>) return PhaseSpec::rotator(ph.r1, ph.r2 * k * k);
        if constexpr (std::is_same_v<T, phases::Custom>) {
          phases::Custom c = ph;
          auto inner = ph.evaluate;
          c.name = ph.name + "(scaled)";
          c.evaluate = [inner, k](const Vec& x, double z, const Vec& p) {
            PhasePartials d = inner(k * x, k * k * z, k * p);
            d.x *= k;
            d.z *= k * k;
            d.p *= k;
            d.xx *= k * k;
            d.xp *= k * k;
            d.pp *= k * k;
            d.xz *= k * k * k;
            d.zp *= k * k * k;
            d.zz *= k * k * k * k;
            return d;
          };
          return PhaseSpec(c);
        }
      },
      phase.variant());
}

/// For named variants and a polynomial potential, x -> Theta(x, u(x), Du(x)) is
/// itself a polynomial. Returns nullopt for Custom phases.
inline std::optional<Polynomial> compose(const PhaseSpec& phase, const Polynomial& u) {
  const int n = u.dim();
  auto du = [&](int i) {
    Polynomial::Exponent e{0, 0, 0};
    e[i] = 1;
    return u.derivative(e);
  };
  return std::visit(
      [&](const auto& ph) -> std::optional<Polynomial> {
        using T = std::decay_t<decltype(ph)>;
        if constexpr (std::is_same_v<T, phases::Constant>) {
          return Polynomial::constant(n, ph.c);
        } else if constexpr (std::is_same_v<T, phases::Shrinker>) {
          Polynomial acc = Polynomial::constant(n, ph.s1) - (2.0 * ph.s2) * u;
          for (int i = 0; i < n; ++i) acc = acc + ph.s2 * (Polynomial::variable(n, i) * du(i));
          return acc;
        } else if constexpr (std::is_same_v<T, phases::Translator>) {
          Polynomial acc = Polynomial::constant(n, ph.t1);
          for (int i = 0; i < n; ++i) acc = acc + ph.t2(i) * Polynomial::variable(n, i) + ph.t3(i) * du(i);
          return acc;
        } else if constexpr (std::is_same_v<T, phases::Rotator>) {
          Polynomial acc = Polynomial::constant(n, ph.r1);
          for (int i = 0; i < n; ++i) {
            const Polynomial xi = Polynomial::variable(n, i);
            const Polynomial pi = du(i);
            acc = acc + (0.5 * ph.r2) * (xi * xi + pi * pi);
          }
          return acc;
        } else {
          return std::nullopt;
        }
      },
      phase.variant());
}

// ---------------------------------------------------------------------------
// Structural audit

/// Concrete box containing B_R x u(B_R) x Du(B_R).
struct GraphBox {
  Vec x_lo, x_hi;
  double z_lo = 0.0, z_hi = 0.0;
  Vec p_lo, p_hi;

  static GraphBox symmetric(int n, double x_half, double z_half, double p_half) {
    return GraphBox{Vec::Constant(n, -x_half), Vec::Constant(n, x_half), -z_half, z_half, Vec::Constant(n, -p_half),
                    Vec::Constant(n, p_half)};
  }

  int dim() const { return static_cast<int>(x_lo.size()); }
};

/// Smallest GraphBox covering the x, u and Du ranges of the interior nodes of
/// `field` inside `ball`.
inline GraphBox graph_box_of(const PotentialField& field, const BallRegion& ball) {
  const int n = field.spec.dim();
  GraphBox box{Vec::Constant(n, 1e300), Vec::Constant(n, -1e300), 1e300, -1e300, Vec::Constant(n, 1e300),
               Vec::Constant(n, -1e300)};
  for (const Node& node : nodes_in_ball(field.spec, ball, 1)) {
    const Vec x = field.spec.position(node);
    const Vec p = gradient_at(field, node);
    const double z = field.at(node);
    box.x_lo = box.x_lo.cwiseMin(x);
    box.x_hi = box.x_hi.cwiseMax(x);
    box.p_lo = box.p_lo.cwiseMin(p);
    box.p_hi = box.p_hi.cwiseMax(p);
    box.z_lo = std::min(box.z_lo, z);
    box.z_hi = std::max(box.z_hi, z);
  }
  if (box.z_lo > box.z_hi) throw Error(ErrorKind::EmptyRegion, "no interior node inside the ball");
  return box;
}

struct CustomConsistency {
  bool checked = false;
  double max_first_error = 0.0;
  double max_second_error = 0.0;
  bool nu_declarations_hold = true;
  bool ok = true;
};

struct PhaseAudit {
  double nu1 = 0.0;
  double nu2 = 0.0;
  double max_pp_norm = 0.0;  // reported only; not part of nu2
  double min_pp_eigenvalue = 0.0;
  bool partial_convexity_p = true;
  Vec worst_x;
  double worst_z = 0.0;
  Vec worst_p;
  CustomConsistency custom;
};

namespace detail {

inline double first_norm(const PhasePartials& d) {
  return std::max({d.x.norm(), std::abs(d.z), d.p.norm()});
}

inline double second_norm(const PhasePartials& d) {
  return std::max({spectral_norm_sym(d.xx), d.xz.norm(), operator_norm(d.xp), std::abs(d.zz), d.zp.norm()});
}

/// Central-difference partials of the value only, used to audit custom phases.
inline PhasePartials fd_partials(const PhaseSpec& phase, const Vec& x, double z, const Vec& p, double step) {
  const int n = static_cast<int>(x.size());
  const int dim = 2 * n + 1;
  auto pack = [&](const Vec& w) {
    return phase.partials(w.head(n), w(n), w.tail(n));
  };
  Vec w(dim);
  w << x, z, p;
  PhasePartials out = PhasePartials::zero(n);
  out.value = pack(w).value;
  Vec first(dim);
  Mat second(dim, dim);
  for (int a = 0; a < dim; ++a) {
    Vec wp = w, wm = w;
    wp(a) += step;
    wm(a) -= step;
    const PhasePartials dp = pack(wp), dm = pack(wm);
    first(a) = (dp.value - dm.value) / (2.0 * step);
    // second partials from differences of the declared first partials
    Vec gp(dim), gm(dim);
    gp << dp.x, dp.z, dp.p;
    gm << dm.x, dm.z, dm.p;
    second.col(a) = (gp - gm) / (2.0 * step);
  }
  out.x = first.head(n);
  out.z = first(n);
  out.p = first.tail(n);
  out.xx = second.topLeftCorner(n, n);
  out.xz = second.block(0, n, n, 1);
  out.xp = second.topRightCorner(n, n);
  out.zz = second(n, n);
  out.zp = second.block(n + 1, n, n, 1);
  out.pp = second.bottomRightCorner(n, n);
  return out;
}

}  // namespace detail

/// Samples the box (all corners plus `samples` seeded uniform points) and
/// measures the structure constants and partial convexity in p.
inline PhaseAudit audit(const PhaseSpec& phase, const GraphBox& box, int samples, std::uint64_t seed = 0x5eed,
                        double tol = 1e-12) {
  if (samples < 1) throw Error(ErrorKind::InvalidArgument, "audit needs at least one sample");
  const int n = box.dim();
  const int dim = 2 * n + 1;
  std::vector<Vec> points;
  for (int corner = 0; corner < (1 << dim); ++corner) {
    Vec w(dim);
    for (int a = 0; a < dim; ++a) {
      const bool hi = (corner >> a) & 1;
      if (a < n) w(a) = hi ? box.x_hi(a) : box.x_lo(a);
      else if (a == n) w(a) = hi ? box.z_hi : box.z_lo;
      else w(a) = hi ? box.p_hi(a - n - 1) : box.p_lo(a - n - 1);
    }
    points.push_back(w);
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int s = 0; s < samples; ++s) {
    Vec w(dim);
    for (int a = 0; a < n; ++a) w(a) = box.x_lo(a) + unit(rng) * (box.x_hi(a) - box.x_lo(a));
    w(n) = box.z_lo + unit(rng) * (box.z_hi - box.z_lo);
    for (int a = 0; a < n; ++a) w(n + 1 + a) = box.p_lo(a) + unit(rng) * (box.p_hi(a) - box.p_lo(a));
    points.push_back(w);
  }

  PhaseAudit report;
  report.min_pp_eigenvalue = std::numeric_limits<double>::infinity();
  double worst = -1.0;
  const bool custom = phase.is_custom();
  report.custom.checked = custom;
  for (const Vec& w : points) {
    const Vec x = w.head(n), p = w.tail(n);
    const double z = w(n);
    const PhasePartials d = phase.partials(x, z, p);
    const double f1 = detail::first_norm(d), f2 = detail::second_norm(d);
    report.nu1 = std::max(report.nu1, f1);
    report.nu2 = std::max(report.nu2, f2);
    report.max_pp_norm = std::max(report.max_pp_norm, spectral_norm_sym(d.pp));
    report.min_pp_eigenvalue = std::min(report.min_pp_eigenvalue, min_eigenvalue(d.pp));
    if (f1 + f2 > worst) {
      worst = f1 + f2;
      report.worst_x = x;
      report.worst_z = z;
      report.worst_p = p;
    }
    if (custom) {
      const PhasePartials fd = detail::fd_partials(phase, x, z, p, 1e-5);
      const double scale1 = 1.0 + f1, scale2 = 1.0 + f2;
      const double e1 = std::max({(fd.x - d.x).norm(), std::abs(fd.z - d.z), (fd.p - d.p).norm()}) / scale1;
      const double e2 = std::max({(fd.xx - d.xx).norm(), (fd.xz - d.xz).norm(), (fd.xp - d.xp).norm(),
                                  std::abs(fd.zz - d.zz), (fd.zp - d.zp).norm(), (fd.pp - d.pp).norm()}) /
                        scale2;
      report.custom.max_first_error = std::max(report.custom.max_first_error, e1);
      report.custom.max_second_error = std::max(report.custom.max_second_error, e2);
    }
  }
  report.partial_convexity_p = report.min_pp_eigenvalue >= -tol;
  if (custom) {
    const auto [nu1, nu2] = *phase.declared_nu();
    report.custom.nu_declarations_hold = report.nu1 <= nu1 * (1.0 + 1e-12) + tol && report.nu2 <= nu2 * (1.0 + 1e-12) + tol;
    report.custom.ok =
        report.custom.nu_declarations_hold && report.custom.max_first_error < 1e-6 && report.custom.max_second_error < 1e-6;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Hypercriticality

struct HypercriticalReport {
  double min_abs_theta = 0.0;        // min |Theta(x, u, Du)| over nodes
  double min_abs_angle = 0.0;        // min |sum arctan lambda_i(D^2u)| over nodes
  double min_hessian_eigenvalue = 0.0;
  double threshold = 0.0;            // (n-1) pi / 2
  bool ok = false;
};

inline double hypercritical_threshold(int n) { return (n - 1) * kPi / 2.0; }

/// Checks |Theta| >= (n-1) pi/2 at the interior nodes of `ball`, with Theta the
/// phase evaluated along the graph.
inline HypercriticalReport hypercritical_check(const PotentialField& field, const PhaseSpec& phase,
                                               const BallRegion& ball, double tol = 1e-10) {
  const int n = field.spec.dim();
  HypercriticalReport r;
  r.threshold = hypercritical_threshold(n);
  r.min_abs_theta = std::numeric_limits<double>::infinity();
  r.min_abs_angle = std::numeric_limits<double>::infinity();
  r.min_hessian_eigenvalue = std::numeric_limits<double>::infinity();
  const auto nodes = nodes_in_ball(field.spec, ball, 1);
  if (nodes.empty()) throw Error(ErrorKind::EmptyRegion, "no interior node inside the ball");
  for (const Node& node : nodes) {
    const Vec x = field.spec.position(node);
    const Vec p = gradient_at(field, node);
    const Mat hess = hessian_at(field, node);
    const SymEigen e = sym_eigen(hess);
    double angle = 0.0;
    for (int i = 0; i < n; ++i) angle += std::atan(e.values(i));
    r.min_abs_theta = std::min(r.min_abs_theta, std::abs(phase.eval(x, field.at(node), p)));
    r.min_abs_angle = std::min(r.min_abs_angle, std::abs(angle));
    r.min_hessian_eigenvalue = std::min(r.min_hessian_eigenvalue, e.values(n - 1));
  }
  r.ok = r.min_abs_theta >= r.threshold - tol;
  return r;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json phase_to_json(const PhaseSpec& phase) {
  nlohmann::json j;
  std::visit(
      [&](const auto& ph) {
        using T = std::decay_t<decltype(ph)>;
        if constexpr (std::is_same_v<T, phases::Constant>) {
          j["variant"] = "constant";
          j["c"] = ph.c;
        } else if constexpr (std::is_same_v<T, phases::Shrinker>) {
          j["variant"] = "shrinker";
          j["s1"] = ph.s1;
          j["s2"] = ph.s2;
        } else if constexpr (std::is_same_v<T, phases::Translator>) {
          j["variant"] = "translator";
          j["t1"] = ph.t1;
          j["t2"] = std::vector<double>(ph.t2.data(), ph.t2.data() + ph.t2.size());
          j["t3"] = std::vector<double>(ph.t3.data(), ph.t3.data() + ph.t3.size());
        } else if constexpr (std::is_same_v<T, phases::Rotator>) {
          j["variant"] = "rotator";
          j["r1"] = ph.r1;
          j["r2"] = ph.r2;
        } else {
          throw Error(ErrorKind::InvalidArgument, "custom phases are not serializable");
        }
      },
      phase.variant());
  return j;
}

inline PhaseSpec phase_from_json(const nlohmann::json& j) {
  const std::string variant = j.at("variant").get<std::string>();
  auto vec = [&](const char* key) {
    const auto v = j.at(key).get<std::vector<double>>();
    return Vec(Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  if (variant == "constant") return PhaseSpec::constant(j.at("c").get<double>());
  if (variant == "shrinker" || variant == "expander")
    return PhaseSpec::shrinker(j.value("s1", 0.0), j.at("s2").get<double>());
  if (variant == "translator") return PhaseSpec::translator(j.value("t1", 0.0), vec("t2"), vec("t3"));
  if (variant == "rotator") return PhaseSpec::rotator(j.value("r1", 0.0), j.at("r2").get<double>());
  throw Error(ErrorKind::InvalidArgument, "unknown phase variant '" + variant + "'");
}

/// JSON text for named variants, the name for custom phases.
inline std::string phase_tag(const PhaseSpec& phase) {
  if (phase.is_custom()) return phase.name();
  return phase_to_json(phase).dump();
}

}  // namespace lmcf
