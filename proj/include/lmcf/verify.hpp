#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <fmt/core.h>
#include <fmt/format.h>
#include <json.hpp>

#include "lmcf/field_io.hpp"
#include "lmcf/geometry.hpp"
#include "lmcf/grid.hpp"
#include "lmcf/parallel.hpp"
#include "lmcf/phase.hpp"
#include "lmcf/polynomial.hpp"

namespace lmcf {

inline double jacobi_c(int n) { return 1.0 / (2.0 * n); }

/// Extra information the generic (Custom) constant needs: the oscillation of
/// u over the doubled ball, which also bounds |Du| on the unit ball.
struct BallContext {
  double osc = 0.0;
};

/// Explicit K(n, nu1, nu2) for a general phase. Bounding every second partial
/// by nu2 and every first partial by nu1 in
///   sum_a [|T_xaxa| + 2|T_xau u_a| + 2|T_xaua| + 2|T_uua u_a| + |T_u| + |T_uu| u_a^2]
///     + (n/2) sum_a (T_ua^2 + T_xa^2 + T_u^2 u_a^2)
/// gives n(3 nu2 + nu1 + n nu1^2) + 4 nu2 sum|u_a| + (nu2 + n nu1^2 / 2)|Du|^2.
/// With sum|u_a| <= sqrt(n)|Du|, 2|Du| <= 1 + |Du|^2 and |Du| <= osc this is
/// at most K (1 + osc^2) with K below.
inline double custom_jacobi_k(int n, double nu1, double nu2) {
  const double dn = n;
  return dn * (3.0 * nu2 + nu1 + dn * nu1 * nu1) + 2.0 * std::sqrt(dn) * nu2 + nu2 + 0.5 * dn * nu1 * nu1;
}

/// The constant C in Delta_g b >= |grad_g b|^2 / (2n) - C at a point.
inline double jacobi_constant(const PhaseSpec& phase, const Vec& x, const Vec& grad,
                              const std::optional<BallContext>& ctx = std::nullopt) {
  const int n = static_cast<int>(x.size());
  return std::visit(
      [&](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, phases::Constant>) {
          return 0.0;
        } else if constexpr (std::is_same_v<T, phases::Shrinker>) {
          return 0.5 * n * p.s2 * p.s2 * (x.squaredNorm() + grad.squaredNorm());
        } else if constexpr (std::is_same_v<T, phases::Translator>) {
          return 0.5 * n * (p.t2.squaredNorm() + p.t3.squaredNorm());
        } else if constexpr (std::is_same_v<T, phases::Rotator>) {
          return 0.5 * n * p.r2 * p.r2 * (x.squaredNorm() + grad.squaredNorm());
        } else {
          if (!ctx) throw Error(ErrorKind::MissingOsc, "a custom phase needs the ball oscillation");
          return custom_jacobi_k(n, p.nu1, p.nu2) * (1.0 + ctx->osc * ctx->osc);
        }
      },
      phase.variant());
}

// ---------------------------------------------------------------------------
// Pointwise Jacobi inequality

struct JacobiPointReport {
  Node node{0, 0, 0};
  Vec x;
  double lhs = 0.0;
  double grad_sq = 0.0;
  double c_n = 0.0;
  double c_point = 0.0;
  double margin = 0.0;
  double margin_half_c = 0.0;  // same with c(n)/2
  double coarse_margin = 0.0;  // stencils of stride 2
  double min_hess_eig = 0.0;
  bool convex_here = true;
  double slack_budget = 0.0;
  double b = 0.0;
  bool violated = false;
};

struct JacobiOptions {
  std::optional<double> slack_coefficient;  // K in tau(h) = K h^2; estimated when unset
  double richardson_safety = 2.0;
  double convex_tol = 1e-8;
  std::optional<BallContext> ball_context;
  unsigned jobs = 1;
};

struct JacobiSummary {
  std::vector<JacobiPointReport> points;  // admissible nodes only
  int skipped_nonconvex = 0;
  int violations = 0;
  double slack_coefficient = 0.0;
  double slack_budget = 0.0;
  double roundoff_floor = 0.0;
  double min_margin = std::numeric_limits<double>::infinity();
  double min_margin_half_c = std::numeric_limits<double>::infinity();
  bool ok() const { return violations == 0; }
};

namespace detail {

inline double log_volume_of(const Mat& hess) {
  const Vec lambda = sym_eigen(hess).values;
  double acc = 0.0;
  for (int i = 0; i < lambda.size(); ++i) acc += 0.5 * std::log1p(lambda(i) * lambda(i));
  return acc;
}

struct JacobiTerms {
  double b = 0.0;
  double lhs = 0.0;
  double grad_sq = 0.0;
  Vec grad;
  Mat hess;
};

// Delta_g b (drift form) and |grad_g b|^2 with every difference taken at
// stride s. b is recomputed from stride-s Hessians on the 3^n patch.
inline JacobiTerms jacobi_terms(const PotentialField& u, const Node& node, const PhaseSpec& phase, int s) {
  require_depth(u.spec, node, 2 * s);
  const int n = u.spec.dim();
  const double hh = s * u.spec.spacing();
  auto b_at = [&](const Node& y) { return log_volume_of(hessian_stride(u, y, s)); };

  JacobiTerms t;
  t.hess = hessian_stride(u, node, s);
  t.grad = Vec(n);
  for (int i = 0; i < n; ++i) t.grad(i) = (u.at(shifted(node, i, s)) - u.at(shifted(node, i, -s))) / (2.0 * hh);

  const double b0 = b_at(node);
  t.b = b0;
  Vec db(n);
  Mat d2b(n, n);
  for (int i = 0; i < n; ++i) {
    const double bp = b_at(shifted(node, i, s)), bm = b_at(shifted(node, i, -s));
    db(i) = (bp - bm) / (2.0 * hh);
    d2b(i, i) = (bp - 2.0 * b0 + bm) / (hh * hh);
    for (int j = i + 1; j < n; ++j) {
      const double mixed = (b_at(shifted(node, i, s, j, s)) - b_at(shifted(node, i, s, j, -s)) -
                            b_at(shifted(node, i, -s, j, s)) + b_at(shifted(node, i, -s, j, -s))) /
                           (4.0 * hh * hh);
      d2b(i, j) = d2b(j, i) = mixed;
    }
  }
  const Vec x = u.spec.position(node);
  const PointGeometry pg = make_point_geometry(x, t.grad, t.hess);
  const Vec dtheta = total_derivative(phase, x, u.at(node), t.grad, t.hess);
  t.lhs = laplace_beltrami_drift(pg, db, d2b, dtheta);
  t.grad_sq = metric_gradient_sq(pg, db);
  return t;
}

}  // namespace detail

/// Checks Delta_g b >= c(n)|grad_g b|^2 - C at every node of `ball` that is
/// convex and has four nodes of clearance. Violations are margins below
/// -tau(h) with tau(h) = K h^2; when K is not given it is estimated from the
/// gap between the stride-1 and stride-2 margins.
inline JacobiSummary verify_jacobi_pointwise(const PotentialField& u, const PhaseSpec& phase, const BallRegion& ball,
                                             const JacobiOptions& opt = {}) {
  const GridSpec& spec = u.spec;
  const int n = spec.dim();
  const double h = spec.spacing();
  const std::vector<Node> nodes = nodes_in_ball(spec, ball, 4);
  if (nodes.empty()) throw Error(ErrorKind::EmptyRegion, "no node with four nodes of clearance inside the ball");

  std::vector<JacobiPointReport> all(nodes.size());
  parallel_for(nodes.size(), opt.jobs, [&](std::size_t k) {
    const Node& node = nodes[k];
    JacobiPointReport& r = all[k];
    r.node = node;
    r.x = spec.position(node);
    r.c_n = jacobi_c(n);
    const detail::JacobiTerms fine = detail::jacobi_terms(u, node, phase, 1);
    r.min_hess_eig = min_eigenvalue(fine.hess);
    r.convex_here = r.min_hess_eig >= -opt.convex_tol;
    r.lhs = fine.lhs;
    r.b = fine.b;
    r.grad_sq = fine.grad_sq;
    r.c_point = jacobi_constant(phase, r.x, fine.grad, opt.ball_context);
    r.margin = r.lhs - r.c_n * r.grad_sq + r.c_point;
    r.margin_half_c = r.lhs - 0.5 * r.c_n * r.grad_sq + r.c_point;
    const detail::JacobiTerms coarse = detail::jacobi_terms(u, node, phase, 2);
    r.coarse_margin = coarse.lhs - r.c_n * coarse.grad_sq + jacobi_constant(phase, r.x, coarse.grad, opt.ball_context);
  });

  JacobiSummary out;
  double worst_gap = 0.0, max_b = 0.0;
  for (const auto& r : all) {
    if (!r.convex_here) {
      ++out.skipped_nonconvex;
      continue;
    }
    worst_gap = std::max(worst_gap, std::abs(r.coarse_margin - r.margin));
    max_b = std::max(max_b, std::abs(r.b));
    out.points.push_back(r);
  }
  // e(2h) - e(h) = 3 K h^2 for a second-order error K h^2
  out.slack_coefficient = opt.slack_coefficient.value_or(opt.richardson_safety * worst_gap / (3.0 * h * h));
  // second differences of b lose about eps |b| / h^2 to rounding
  out.roundoff_floor = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + max_b) / (h * h);
  out.slack_budget = out.slack_coefficient * h * h + out.roundoff_floor;
  for (auto& r : out.points) {
    r.slack_budget = out.slack_budget;
    r.violated = r.margin < -r.slack_budget;
    if (r.violated) ++out.violations;
    out.min_margin = std::min(out.min_margin, r.margin);
    out.min_margin_half_c = std::min(out.min_margin_half_c, r.margin_half_c);
  }
  return out;
}

inline std::string jacobi_csv(const JacobiSummary& s) {
  std::string out = "i0,i1,i2,x0,x1,x2,lhs,grad_sq,c_n,c_point,margin,margin_half_c,coarse_margin,min_hess_eig,slack_budget,violated\n";
  for (const auto& r : s.points) {
    Vec x = Vec::Zero(3);
    x.head(r.x.size()) = r.x;
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.node[0], r.node[1], r.node[2], fmt17(x(0)),
                       fmt17(x(1)), fmt17(x(2)), fmt17(r.lhs), fmt17(r.grad_sq), fmt17(r.c_n), fmt17(r.c_point),
                       fmt17(r.margin), fmt17(r.margin_half_c), fmt17(r.coarse_margin), fmt17(r.min_hess_eig),
                       fmt17(r.slack_budget), r.violated ? 1 : 0);
  }
  return out;
}

inline nlohmann::json to_json(const JacobiSummary& s) {
  nlohmann::json j;
  j["admissible_nodes"] = s.points.size();
  j["skipped_nonconvex"] = s.skipped_nonconvex;
  j["violations"] = s.violations;
  j["slack_coefficient"] = s.slack_coefficient;
  j["slack_budget"] = s.slack_budget;
  j["roundoff_floor"] = s.roundoff_floor;
  j["min_margin"] = s.min_margin;
  j["min_margin_half_c"] = s.min_margin_half_c;
  j["ok"] = s.ok();
  return j;
}

// ---------------------------------------------------------------------------
// Laplacian identity for log sqrt(det g)

struct Prop31Report {
  Vec x;
  double lhs_fd = 0.0;  // Delta_g b computed without the identity
  double lhs_drift = 0.0;
  double rhs_formula = 0.0;
  double abs_gap = 0.0;
  double grad_lhs = 0.0;  // |grad_g b|^2 / n
  double grad_rhs = 0.0;  // sum_i lambda_i^2 h_iii^2 + sum_{i != j} lambda_j^2 h_jji^2
  bool gradient_bound_ok = true;
  bool eigen_gap_ok = true;
};

/// Right-hand side of the identity from eigenframe data. `dtheta` and
/// `d2theta` are the coordinate-frame first and second derivatives of
/// x -> Theta(x, u, Du).
struct Prop31Rhs {
  double value = 0.0;
  double grad_rhs = 0.0;
  Vec db_eigen;  // d_i b in the eigenframe
};

inline Prop31Rhs prop31_rhs(const PointGeometry& pg, const Vec& dtheta, const Mat& d2theta) {
  if (!pg.third || !pg.h_tensor) throw Error(ErrorKind::MissingThirdDerivative, "the identity needs D^3u");
  const int n = pg.dim();
  const Vec& l = pg.lambda;
  const Tensor3& h = *pg.h_tensor;
  const Tensor3 ue = pg.third->rotated(pg.frame);
  Prop31Rhs out;

  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += (1.0 + l(i) * l(i)) * h(i, i, i) * h(i, i, i);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (j != i) sum += (3.0 + l(j) * l(j) + 2.0 * l(i) * l(j)) * h(j, j, i) * h(j, j, i);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int k = j + 1; k < n; ++k)
        sum += 2.0 * (3.0 + l(i) * l(j) + l(j) * l(k) + l(k) * l(i)) * h(i, j, k) * h(i, j, k);

  out.db_eigen = Vec::Zero(n);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < n; ++a) out.db_eigen(i) += pg.g_inv_diag(a) * ue(a, a, i) * l(a);

  const Vec dt = pg.frame.transpose() * dtheta;
  const Mat d2t = pg.frame.transpose() * d2theta * pg.frame;
  for (int i = 0; i < n; ++i) {
    sum += pg.g_inv_diag(i) * l(i) * d2t(i, i);
    sum -= pg.g_inv_diag(i) * l(i) * dt(i) * out.db_eigen(i);
  }
  out.value = sum;

  for (int i = 0; i < n; ++i) out.grad_rhs += l(i) * l(i) * h(i, i, i) * h(i, i, i);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (j != i) out.grad_rhs += l(j) * l(j) * h(j, j, i) * h(j, j, i);
  return out;
}

namespace detail {

struct AngleJet {
  Vec d;  // d_k of sum arctan lambda
  Mat d2;
};

struct LogVolumeJet {
  Vec d;
  Mat d2;
  double laplace_beltrami = 0.0;  // divergence form, valid for any u
};

inline std::vector<Mat> third_slices(const Polynomial& u, const Vec& x) {
  const int n = u.dim();
  std::vector<Mat> out(n, Mat(n, n));
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) out[k](i, j) = u.partial(x, {i, j, k});
  return out;
}

inline Mat fourth_slice(const Polynomial& u, const Vec& x, int k, int l) {
  const int n = u.dim();
  Mat out(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out(i, j) = u.partial(x, {i, j, k, l});
  return out;
}

// Exact jets of A = sum arctan lambda and b = log sqrt det(I + H^2) from
// polynomial derivatives up to order four.
inline std::pair<AngleJet, LogVolumeJet> analytic_jets(const Polynomial& u, const Vec& x) {
  const int n = u.dim();
  const Mat hess = u.hessian(x);
  const Mat gi = (Mat::Identity(n, n) + hess * hess).inverse();
  const auto hk = third_slices(u, x);
  std::vector<Mat> dg(n);
  for (int k = 0; k < n; ++k) dg[k] = hk[k] * hess + hess * hk[k];

  AngleJet a{Vec(n), Mat(n, n)};
  LogVolumeJet b{Vec(n), Mat(n, n), 0.0};
  for (int k = 0; k < n; ++k) {
    a.d(k) = (gi * hk[k]).trace();
    b.d(k) = 0.5 * (gi * dg[k]).trace();
  }
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l) {
      const Mat hkl = fourth_slice(u, x, k, l);
      const Mat dkl = hkl * hess + hk[k] * hk[l] + hk[l] * hk[k] + hess * hkl;
      a.d2(k, l) = (gi * hkl).trace() - (gi * dg[l] * gi * hk[k]).trace();
      b.d2(k, l) = 0.5 * ((gi * dkl).trace() - (gi * dg[l] * gi * dg[k]).trace());
    }
  // Delta_g b = g^{ij} b_ij + (d_i g^{ij} + g^{ij} b_i) b_j
  Vec div_gi = Vec::Zero(n);
  for (int i = 0; i < n; ++i) div_gi += (-gi * dg[i] * gi).row(i).transpose();
  b.laplace_beltrami = (gi.cwiseProduct(b.d2)).sum() + div_gi.dot(b.d) + b.d.dot(gi * b.d);
  return {a, b};
}

}  // namespace detail

/// The identity at x0 for a polynomial potential. The potential need not
/// solve the equation: the right side uses the derivatives of the realized
/// angle sum arctan lambda, assembled as the chain-rule derivatives of the
/// phase along the graph plus the derivatives of the defect
/// angle - Theta(x, u, Du). A wrong chain rule therefore shows up in the gap.
inline Prop31Report verify_prop31(const Polynomial& u, const PhaseSpec& phase, const Vec& x0) {
  const int n = u.dim();
  const PointGeometry pg = make_point_geometry(x0, u.gradient(x0), u.hessian(x0), u.third(x0));
  Prop31Report r;
  r.x = x0;
  r.eigen_gap_ok = !pg.degenerate_frame;
  if (!r.eigen_gap_ok) return r;

  const auto [angle, logv] = detail::analytic_jets(u, x0);
  Vec dtheta = angle.d;
  Mat d2theta = angle.d2;
  if (const auto composed = compose(phase, u)) {
    const PhasePartials d = phase.partials(x0, u(x0), pg.grad);
    const Vec chain1 = total_derivative(d, pg.grad, pg.hess);
    const Mat chain2 = total_second_derivative(d, pg.grad, pg.hess, pg.third);
    dtheta = chain1 + (angle.d - composed->gradient(x0));
    d2theta = chain2 + (angle.d2 - composed->hessian(x0));
  }
  const Prop31Rhs rhs = prop31_rhs(pg, dtheta, d2theta);
  r.lhs_fd = logv.laplace_beltrami;
  r.lhs_drift = laplace_beltrami_drift(pg, logv.d, logv.d2, dtheta);
  r.rhs_formula = rhs.value;
  r.abs_gap = std::abs(r.lhs_fd - r.rhs_formula);
  r.grad_lhs = metric_gradient_sq(pg, logv.d) / n;
  r.grad_rhs = rhs.grad_rhs;
  r.gradient_bound_ok = r.grad_lhs <= r.grad_rhs * (1.0 + 1e-12) + 1e-14;
  return r;
}

/// The identity at a node of a solved field: the left side by the flux
/// (divergence) route of the Laplace-Beltrami operator, the right side from
/// finite-difference derivatives and the phase. Needs four nodes of
/// clearance; the gap is O(h^2).
inline Prop31Report verify_prop31(const PotentialField& u, const PhaseSpec& phase, const Node& node) {
  detail::require_depth(u.spec, node, 4);
  const int n = u.spec.dim();
  const Vec x = u.spec.position(node);
  const PointGeometry pg = make_point_geometry(x, gradient_at(u, node), hessian_at(u, node), third_at(u, node, true));
  Prop31Report r;
  r.x = x;
  r.eigen_gap_ok = !pg.degenerate_frame;
  if (!r.eigen_gap_ok) return r;

  const PhasePartials d = phase.partials(x, u.at(node), pg.grad);
  const Vec dtheta = total_derivative(d, pg.grad, pg.hess);
  const Mat d2theta = total_second_derivative(d, pg.grad, pg.hess, pg.third);
  const Prop31Rhs rhs = prop31_rhs(pg, dtheta, d2theta);
  const PotentialField b = log_volume_field(u);
  const LaplaceBeltramiRoutes routes = laplace_beltrami(u, b, node, phase);
  r.lhs_fd = routes.divergence;
  r.lhs_drift = routes.drift;
  r.rhs_formula = rhs.value;
  r.abs_gap = std::abs(r.lhs_fd - r.rhs_formula);
  r.grad_lhs = metric_gradient_sq(pg, gradient_at(b, node)) / n;
  r.grad_rhs = rhs.grad_rhs;
  // both sides carry O(h^2) errors here
  r.gradient_bound_ok = r.grad_lhs <= r.grad_rhs + 1e-6 * (1.0 + r.grad_rhs);
  return r;
}

inline nlohmann::json to_json(const Prop31Report& r) {
  nlohmann::json j;
  j["x"] = std::vector<double>(r.x.data(), r.x.data() + r.x.size());
  j["eigen_gap_ok"] = r.eigen_gap_ok;
  j["lhs"] = r.lhs_fd;
  j["lhs_drift"] = r.lhs_drift;
  j["rhs"] = r.rhs_formula;
  j["abs_gap"] = r.abs_gap;
  j["grad_lhs"] = r.grad_lhs;
  j["grad_rhs"] = r.grad_rhs;
  j["gradient_bound_ok"] = r.gradient_bound_ok;
  return j;
}

struct Prop31SuiteCase {
  int n = 1;
  int draw = 0;
  std::string phase;
  Prop31Report report;
};

struct Prop31Suite {
  std::vector<Prop31SuiteCase> cases;
  std::size_t skipped = 0;
  std::size_t failures = 0;  // gap or gradient bound violated
  double worst_gap = 0.0;
  double tol = 1e-9;
  bool ok() const { return failures == 0 && 20 * skipped < cases.size(); }
};

/// The identity on `draws` seeded random convex cubics per dimension 1..3,
/// each at a random point and under the four named phases.
inline Prop31Suite prop31_suite(std::uint64_t seed, int draws = 100, double tol = 1e-9) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-0.3, 0.3);
  Prop31Suite out;
  out.tol = tol;
  for (int n = 1; n <= 3; ++n) {
    const std::vector<PhaseSpec> phases{PhaseSpec::constant(0.7), PhaseSpec::shrinker(0.2, 1.0),
                                        PhaseSpec::translator(0.1, Vec::LinSpaced(n, 0.4, -0.3), Vec::LinSpaced(n, 0.2, 0.5)),
                                        PhaseSpec::rotator(0.3, 0.8)};
    for (int k = 0; k < draws; ++k) {
      const Polynomial u = random_cubic(n, rng);
      Vec x(n);
      for (int i = 0; i < n; ++i) x(i) = unif(rng);
      for (const auto& ph : phases) {
        Prop31SuiteCase c{n, k, ph.name(), verify_prop31(u, ph, x)};
        if (!c.report.eigen_gap_ok) {
          ++out.skipped;
        } else {
          out.worst_gap = std::max(out.worst_gap, c.report.abs_gap);
          if (!(c.report.abs_gap < tol) || !c.report.gradient_bound_ok) ++out.failures;
        }
        out.cases.push_back(std::move(c));
      }
    }
  }
  return out;
}

inline std::string prop31_csv(const Prop31Suite& s) {
  std::string out = "n,draw,phase,eigen_gap_ok,lhs,rhs,abs_gap,grad_lhs,grad_rhs,gradient_bound_ok\n";
  for (const auto& c : s.cases) {
    const auto& r = c.report;
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", c.n, c.draw, c.phase, r.eigen_gap_ok ? 1 : 0, fmt17(r.lhs_fd),
                       fmt17(r.rhs_formula), fmt17(r.abs_gap), fmt17(r.grad_lhs), fmt17(r.grad_rhs),
                       r.gradient_bound_ok ? 1 : 0);
  }
  return out;
}

inline nlohmann::json to_json(const Prop31Suite& s) {
  return {{"cases", s.cases.size()}, {"skipped", s.skipped},   {"failures", s.failures},
          {"worst_gap", s.worst_gap}, {"tol", s.tol},            {"ok", s.ok()}};
}

// ---------------------------------------------------------------------------
// Integral Jacobi inequality

struct IntegralJacobiReport {
  double r = 0.5;
  double lhs = 0.0;
  double rhs = 0.0;
  double c_ball = 0.0;
  double volume_b1 = 0.0;
  double headroom = std::numeric_limits<double>::infinity();  // rhs / lhs
  int nodes_b1 = 0;
  int nodes_br = 0;
  bool ok = false;
};

struct IntegralJacobiOptions {
  double convex_tol = 1e-8;
  double relative_slack = 0.02;
  std::optional<BallContext> ball_context;
};

/// int_{B_r} |grad_g b|^2 dv_g <= (64 n^2/(1-r)^2 + 4 n C_ball) Vol_g(B_1) on the
/// unit ball at the origin, with nodal quadrature. The constants come from
/// c(n) = 1/(2n) and a cutoff with |D phi| <= 2/(1-r).
inline IntegralJacobiReport verify_integral_jacobi(const PotentialField& u, const PhaseSpec& phase, double r,
                                                   const IntegralJacobiOptions& opt = {}) {
  if (!(r > 0.0 && r < 1.0)) throw Error(ErrorKind::InvalidArgument, "inner radius must lie in (0, 1)");
  const GridSpec& spec = u.spec;
  const int n = spec.dim();
  const BallRegion unit = BallRegion::origin(n, 1.0);
  const std::vector<Node> nodes = nodes_in_ball(spec, unit);
  if (nodes.empty()) throw Error(ErrorKind::EmptyRegion, "no node in the unit ball");
  const PotentialField b = log_volume_field(u);
  const double cell = std::pow(spec.spacing(), n);

  IntegralJacobiReport out;
  out.r = r;
  for (const Node& node : nodes) {
    detail::require_depth(spec, node, 2);
    const PointGeometry pg = point_geometry(u, node);
    if (min_eigenvalue(pg.hess) < -opt.convex_tol)
      throw Error(ErrorKind::NotConvex, fmt::format("potential is not convex at x = ({})", fmt::join(pg.x.data(), pg.x.data() + n, ", ")));
    out.volume_b1 += pg.volume * cell;
    ++out.nodes_b1;
    out.c_ball = std::max(out.c_ball, jacobi_constant(phase, pg.x, pg.grad, opt.ball_context));
    if (pg.x.norm() <= r * (1.0 + 1e-12)) {
      out.lhs += metric_gradient_sq(pg, gradient_at(b, node)) * pg.volume * cell;
      ++out.nodes_br;
    }
  }
  const double dn = n;
  out.rhs = (64.0 * dn * dn / ((1.0 - r) * (1.0 - r)) + 4.0 * dn * out.c_ball) * out.volume_b1;
  out.ok = out.lhs <= out.rhs * (1.0 + opt.relative_slack);
  if (out.lhs > 0.0) out.headroom = out.rhs / out.lhs;
  return out;
}

inline nlohmann::json to_json(const IntegralJacobiReport& r) {
  nlohmann::json j;
  j["r"] = r.r;
  j["lhs"] = r.lhs;
  j["rhs"] = r.rhs;
  j["c_ball"] = r.c_ball;
  j["volume_b1"] = r.volume_b1;
  j["headroom"] = std::isfinite(r.headroom) ? nlohmann::json(r.headroom) : nlohmann::json("inf");
  j["nodes_b1"] = r.nodes_b1;
  j["nodes_br"] = r.nodes_br;
  j["ok"] = r.ok;
  return j;
}

}  // namespace lmcf
