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
#include "lmcf/parallel.hpp"
#include "lmcf/phase.hpp"
#include "lmcf/solver.hpp"
#include "lmcf/verify.hpp"

namespace lmcf {

// ---------------------------------------------------------------------------
// Scaling

/// v(x) = u(kx)/k^2 sampled on `target` (default: same resolution on the box
/// scaled by 1/k, whose nodes map exactly onto source nodes).
inline PotentialField rescale(const PotentialField& u, double k, const std::optional<GridSpec>& target = std::nullopt) {
  if (!(k > 0.0) || !std::isfinite(k)) throw Error(ErrorKind::InvalidArgument, "scale factor must be positive");
  const GridSpec& src = u.spec;
  const GridSpec spec = target.value_or(GridSpec(src.dim(), src.half_width() / k, src.points_per_axis()));
  if (spec.dim() != src.dim()) throw Error(ErrorKind::InvalidArgument, "target grid dimension mismatch");
  if (spec.half_width() * k > src.half_width() * (1.0 + 1e-12))
    throw Error(ErrorKind::OutOfDomain, fmt::format("scaled box half-width {:.6g} exceeds the source box {:.6g}",
                                                    spec.half_width() * k, src.half_width()));
  const double h = src.spacing();
  PotentialField v(spec);
  spec.for_each_node([&](const Node& node) {
    const Vec y = k * spec.position(node);
    Node hit{0, 0, 0};
    bool on_node = true;
    for (int a = 0; a < spec.dim() && on_node; ++a) {
      const double t = (y(a) + src.half_width()) / h;
      hit[a] = static_cast<int>(std::lround(t));
      on_node = std::abs(t - hit[a]) < 1e-9 && src.contains(hit);
    }
    const double value = on_node ? u.at(hit) : interpolate_cubic(u, y);
    v.at(node) = value / (k * k);
  });
  v.metadata = u.metadata;
  v.metadata["rescaled_by"] = fmt17(k);
  return v;
}

/// Oscillation on a ball from the nodes inside it together with cubic
/// interpolants on its bounding sphere, so the extremes on |x - c| = r are not
/// missed by the lattice.
inline double ball_oscillation(const PotentialField& u, const BallRegion& ball) {
  const int n = u.spec.dim();
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const Node& node : nodes_in_ball(u.spec, ball)) {
    lo = std::min(lo, u.at(node));
    hi = std::max(hi, u.at(node));
  }
  auto visit = [&](const Vec& dir) {
    const Vec x = ball.center + ball.radius * dir;
    if (!u.spec.contains_point(x)) return;
    const double v = interpolate_cubic(u, x);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  };
  if (n == 1) {
    visit(Vec::Constant(1, 1.0));
    visit(Vec::Constant(1, -1.0));
  } else if (n == 2) {
    for (int i = 0; i < 2048; ++i) {
      Vec d(2);
      d << std::cos(2.0 * kPi * i / 2048), std::sin(2.0 * kPi * i / 2048);
      visit(d);
    }
  } else {
    const int count = 8192;
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
      const double z = 1.0 - 2.0 * (i + 0.5) / count;
      const double rad = std::sqrt(1.0 - z * z);
      Vec d(3);
      d << rad * std::cos(golden * i), rad * std::sin(golden * i), z;
      visit(d);
    }
  }
  if (!(hi >= lo)) throw Error(ErrorKind::EmptyRegion, "no sample inside the ball");
  return hi - lo;
}

// ---------------------------------------------------------------------------
// Records and fits

struct EstimateRecord {
  std::string family_id;
  nlohmann::json phase;
  double amplitude = 0.0;
  double R = 0.0;
  int m = 0;
  double osc_over_R2 = 0.0;
  double hess_origin_norm = 0.0;
  double min_phase = 0.0;
  double min_hess_eig = 0.0;
  bool converged = false;
  bool hypercritical = false;
  int iterations = 0;
  std::string failure;
};

struct EnvelopeFit {
  double c1 = 0.0;
  double c2 = 0.0;
  int exponent = 0;
  std::size_t records = 0;
  std::size_t hull_points = 0;
  bool all_below = false;
};

/// Envelope log|D^2u(0)| <= log C1 + C2 (osc/R^2)^exponent over the converged
/// records: C2 is the least-squares slope through the upper convex hull of the
/// points (clamped at 0) and C1 the smallest intercept keeping every record below.
inline EnvelopeFit fit_bound(const std::vector<EstimateRecord>& records, int exponent) {
  struct P {
    double x, y;
  };
  std::vector<P> pts;
  for (const auto& r : records)
    if (r.converged && r.hess_origin_norm > 0.0)
      pts.push_back({std::pow(r.osc_over_R2, exponent), std::log(r.hess_origin_norm)});
  if (pts.empty()) throw Error(ErrorKind::TooFewRecords, "no converged record with a nonzero Hessian to fit");
  std::sort(pts.begin(), pts.end(), [](const P& a, const P& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });

  std::vector<P> hull;
  for (const P& p : pts) {
    while (!hull.empty() && hull.back().x == p.x) hull.pop_back();
    while (hull.size() >= 2) {
      const P& a = hull[hull.size() - 2];
      const P& b = hull.back();
      if ((b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) >= 0.0) hull.pop_back();
      else break;
    }
    hull.push_back(p);
  }

  EnvelopeFit fit;
  fit.exponent = exponent;
  fit.records = pts.size();
  fit.hull_points = hull.size();
  if (hull.size() >= 2) {
    double mx = 0.0, my = 0.0;
    for (const P& p : hull) {
      mx += p.x;
      my += p.y;
    }
    mx /= hull.size();
    my /= hull.size();
    double sxy = 0.0, sxx = 0.0;
    for (const P& p : hull) {
      sxy += (p.x - mx) * (p.y - my);
      sxx += (p.x - mx) * (p.x - mx);
    }
    fit.c2 = sxx > 0.0 ? std::max(sxy / sxx, 0.0) : 0.0;
  }
  double intercept = -std::numeric_limits<double>::infinity();
  for (const P& p : pts) intercept = std::max(intercept, p.y - fit.c2 * p.x);
  fit.c1 = std::exp(intercept);
  fit.all_below = true;
  for (const P& p : pts)
    if (p.y > intercept + fit.c2 * p.x + 1e-12 * (1.0 + std::abs(p.y))) fit.all_below = false;
  return fit;
}

inline nlohmann::json to_json(const EnvelopeFit& f) {
  return {{"C1", f.c1},           {"C2", f.c2},   {"log_C1", std::log(f.c1)},   {"exponent", f.exponent},
          {"records", f.records}, {"hull_points", f.hull_points}, {"all_below", f.all_below}};
}

// ---------------------------------------------------------------------------
// Sweeps

/// Boundary data amplitude * 1/2 x^T base x. The phase is a template whose
/// leading constant (c, s1, t1 or r1) is an offset added to the Lagrangian
/// angle of amplitude * base, so the quadratic itself solves the family at
/// offset zero and continuation starts from an exact solution.
struct SweepPlan {
  std::string family_id = "family";
  PhaseSpec phase;
  Mat base;
  std::vector<double> amplitudes;
  std::vector<double> radii{1.0};
  int m = 65;
  double box_factor = 1.25;  // box half-width = box_factor * R
  int continuation_steps = 4;
  SolveOptions solve;
  unsigned jobs = 1;

  void validate() const {
    if (amplitudes.empty() || radii.empty()) throw Error(ErrorKind::InvalidArgument, "sweep grids must be nonempty");
    if (base.rows() < 1 || base.rows() > kMaxDim || base.rows() != base.cols())
      throw Error(ErrorKind::InvalidArgument, "base must be a square matrix of size 1..3");
    if (!(box_factor > 1.0)) throw Error(ErrorKind::InvalidArgument, "box_factor must exceed 1");
    if (continuation_steps < 1) throw Error(ErrorKind::InvalidArgument, "continuation_steps must be positive");
    if (phase.is_custom()) throw Error(ErrorKind::InvalidArgument, "sweeps need a named phase family");
  }
};

/// The family member at continuation parameter s in [0, 1] around `angle`.
inline PhaseSpec family_phase(const PhaseSpec& templ, double angle, double s) {
  return std::visit(
      [&](const auto& ph) -> PhaseSpec {
        using T = std::decay_t<decltype(ph)>;
        if constexpr (std::is_same_v<T, phases::Constant>) return PhaseSpec::constant(angle + s * ph.c);
        if constexpr (std::is_same_v<T, phases::Shrinker>) return PhaseSpec::shrinker(angle + s * ph.s1, ph.s2);
        if constexpr (std::is_same_v<T, phases::Translator>)
          return PhaseSpec::translator(angle + s * ph.t1, s * ph.t2, s * ph.t3);
        if constexpr (std::is_same_v<T, phases::Rotator>)
          return s == 0.0 ? PhaseSpec::constant(angle) : PhaseSpec::rotator(angle + s * ph.r1, s * ph.r2);
        if constexpr (std::is_same_v<T, phases::Custom>)
          throw Error(ErrorKind::InvalidArgument, "sweeps need a named phase family");
      },
      templ.variant());
}

struct SweepItem {
  EstimateRecord record;
  std::optional<PotentialField> solution;
};

inline SweepItem run_sweep_item(const SweepPlan& plan, double amplitude, double R) {
  const int n = static_cast<int>(plan.base.rows());
  const Mat a = amplitude * plan.base;
  const double angle = lagrangian_angle(a);
  const PhaseSpec target = family_phase(plan.phase, angle, 1.0);
  SweepItem item;
  EstimateRecord& rec = item.record;
  rec.family_id = plan.family_id;
  rec.phase = phase_to_json(target);
  rec.amplitude = amplitude;
  rec.R = R;
  rec.m = plan.m;
  try {
    const GridSpec spec(n, plan.box_factor * R, plan.m);
    auto problem = DirichletProblem::from_function(spec, target, [a](const Vec& x) { return 0.5 * x.dot(a * x); });
    problem.initial_guess = problem.boundary;
    std::vector<ContinuationStage> path;
    for (int j = 0; j <= plan.continuation_steps; ++j)
      path.push_back({family_phase(plan.phase, angle, static_cast<double>(j) / plan.continuation_steps), 1.0});
    ContinuationOptions copt;
    copt.solve = plan.solve;
    const auto result = continue_in(problem, path, copt);
    for (const auto& r : result.reports) rec.iterations += r.iterations;
    if (!result.reports.empty()) {
      rec.min_phase = result.reports.back().final_min_abs_phase;
      rec.min_hess_eig = result.reports.back().final_min_hessian_eigenvalue;
    }
    rec.converged = result.complete;
    rec.failure = result.failure;
    if (rec.converged) {
      const PotentialField& u = *result.solution;
      rec.osc_over_R2 = ball_oscillation(u, BallRegion::origin(n, R)) / (R * R);
      rec.hess_origin_norm = spectral_norm_sym(hessian_at(u, spec.center()));
      rec.hypercritical = rec.min_phase >= hypercritical_threshold(n) - 1e-10;
      item.solution = u;
    }
  } catch (const Error& e) {
    rec.converged = false;
    rec.failure = e.what();
  }
  return item;
}

struct SweepResult {
  std::vector<EstimateRecord> records;
  std::vector<std::size_t> monotonicity_flags;  // records whose |D^2u(0)| drops as amplitude grows
};

/// Runs every (amplitude, R) pair, amplitude-major; per-item failures are
/// recorded, never thrown.
inline SweepResult run_sweep(const SweepPlan& plan) {
  plan.validate();
  const std::size_t na = plan.amplitudes.size(), nr = plan.radii.size();
  SweepResult out;
  out.records.resize(na * nr);
  parallel_for(na * nr, plan.jobs, [&](std::size_t i) {
    out.records[i] = run_sweep_item(plan, plan.amplitudes[i / nr], plan.radii[i % nr]).record;
  });
  for (std::size_t ir = 0; ir < nr; ++ir) {
    double prev_amp = -std::numeric_limits<double>::infinity(), prev_hess = 0.0;
    std::vector<std::size_t> order(na);
    for (std::size_t ia = 0; ia < na; ++ia) order[ia] = ia * nr + ir;
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return out.records[x].amplitude < out.records[y].amplitude; });
    for (std::size_t idx : order) {
      const auto& r = out.records[idx];
      if (!r.converged) continue;
      if (r.amplitude > prev_amp && r.hess_origin_norm < prev_hess) out.monotonicity_flags.push_back(idx);
      prev_amp = r.amplitude;
      prev_hess = r.hess_origin_norm;
    }
  }
  return out;
}

inline std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string sweep_csv(const std::vector<EstimateRecord>& records) {
  std::string out =
      "family_id,phase_json,amplitude,R,m,osc_over_R2,hess_origin_norm,min_phase,min_hess_eig,converged,iterations,"
      "hypercritical,failure\n";
  for (const auto& r : records)
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.family_id, csv_quote(r.phase.dump()),
                       fmt17(r.amplitude), fmt17(r.R), r.m, fmt17(r.osc_over_R2), fmt17(r.hess_origin_norm),
                       fmt17(r.min_phase), fmt17(r.min_hess_eig), r.converged ? 1 : 0, r.iterations,
                       r.hypercritical ? 1 : 0, csv_quote(r.failure));
  return out;
}

/// gnuplot script for the sweep CSV: data columns plus the fitted envelope.
inline std::string sweep_gnuplot(const std::string& csv_name, const std::optional<EnvelopeFit>& fit) {
  std::string out;
  out += "# columns: 6 = osc_over_R2, 7 = hess_origin_norm, 10 = converged\n";
  out += "set datafile separator ','\n";
  out += "set key autotitle columnhead\n";
  out += "set logscale y\n";
  out += "set xlabel 'osc(u) / R^2'\n";
  out += "set ylabel '|D^2u(0)|'\n";
  std::string plot = fmt::format("plot '{}' using 6:($10 == 1 ? $7 : 1/0) with points title 'records'", csv_name);
  if (fit) {
    out += fmt::format("C1 = {}\nC2 = {}\np = {}\n", fmt17(fit->c1), fmt17(fit->c2), fit->exponent);
    plot += ", C1 * exp(C2 * x**p) title 'envelope'";
  }
  return out + plot + "\n";
}

inline SweepPlan sweep_plan_from_json(const nlohmann::json& j) {
  SweepPlan plan;
  plan.family_id = j.value("family_id", plan.family_id);
  plan.phase = phase_from_json(j.at("phase"));
  plan.base = matrix_from_json(j.at("base"));
  plan.amplitudes = j.at("amplitudes").get<std::vector<double>>();
  plan.radii = j.value("radii", plan.radii);
  plan.m = j.value("m", plan.m);
  plan.box_factor = j.value("box_factor", plan.box_factor);
  plan.continuation_steps = j.value("continuation_steps", plan.continuation_steps);
  if (j.contains("solver")) {
    plan.solve.tol_residual = j.at("solver").value("tol_residual", plan.solve.tol_residual);
    plan.solve.max_iter = j.at("solver").value("max_iter", plan.solve.max_iter);
  }
  plan.validate();
  return plan;
}

// ---------------------------------------------------------------------------
// The constant chain behind the Hessian estimate, evaluated on one field after
// scaling its ball B_R to B_{2n+2}.

struct ConstantChain {
  double scale = 1.0;        // k with v(x) = u(kx)/k^2
  double b0 = 0.0;           // log V at the origin
  double osc = 0.0;          // osc of v on B_{2n+2}
  double nu1 = 0.0;
  double c_tilde = 0.0;      // 1 + nu1 + nu1 osc
  double c_jacobi = 0.0;     // max Jacobi constant over B_{2n+1}
  double rho = 0.0;          // rho(2n+1)
  double volume = 0.0;       // int_{B_{2n+1}} V dx
  double volume_bound = 0.0; // 2^{n/2} |B_rho|
  double chain = 0.0;        // (1 + c_tilde^{n-1} (1 + C)^{1/2} + C) rho^{3n-2}
  double ratio = 0.0;        // b0 / chain
};

inline ConstantChain constant_chain(const PotentialField& u, const PhaseSpec& phase, double R, int audit_samples = 64) {
  const int n = u.spec.dim();
  const double outer = 2.0 * n + 2.0;
  ConstantChain c;
  c.scale = R / outer;
  const PotentialField v = rescale(u, c.scale);
  const PhaseSpec pv = rescale_phase(phase, c.scale);
  const BallRegion big = BallRegion::origin(n, outer);
  const BallRegion mid = BallRegion::origin(n, outer - 1.0);
  c.b0 = detail::log_volume_of(hessian_at(v, v.spec.center()));
  c.osc = ball_oscillation(v, big);
  c.nu1 = audit(pv, graph_box_of(v, big), audit_samples).nu1;
  c.c_tilde = 1.0 + c.nu1 + c.nu1 * c.osc;
  const double cell = std::pow(v.spec.spacing(), n);
  double max_grad = 0.0;
  for (const Node& node : nodes_in_ball(v.spec, mid, 1)) {
    const Vec x = v.spec.position(node);
    const Vec p = gradient_at(v, node);
    max_grad = std::max(max_grad, p.norm());
    c.c_jacobi = std::max(c.c_jacobi, jacobi_constant(pv, x, p, BallContext{c.osc}));
    c.volume += std::exp(detail::log_volume_of(hessian_at(v, node))) * cell;
  }
  c.rho = (outer - 1.0 + max_grad) * kSqrt2 / 2.0;
  c.volume_bound = std::pow(2.0, 0.5 * n) * std::pow(kPi, 0.5 * n) / std::tgamma(0.5 * n + 1.0) * std::pow(c.rho, n);
  c.chain = (1.0 + std::pow(c.c_tilde, n - 1) * std::sqrt(1.0 + c.c_jacobi) + c.c_jacobi) * std::pow(c.rho, 3 * n - 2);
  c.ratio = c.b0 / c.chain;
  return c;
}

inline nlohmann::json to_json(const ConstantChain& c) {
  return {{"scale", c.scale},   {"b0", c.b0},         {"osc", c.osc},       {"nu1", c.nu1},
          {"c_tilde", c.c_tilde}, {"c_jacobi", c.c_jacobi}, {"rho", c.rho},       {"volume", c.volume},
          {"volume_bound", c.volume_bound}, {"chain", c.chain}, {"ratio", c.ratio}};
}

}  // namespace lmcf
