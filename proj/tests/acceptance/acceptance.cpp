// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when
// all of them pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <json.hpp>

#include "lmcf.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace lmcf;

namespace {

struct Outcome {
  bool ok = true;
  std::vector<std::string> notes;
  std::vector<std::string> failures;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      failures.push_back(what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

struct Field {
  std::string label;
  PotentialField u;
  PhaseSpec phase;
};

struct Context {
  fs::path problems;
  fs::path cli;
  fs::path pins;
  fs::path work;
  std::vector<Field> fields;  // shrinker_n2, rotator_n1, translator_n2
};

const Field& field(const Context& ctx, const std::string& label) {
  for (const auto& f : ctx.fields)
    if (f.label == label) return f;
  throw Error(ErrorKind::InvalidArgument, "no acceptance field " + label);
}

double max_grad_of(const RotatedGraph& rg) {
  double g = 0.0;
  for (const auto& s : rg.samples) g = std::max(g, s.grad.norm());
  return g;
}

// ---------------------------------------------------------------------------

Outcome oracle_residuals(Context&) {
  Outcome o;
  for (const auto& oracle : {grim_reaper(), circle_shrinker()}) {
    const auto c = oracle_check(oracle, 0.75, 97);
    o.note(fmt::format("{} ratio {:.3f} residual(h=1/128) {:.2e}", oracle.name, c.ratio, c.residual_fine));
    o.expect(c.h_fine == 1.0 / 128, oracle.name + ": fine spacing is not 1/128");
    o.expect(c.ratio >= 3.5 && c.ratio <= 4.5, fmt::format("{}: ratio {:.4f} outside [3.5, 4.5]", oracle.name, c.ratio));
    o.expect(c.residual_fine < 1e-3, fmt::format("{}: residual {:.3e} not below 1e-3", oracle.name, c.residual_fine));
  }
  return o;
}

Outcome prop31_identity(Context&) {
  Outcome o;
  const auto suite = prop31_suite(20261016, 100, 1e-9);
  o.note(fmt::format("{} cases, {} skipped, worst gap {:.2e}", suite.cases.size(), suite.skipped, suite.worst_gap));
  o.expect(suite.cases.size() == 1200, "expected 100 draws for each n in {1,2,3} and each of four phases");
  o.expect(suite.failures == 0, fmt::format("{} cases exceed 1e-9", suite.failures));
  o.expect(20 * suite.skipped < suite.cases.size(), fmt::format("{} degenerate draws skipped (>= 5%)", suite.skipped));
  return o;
}

Outcome pointwise_jacobi(Context& ctx) {
  Outcome o;
  auto margin = [](double x) { return std::cos(x) * std::cos(x) - 0.5 * std::sin(x) * std::sin(x) + 0.5; };
  const auto gr = grim_reaper();
  const GridSpec spec(1, 1.4, 513);
  double analytic_min = 1e300, worst_dev = 0.0;
  spec.for_each_node([&](const Node& node) {
    const double x = spec.position(node)(0);
    if (x >= 0.0) analytic_min = std::min(analytic_min, margin(x));
  });
  const auto s = verify_jacobi_pointwise(gr.sample(spec), gr.phase, BallRegion::origin(1, 1.4));
  for (const auto& r : s.points) worst_dev = std::max(worst_dev, std::abs(r.margin - margin(r.x(0))));
  o.note(fmt::format("grim reaper: analytic min margin {:.3f}, FD deviation {:.2e} <= tau {:.2e}", analytic_min,
                     worst_dev, s.slack_budget));
  o.expect(analytic_min >= 0.0, "analytic grim reaper margin is negative");
  o.expect(worst_dev <= s.slack_budget, "finite-difference margin deviates from the closed form beyond tau(h)");
  o.expect(s.violations == 0 && !s.points.empty(), "grim reaper has margin violations");
  for (const char* label : {"shrinker_n2", "rotator_n1"}) {
    const auto& f = field(ctx, label);
    const int n = f.u.spec.dim();
    JacobiOptions jo;
    jo.ball_context = BallContext{ball_oscillation(f.u, BallRegion::origin(n, 1.0))};
    const auto js = verify_jacobi_pointwise(f.u, f.phase, BallRegion::origin(n, 1.0), jo);
    o.note(fmt::format("{}: {} nodes, {} violations", label, js.points.size(), js.violations));
    o.expect(js.violations == 0 && js.skipped_nonconvex == 0 && !js.points.empty(),
             fmt::format("{}: {} violations, {} non-convex nodes", label, js.violations, js.skipped_nonconvex));
  }
  return o;
}

Outcome integral_jacobi(Context& ctx) {
  Outcome o;
  for (const auto& f : ctx.fields) {
    const int n = f.u.spec.dim();
    IntegralJacobiOptions io;
    io.ball_context = BallContext{ball_oscillation(f.u, BallRegion::origin(n, 1.0))};
    const auto r = verify_integral_jacobi(f.u, f.phase, 0.5, io);
    o.note(fmt::format("{} headroom {:.3g}", f.label, r.headroom));
    o.expect(r.ok, fmt::format("{}: lhs {:.6g} exceeds {:.6g}", f.label, r.lhs, r.rhs));
    o.expect(r.headroom >= 10.0, fmt::format("{}: headroom {:.3g} below 10", f.label, r.headroom));
  }
  return o;
}

Outcome rotation(Context& ctx) {
  Outcome o;
  std::mt19937_64 rng(11);
  double cayley = 0.0;
  for (int n = 1; n <= 3; ++n) {
    for (int k = 0; k < 40; ++k) {
      const Polynomial p = random_cubic(n, rng, 0.15);
      const Vec x = Vec::Random(n) * 0.3;
      const auto rg = rotate(AnalyticPotential::from(p), {x}, {false}, BallRegion::origin(n, 1.0));
      cayley = std::max(cayley, verify_rotation_bounds(rg, 1.0, max_grad_of(rg)).max_cayley_error);
    }
  }
  o.note(fmt::format("Cayley error {:.1e}", cayley));
  o.expect(cayley <= 1e-12, fmt::format("Cayley law error {:.3e} above 1e-12", cayley));

  std::vector<Field> cases{{"half_squared_norm", sample(GridSpec(2, 1.25, 65), [](const Vec& x) { return 0.5 * x.squaredNorm(); }),
                            PhaseSpec::constant(kPi / 2)}};
  for (const auto& f : ctx.fields) cases.push_back(f);
  for (const auto& f : cases) {
    const int n = f.u.spec.dim();
    const auto rg = rotate(f.u, BallRegion::origin(n, 1.0));
    const auto b = verify_rotation_bounds(rg, 1.0, max_grad_of(rg));
    o.note(fmt::format("{}: inradius {:.4f} >= {:.4f}", f.label, b.inradius, b.inradius_bound - 2.0 * rg.spacing));
    o.expect(b.ok(), f.label + ": " + (b.ok() ? std::string() : b.failures.front()));
  }
  return o;
}

Outcome solver(Context&) {
  Outcome o;
  Mat a(2, 2);
  a << 3.0, 0.5, 0.5, 2.0;
  const GridSpec spec(2, 1.0, 33);
  const auto problem = DirichletProblem::from_function(spec, PhaseSpec::constant(lagrangian_angle(a)),
                                                       [&](const Vec& x) { return 0.5 * x.dot(a * x); });
  const auto [u, report] = solve(problem);
  double err = 0.0;
  spec.for_each_node([&](const Node& node) {
    const Vec x = spec.position(node);
    err = std::max(err, std::abs(u.at(node) - 0.5 * x.dot(a * x)));
  });
  o.note(fmt::format("quadratic: {} iterations, error {:.1e}", report.iterations, err));
  o.expect(report.converged && report.iterations <= 3, fmt::format("quadratic took {} iterations", report.iterations));
  o.expect(err <= 1e-12, fmt::format("quadratic error {:.3e}", err));

  // directional derivative of the residual against the assembled Jacobian
  double worst = 0.0;
  for (int n = 1; n <= 3; ++n) {
    const GridSpec g(n, 1.0, n == 3 ? 9 : 17);
    const auto v = sample(g, [](const Vec& x) { return 0.5 * x.squaredNorm() + 0.2 * std::sin(x.sum()) + 0.1 * std::pow(x(0), 3); });
    auto w = sample(g, [](const Vec& x) { return 1.0 + 0.3 * x(0) - 0.1 * x.squaredNorm(); });
    g.for_each_node([&](const Node& node) {
      if (g.depth(node) == 0) w.at(node) = 0.0;
    });
    const detail::InteriorIndex idx(g);
    Vec wv(static_cast<Eigen::Index>(idx.nodes.size()));
    for (std::size_t k = 0; k < idx.nodes.size(); ++k) wv(static_cast<Eigen::Index>(k)) = w.at(idx.nodes[k]);
    for (const PhaseSpec& ph : {PhaseSpec::shrinker(0.4, 1.0), PhaseSpec::rotator(0.2, 0.7),
                                PhaseSpec::translator(0.1, Vec::LinSpaced(n, 0.3, 0.5), Vec::LinSpaced(n, -0.2, 0.6))}) {
      const Vec lw = linearize(v, ph) * wv;
      const double eps = 1e-5;
      PotentialField up = v, um = v;
      for (std::size_t k = 0; k < up.values.size(); ++k) {
        up.values[k] += eps * w.values[k];
        um.values[k] -= eps * w.values[k];
      }
      const auto rp = residual(up, ph), rm = residual(um, ph);
      Vec fd(lw.size());
      for (std::size_t k = 0; k < idx.nodes.size(); ++k)
        fd(static_cast<Eigen::Index>(k)) = (rp.at(idx.nodes[k]) - rm.at(idx.nodes[k])) / (2.0 * eps);
      worst = std::max(worst, (fd - lw).norm() / lw.norm());
    }
  }
  o.note(fmt::format("linearization relative error {:.1e}", worst));
  o.expect(worst < 1e-5, fmt::format("linearization check error {:.3e}", worst));

  const auto cs = circle_shrinker();
  std::vector<double> errors;
  for (int m : {33, 65, 129}) {
    const GridSpec g(1, 0.5, m);
    const auto [v, rep] = solve(DirichletProblem{g, cs.phase, cs.sample(g), std::nullopt});
    double e = 0.0;
    g.for_each_node([&](const Node& node) { e = std::max(e, std::abs(v.at(node) - cs.u(g.position(node)(0)))); });
    errors.push_back(e);
  }
  const double r1 = errors[0] / errors[1], r2 = errors[1] / errors[2];
  o.note(fmt::format("1-D shrinker error ratios {:.3f} {:.3f}", r1, r2));
  o.expect(r1 >= 3.5 && r1 <= 4.5 && r2 >= 3.5 && r2 <= 4.5, "1-D shrinker is not second order");
  return o;
}

Outcome drift(Context& ctx) {
  Outcome o;
  for (const auto& f : ctx.fields) {
    const int n = f.u.spec.dim();
    const BallRegion ball = BallRegion::origin(n, 1.0);
    const auto rg = rotate(f.u, ball);
    const double osc = ball_oscillation(f.u, ball);
    const double nu1 = audit(f.phase, graph_box_of(f.u, ball), 64).nu1;
    const auto d = rotated_drift_bound(rg, f.phase, osc, nu1);
    o.note(fmt::format("{} {:.3g} <= {:.3g}", f.label, d.max_coefficient, d.bound));
    o.expect(d.ok, fmt::format("{}: drift {:.6g} above {:.6g}", f.label, d.max_coefficient, d.bound));
  }
  return o;
}

Outcome implied_constants(Context& ctx) {
  Outcome o;
  json current = json::object();
  auto sobolev_f = [](const Vec& x) { return std::exp(4.0 * x(0)); };
  for (const auto& f : ctx.fields) {
    const int n = f.u.spec.dim();
    const BallRegion ball = BallRegion::origin(n, 1.0);
    const auto sob = verify_sobolev(f.u, sobolev_f, 0.8, 1.0, 0.05);
    const auto rg = rotate(f.u, ball);
    const double nu1 = audit(f.phase, graph_box_of(f.u, ball), 64).nu1;
    const auto lm = verify_local_max_jacobi(rg, f.phase, 0.25, rg.xbar0, nu1, ball_oscillation(f.u, ball));
    o.expect(std::isfinite(sob.implied_constant), f.label + ": Sobolev constant not finite");
    o.expect(std::isfinite(lm.implied_constant), f.label + ": local maximum constant not finite");
    current[f.label] = {{"sobolev", sob.implied_constant}, {"local_max", lm.implied_constant}};
  }

  // scaling v(x) = u(kx)/k^2 on the quadratic family
  Mat a(2, 2);
  a << 1.0, 0.2, 0.2, 2.0;
  auto quad = [&](const Vec& x) { return 0.5 * x.dot(a * x) + 0.05 * std::pow(x(0), 3); };
  auto sob_at = [&](double k) {
    const auto v = sample(GridSpec(2, 1.2 / k, 49), [&](const Vec& x) { return quad(k * x) / (k * k); });
    return verify_sobolev(v, [&](const Vec& x) { return std::exp(4.0 * k * x(0)); }, 0.8 / k, 1.0 / k, 0.05 / k)
        .implied_constant;
  };
  auto lm_at = [&](double k) {
    const GridSpec g(2, 1.2 / k, 49);
    const auto v = sample(g, [&](const Vec& x) { return 0.5 * (k * x).dot(a * (k * x)) / (k * k); });
    const auto rg = rotate(v, BallRegion::origin(2, 1.2 / k - g.spacing()));
    return verify_local_max_jacobi(rg, PhaseSpec::constant(lagrangian_angle(a)), 0.3, Vec::Zero(2), 0.0, 0.0)
        .implied_constant;
  };
  const double s1 = sob_at(1.0), l1 = lm_at(1.0);
  for (double k : {0.5, 2.0}) {
    const double rs = sob_at(k) / s1, rl = lm_at(k) / l1;
    o.note(fmt::format("k={}: ratios {:.4f} {:.4f}", k, rs, rl));
    o.expect(std::abs(rs - 1.0) <= 0.1, fmt::format("Sobolev constant moves by {:.3f} at k = {}", rs, k));
    o.expect(std::abs(rl - 1.0) <= 0.1, fmt::format("local maximum constant moves by {:.3f} at k = {}", rl, k));
  }
  current["quadratic_family"] = {{"sobolev", s1}, {"local_max", l1}};

  if (!fs::exists(ctx.pins)) {
    std::ofstream(ctx.pins) << current.dump(2) << "\n";
    o.note("pinned values written to " + ctx.pins.filename().string());
    return o;
  }
  std::ifstream in(ctx.pins);
  const json pinned = json::parse(in);
  int compared = 0;
  for (const auto& [label, entry] : pinned.items()) {
    for (const auto& [kind, value] : entry.items()) {
      if (!current.contains(label) || !current[label].contains(kind)) {
        o.expect(false, "pinned value " + label + "/" + kind + " was not recomputed");
        continue;
      }
      const double now = current[label][kind].get<double>(), then = value.get<double>();
      const double rel = std::abs(now - then) / std::max(std::abs(then), 1e-300);
      o.expect(rel <= 1e-6, fmt::format("{}/{}: {:.17g} differs from pinned {:.17g}", label, kind, now, then));
      ++compared;
    }
  }
  o.note(fmt::format("{} pinned values match", compared));
  return o;
}

Outcome sweep(Context& ctx) {
  Outcome o;
  auto load = [&](const char* name) {
    std::ifstream in(ctx.problems / name);
    return sweep_plan_from_json(json::parse(in));
  };
  auto check_records = [&](const SweepResult& r, const std::string& label) {
    std::size_t converged = 0;
    for (const auto& rec : r.records) {
      if (rec.converged) ++converged;
      if (rec.converged && rec.hypercritical)
        o.expect(rec.min_hess_eig >= -1e-8, fmt::format("{}: amplitude {} not convex", label, rec.amplitude));
    }
    o.expect(converged == r.records.size(),
             fmt::format("{}: {} of {} records converged", label, converged, r.records.size()));
  };
  SweepPlan plan = load("sweep_shrinker_n2.json");
  plan.jobs = default_jobs();
  o.expect(plan.amplitudes.size() == 8 && plan.m == 65, "shrinker plan is not the 8-amplitude m = 65 family");
  const auto coarse = run_sweep(plan);
  check_records(coarse, "shrinker m=65");
  plan.m = 129;
  const auto fine = run_sweep(plan);
  check_records(fine, "shrinker m=129");
  const auto fc = fit_bound(coarse.records, 6), ff = fit_bound(fine.records, 6);
  const double dc1 = std::abs(ff.c1 / fc.c1 - 1.0), dc2 = std::abs(ff.c2 / fc.c2 - 1.0);
  o.note(fmt::format("shrinker C1 {:.5g} -> {:.5g}, C2 {:.5g} -> {:.5g}", fc.c1, ff.c1, fc.c2, ff.c2));
  o.expect(fc.all_below && ff.all_below, "shrinker envelope does not cover its records");
  o.expect(dc1 <= 0.05 && dc2 <= 0.05, fmt::format("envelope moves by {:.3f} / {:.3f} under refinement", dc1, dc2));

  SweepPlan tplan = load("sweep_translator_n2.json");
  tplan.jobs = default_jobs();
  const auto tr = run_sweep(tplan);
  check_records(tr, "translator");
  const auto tf = fit_bound(tr.records, 4);
  o.note(fmt::format("translator exponent 4: C1 {:.5g}, C2 {:.5g}", tf.c1, tf.c2));
  o.expect(tf.all_below, "translator envelope does not cover its records");
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Outcome determinism(Context& ctx) {
  Outcome o;
  // library level: the seeded suite and a sweep serialize identically
  o.expect(prop31_csv(prop31_suite(3)) == prop31_csv(prop31_suite(3)), "seeded suite CSV differs between runs");

  if (ctx.cli.empty() || !fs::exists(ctx.cli)) {
    o.expect(false, "CLI executable not available");
    return o;
  }
  const std::vector<std::pair<std::string, std::string>> commands{
      {"solve", "solve --problem " + (ctx.problems / "shrinker_n2.json").string()},
      {"prop31", "verify-prop31 --seed 42"},
      {"sweep", "sweep --problem " + (ctx.problems / "sweep_small_n2.json").string()},
      {"oracle", "oracle --name circle-shrinker --check"}};
  int files = 0;
  for (const auto& [tag, args] : commands) {
    std::vector<fs::path> dirs;
    for (const char* round : {"a", "b"}) {
      const fs::path dir = ctx.work / (tag + "_" + round);
      fs::remove_all(dir);
      const std::string cmd = fmt::format("\"{}\" {} --out \"{}\" > /dev/null 2>&1", ctx.cli.string(), args, dir.string());
      o.expect(std::system(cmd.c_str()) == 0, tag + " run failed");
      dirs.push_back(dir);
    }
    for (const auto& entry : fs::directory_iterator(dirs[0])) {
      const fs::path other = dirs[1] / entry.path().filename();
      o.expect(fs::exists(other) && slurp(entry.path()) == slurp(other),
               tag + ": " + entry.path().filename().string() + " differs");
      ++files;
    }
  }
  o.note(fmt::format("{} artifacts compared", files));
  return o;
}

void load_fields(Context& ctx) {
  for (const char* label : {"shrinker_n2", "rotator_n1", "translator_n2"}) {
    const auto pf = read_problem(ctx.problems / (std::string(label) + ".json"));
    ctx.fields.push_back({label, solve(pf.problem, pf.options).first, pf.problem.phase});
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  Context ctx;
  std::string problems = "tools/problems", cli, pins = "pinned_constants.json", work = "acceptance_work";
  app.add_option("--problems", problems, "directory of problem files");
  app.add_option("--cli", cli, "path of the lmcf executable");
  app.add_option("--pins", pins, "pinned implied constants");
  app.add_option("--work", work, "scratch directory");
  CLI11_PARSE(app, argc, argv);
  ctx.problems = problems;
  ctx.cli = cli;
  ctx.pins = pins;
  ctx.work = work;
  fs::create_directories(ctx.work);

  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome(Context&)> run;
  };
  const std::vector<Criterion> criteria{
      {1, "oracle residuals are second order", 1, oracle_residuals},
      {2, "log-volume Laplacian identity on random cubics", 30, prop31_identity},
      {3, "pointwise Jacobi inequality", 60, pointwise_jacobi},
      {4, "integral Jacobi inequality", 60, integral_jacobi},
      {5, "rotation bounds", 10, rotation},
      {6, "solver", 60, solver},
      {7, "rotated drift bound", 10, drift},
      {8, "Sobolev and local maximum implied constants", 120, implied_constants},
      {9, "Hessian estimate sweep", 600, sweep},
      {10, "CLI determinism", 120, determinism},
  };

  const auto t0 = std::chrono::steady_clock::now();
  try {
    load_fields(ctx);
  } catch (const std::exception& e) {
    std::printf("FAIL  setup: %s\n", e.what());
    return 1;
  }
  std::printf("setup: solved %zu acceptance fields in %.1f s\n", ctx.fields.size(),
              std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());

  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run(ctx);
    } catch (const std::exception& e) {
      out.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.expect(secs <= c.budget_s, fmt::format("took {:.1f} s, budget {:.0f} s", secs, c.budget_s));
    if (!out.ok) ++failed;
    std::string detail;
    for (const auto& n : out.notes) detail += (detail.empty() ? "" : "; ") + n;
    std::printf("%s  %2d %s (%.1f s): %s\n", out.ok ? "PASS" : "FAIL", c.id, c.name, secs, detail.c_str());
    for (const auto& f : out.failures) std::printf("        - %s\n", f.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
