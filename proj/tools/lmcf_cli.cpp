// lmcf: batch front end for solving and verifying Lagrangian soliton fields.
//
// Every subcommand writes its artifacts plus summary.json into --out and
// prints the summary on stdout. Exit status: 0 when every check passes, 1 on a
// failed check or a computational error, 2 on a configuration error.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <json.hpp>

#include "lmcf.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string out = "lmcf_out";
  unsigned jobs = lmcf::default_jobs();
  std::uint64_t seed = 1;
};

struct Summary {
  std::string command;
  json inputs = json::object();
  json metrics = json::object();
  int pass = 0;
  int fail = 0;
  std::vector<std::string> messages;

  void check(bool ok, const std::string& what) {
    if (ok) {
      ++pass;
    } else {
      ++fail;
      messages.push_back(what);
    }
  }
};

void require_file(const std::string& path, const char* flag) {
  if (path.empty()) throw ConfigError(fmt::format("{} is required", flag));
  if (!fs::is_regular_file(path)) throw ConfigError(fmt::format("{}: no such file '{}'", flag, path));
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// A problem file (its "phase" entry), a bare phase file, or inline JSON.
lmcf::PhaseSpec load_phase(const std::string& arg) {
  if (arg.empty()) throw ConfigError("--phase is required");
  json j;
  if (fs::is_regular_file(arg)) {
    j = read_json_file(arg);
  } else {
    try {
      j = json::parse(arg);
    } catch (const json::exception&) {
      throw ConfigError("--phase: '" + arg + "' is neither a file nor inline JSON");
    }
  }
  if (j.contains("phase")) j = j.at("phase");
  try {
    return lmcf::phase_from_json(j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("--phase: ") + e.what());
  }
}

lmcf::PotentialField load_field(const std::string& path) {
  require_file(path, "--field");
  return lmcf::read_field(path);
}

// Largest ball around the origin with one node of clearance, capped at `want`.
double fitting_radius(const lmcf::GridSpec& spec, double want) {
  return std::min(want, spec.half_width() - spec.spacing());
}

// ---------------------------------------------------------------------------

void cmd_residual(Summary& s, const Common& c, const std::string& field, const std::string& phase_arg, double tol) {
  const auto u = load_field(field);
  const auto phase = load_phase(phase_arg);
  s.inputs = {{"field", field}, {"phase", lmcf::phase_to_json(phase)}, {"tol_residual", tol}};
  const auto r = lmcf::residual(u, phase);
  const double worst = lmcf::max_abs(r);
  lmcf::write_text(fs::path(c.out) / "residual.csv", lmcf::field_csv(r));
  s.metrics = {{"max_abs_residual", worst}, {"nodes", u.spec.num_nodes()}};
  s.check(worst <= tol, fmt::format("max |residual| = {:.17g} exceeds {:.3g}", worst, tol));
}

void cmd_solve(Summary& s, const Common& c, const std::string& problem, std::optional<double> tol) {
  require_file(problem, "--problem");
  auto pf = lmcf::read_problem(problem);
  if (tol) pf.options.tol_residual = *tol;
  s.inputs = {{"problem", problem}, {"tol_residual", pf.options.tol_residual}};
  const fs::path out(c.out);
  try {
    const auto [u, report] = lmcf::solve(pf.problem, pf.options);
    lmcf::write_field(out / "solution.field", u);
    lmcf::write_text(out / "solution.csv", lmcf::field_csv(u));
    lmcf::write_text(out / "report.json", lmcf::to_json(report).dump(2) + "\n");
    s.metrics = lmcf::to_json(report);
    s.check(true, "");
  } catch (const lmcf::SolveFailure& e) {
    lmcf::write_field(out / "last_iterate.field", e.last_iterate());
    lmcf::write_text(out / "report.json", lmcf::to_json(e.report()).dump(2) + "\n");
    s.metrics = lmcf::to_json(e.report());
    s.check(false, e.what());
  }
}

void cmd_verify_jacobi(Summary& s, const Common& c, const std::string& field, const std::string& phase_arg,
                       std::optional<double> slack, double R, double r) {
  const auto u = load_field(field);
  const auto phase = load_phase(phase_arg);
  const int n = u.spec.dim();
  const double osc_radius = fitting_radius(u.spec, 2.0 * R);
  const double osc = lmcf::ball_oscillation(u, lmcf::BallRegion::origin(n, osc_radius));
  s.inputs = {{"field", field}, {"phase", lmcf::phase_to_json(phase)}, {"R", R}, {"r", r}};
  if (slack) s.inputs["slack_coefficient"] = *slack;

  lmcf::JacobiOptions jo;
  jo.slack_coefficient = slack;
  jo.ball_context = lmcf::BallContext{osc};
  jo.jobs = c.jobs;
  const auto pointwise = lmcf::verify_jacobi_pointwise(u, phase, lmcf::BallRegion::origin(n, R), jo);
  lmcf::write_text(fs::path(c.out) / "jacobi.csv", lmcf::jacobi_csv(pointwise));
  s.metrics["pointwise"] = lmcf::to_json(pointwise);
  s.metrics["osc"] = osc;
  s.metrics["osc_radius"] = osc_radius;
  s.check(pointwise.ok(), fmt::format("{} nodes have a Jacobi margin below -tau(h) = {:.6g} (min margin {:.17g})",
                                      pointwise.violations, -pointwise.slack_budget, pointwise.min_margin));

  const auto hc = lmcf::hypercritical_check(u, phase, lmcf::BallRegion::origin(n, R));
  s.metrics["hypercritical"] = {{"min_abs_theta", hc.min_abs_theta}, {"threshold", hc.threshold}, {"ok", hc.ok}};

  lmcf::IntegralJacobiOptions io;
  io.ball_context = lmcf::BallContext{osc};
  try {
    const auto integral = lmcf::verify_integral_jacobi(u, phase, r, io);
    s.metrics["integral"] = lmcf::to_json(integral);
    s.check(integral.ok, fmt::format("integral Jacobi: lhs {:.17g} exceeds bound {:.17g}", integral.lhs, integral.rhs));
  } catch (const lmcf::Error& e) {
    s.metrics["integral"] = {{"error", e.what()}};
    s.check(false, std::string("integral Jacobi: ") + e.what());
  }
}

void cmd_verify_prop31(Summary& s, const Common& c, const std::string& field, const std::string& phase_arg) {
  s.inputs = {{"seed", c.seed}};
  const auto suite = lmcf::prop31_suite(c.seed);
  lmcf::write_text(fs::path(c.out) / "prop31.csv", lmcf::prop31_csv(suite));
  s.metrics["suite"] = lmcf::to_json(suite);
  s.check(suite.failures == 0, fmt::format("{} polynomial cases miss the identity by more than {:.3g} (worst {:.17g})",
                                           suite.failures, suite.tol, suite.worst_gap));
  s.check(20 * suite.skipped < suite.cases.size(),
          fmt::format("{} of {} draws skipped for degenerate spectra", suite.skipped, suite.cases.size()));
  if (!field.empty()) {
    // finite-difference version at the centre node, reported only
    const auto u = load_field(field);
    const auto phase = load_phase(phase_arg);
    s.inputs["field"] = field;
    s.inputs["phase"] = lmcf::phase_to_json(phase);
    s.metrics["field_center"] = lmcf::to_json(lmcf::verify_prop31(u, phase, u.spec.center()));
  }
}

void cmd_rotate(Summary& s, const Common& c, const std::string& field, const std::string& phase_arg, double R) {
  const auto u = load_field(field);
  const int n = u.spec.dim();
  s.inputs = {{"field", field}, {"R", R}};
  const auto ball = lmcf::BallRegion::origin(n, R);
  const auto rg = lmcf::rotate(u, ball);
  double max_grad = 0.0;
  for (const auto& sm : rg.samples) max_grad = std::max(max_grad, sm.grad.norm());
  lmcf::write_text(fs::path(c.out) / "rotation.csv", lmcf::rotation_csv(rg));
  const auto bounds = lmcf::verify_rotation_bounds(rg, R, max_grad);
  s.metrics["bounds"] = lmcf::to_json(bounds);
  s.metrics["samples"] = rg.samples.size();
  s.check(bounds.ok(), bounds.ok() ? "" : bounds.failures.front());
  if (!phase_arg.empty()) {
    const auto phase = load_phase(phase_arg);
    s.inputs["phase"] = lmcf::phase_to_json(phase);
    const double osc = lmcf::ball_oscillation(u, ball);
    const auto au = lmcf::audit(phase, lmcf::graph_box_of(u, ball), 64, c.seed);
    const auto drift = lmcf::rotated_drift_bound(rg, phase, osc, au.nu1);
    s.metrics["drift"] = lmcf::to_json(drift);
    s.metrics["drift"]["nu1"] = au.nu1;
    s.metrics["drift"]["osc"] = osc;
    s.check(drift.ok, fmt::format("rotated drift coefficient {:.17g} exceeds sqrt2 nu1 (1 + osc) = {:.17g}",
                                  drift.max_coefficient, drift.bound));
  }
}

// "exp:a" is exp(a x_1), "volume" the volume density of the graph, anything
// else a field file on the same grid.
lmcf::PotentialField sobolev_f(const lmcf::PotentialField& u, const std::string& spec) {
  if (spec.rfind("exp:", 0) == 0) {
    double a = 0.0;
    try {
      a = std::stod(spec.substr(4));
    } catch (const std::exception&) {
      throw ConfigError("--f: bad exponent in '" + spec + "'");
    }
    return lmcf::sample(u.spec, [a](const lmcf::Vec& x) { return std::exp(a * x(0)); });
  }
  if (spec == "volume") {
    lmcf::PotentialField f = lmcf::log_volume_field(u);
    for (double& v : f.values) v = std::exp(v);
    return f;
  }
  return load_field(spec);
}

void cmd_verify_sobolev(Summary& s, const Common& c, const std::string& field, const std::string& f_spec, double r,
                        double R, double eps) {
  const auto u = load_field(field);
  const auto f = sobolev_f(u, f_spec);
  s.inputs = {{"field", field}, {"f", f_spec}, {"r", r}, {"R", R}, {"eps", eps}};
  const auto rep = lmcf::verify_sobolev(u, f, r, R, eps);
  lmcf::write_text(fs::path(c.out) / "implied_constants.csv", lmcf::implied_constants_csv({{field, rep}}));
  s.metrics = lmcf::to_json(rep);
  s.check(std::isfinite(rep.implied_constant), "implied Sobolev constant is not finite");
}

void cmd_verify_localmax(Summary& s, const Common& c, const std::string& field, const std::string& phase_arg,
                         double R, double ball_radius) {
  const auto u = load_field(field);
  const auto phase = load_phase(phase_arg);
  const int n = u.spec.dim();
  const auto ball = lmcf::BallRegion::origin(n, ball_radius);
  s.inputs = {{"field", field}, {"phase", lmcf::phase_to_json(phase)}, {"R", R}, {"ball", ball_radius}};
  const auto rg = lmcf::rotate(u, ball);
  const double osc = lmcf::ball_oscillation(u, ball);
  const auto au = lmcf::audit(phase, lmcf::graph_box_of(u, ball), 64, c.seed);
  const auto rep = lmcf::verify_local_max_jacobi(rg, phase, R, rg.xbar0, au.nu1, osc);
  lmcf::write_text(fs::path(c.out) / "implied_constants.csv", lmcf::implied_constants_csv({{field, rep}}));
  s.metrics = lmcf::to_json(rep);
  s.check(std::isfinite(rep.implied_constant), "implied local maximum constant is not finite");
}

void cmd_sweep(Summary& s, const Common& c, const std::string& plan_path) {
  require_file(plan_path, "--problem");
  lmcf::SweepPlan plan;
  try {
    plan = lmcf::sweep_plan_from_json(read_json_file(plan_path));
  } catch (const json::exception& e) {
    throw ConfigError(plan_path + ": " + e.what());
  }
  plan.jobs = c.jobs;
  const int n = static_cast<int>(plan.base.rows());
  s.inputs = {{"problem", plan_path}};
  const auto res = lmcf::run_sweep(plan);
  const fs::path out(c.out);
  lmcf::write_text(out / "sweep.csv", lmcf::sweep_csv(res.records));

  std::size_t converged = 0, nonconvex = 0;
  for (const auto& r : res.records) {
    if (r.converged) ++converged;
    if (r.converged && r.hypercritical && r.min_hess_eig < -1e-8) ++nonconvex;
  }
  s.metrics["records"] = res.records.size();
  s.metrics["converged"] = converged;
  s.metrics["monotonicity_flags"] = res.monotonicity_flags;
  s.check(nonconvex == 0, fmt::format("{} hypercritical records are not convex", nonconvex));

  std::vector<int> exponents{4 * n - 2};
  if (std::holds_alternative<lmcf::phases::Translator>(plan.phase.variant())) exponents.push_back(3 * n - 2);
  json fits = json::array();
  std::optional<lmcf::EnvelopeFit> first;
  for (int e : exponents) {
    try {
      const auto fit = lmcf::fit_bound(res.records, e);
      if (!first) first = fit;
      fits.push_back(lmcf::to_json(fit));
      s.check(fit.all_below, fmt::format("fitted envelope with exponent {} does not cover every record", e));
    } catch (const lmcf::Error& err) {
      fits.push_back({{"exponent", e}, {"error", err.what()}});
      s.check(false, err.what());
    }
  }
  s.metrics["fits"] = fits;
  lmcf::write_text(out / "fit.json", fits.dump(2) + "\n");
  lmcf::write_text(out / "sweep.gp", lmcf::sweep_gnuplot("sweep.csv", first));
}

void cmd_oracle(Summary& s, const Common& c, const std::string& name, bool check, double half_width, int m) {
  lmcf::OracleSolution o;
  try {
    o = lmcf::oracle_by_name(name);
  } catch (const lmcf::Error& e) {
    throw ConfigError(e.what());
  }
  s.inputs = {{"name", name}, {"half_width", half_width}, {"m", m}, {"check", check}};
  const lmcf::GridSpec spec(o.n, half_width, m);
  lmcf::write_text(fs::path(c.out) / "oracle.csv", lmcf::field_csv(o.sample(spec)));
  s.metrics["phase"] = lmcf::phase_to_json(o.phase);
  if (check) {
    const auto rep = lmcf::oracle_check(o, half_width, m);
    s.metrics["check"] = lmcf::to_json(rep);
    s.check(rep.ok, fmt::format("residual ratio {:.6g} (want [3.5, 4.5]) with fine residual {:.3g}", rep.ratio,
                                rep.residual_fine));
  }
}

int finish(const Summary& s, const Common& c) {
  json j = {{"command", s.command}, {"inputs", s.inputs}, {"metrics", s.metrics},
            {"pass", s.pass},       {"fail", s.fail},     {"ok", s.fail == 0}};
  if (!s.messages.empty()) j["failures"] = s.messages;
  const std::string text = j.dump(2) + "\n";
  lmcf::write_text(fs::path(c.out) / "summary.json", text);
  std::cout << text;
  for (const auto& m : s.messages) std::cerr << "FAIL: " << m << "\n";
  return s.fail == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lagrangian mean curvature flow soliton solver and verifier", "lmcf"};
  app.require_subcommand(1);
  Common common;
  std::string field, phase, problem, name, f_spec = "exp:4";
  std::optional<double> tol, slack;
  double tol_residual = 1e-8, R = 1.0, r = 0.5, eps = 0.05, ball = 1.0, half_width = 0.75;
  double sob_r = 0.8, sob_R = 1.0, lm_R = 0.25;
  int m = 97;
  bool check = false;

  auto common_flags = [&](CLI::App* sub) {
    sub->add_option("--out", common.out, "output directory")->capture_default_str();
    sub->add_option("--jobs", common.jobs, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--seed", common.seed, "seed for randomized suites")->capture_default_str();
  };

  auto* residual = app.add_subcommand("residual", "residual of a field against a phase");
  residual->add_option("--field", field)->required();
  residual->add_option("--phase", phase, "problem file, phase file or inline JSON")->required();
  residual->add_option("--tol-residual", tol_residual)->capture_default_str();

  auto* solve = app.add_subcommand("solve", "solve a Dirichlet problem");
  solve->add_option("--problem", problem)->required();
  solve->add_option("--tol-residual", tol);

  auto* jacobi = app.add_subcommand("verify-jacobi", "pointwise and integral Jacobi inequalities");
  jacobi->add_option("--field", field)->required();
  jacobi->add_option("--phase", phase)->required();
  jacobi->add_option("--slack-coefficient", slack, "K in tau(h) = K h^2 (estimated when omitted)");
  jacobi->add_option("--R", R, "radius of the pointwise ball")->capture_default_str();
  jacobi->add_option("--r", r, "inner radius of the integral inequality")->capture_default_str();

  auto* prop31 = app.add_subcommand("verify-prop31", "Laplacian identity for the log volume on random cubics");
  prop31->add_option("--field", field, "optional field checked at its centre node");
  prop31->add_option("--phase", phase);

  auto* rot = app.add_subcommand("rotate", "Lewy-Yuan rotation and its bounds");
  rot->add_option("--field", field)->required();
  rot->add_option("--phase", phase, "adds the rotated drift check");
  rot->add_option("--R", R)->capture_default_str();

  auto* sob = app.add_subcommand("verify-sobolev", "implied constant of the graph Sobolev inequality");
  sob->add_option("--field", field)->required();
  sob->add_option("--f", f_spec, "exp:<a>, volume, or a field file")->capture_default_str();
  sob->add_option("--r", sob_r)->capture_default_str();
  sob->add_option("--R", sob_R)->capture_default_str();
  sob->add_option("--eps", eps)->capture_default_str();

  auto* lmax = app.add_subcommand("verify-localmax", "implied constant of the local maximum principle");
  lmax->add_option("--field", field)->required();
  lmax->add_option("--phase", phase)->required();
  lmax->add_option("--R", lm_R)->capture_default_str();
  lmax->add_option("--ball", ball, "radius of the rotated source ball")->capture_default_str();

  auto* sweep = app.add_subcommand("sweep", "Hessian-estimate parameter sweep");
  sweep->add_option("--problem", problem, "sweep plan JSON")->required();

  auto* oracle = app.add_subcommand("oracle", "sample a closed-form solution");
  oracle->add_option("--name", name)->required();
  oracle->add_flag("--check", check, "second-order residual check");
  oracle->add_option("--half-width", half_width)->capture_default_str();
  oracle->add_option("--m", m)->capture_default_str();

  for (auto* sub : app.get_subcommands([](const CLI::App*) { return true; })) common_flags(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  Summary s;
  try {
    std::error_code ec;
    fs::create_directories(common.out, ec);
    if (ec || !fs::is_directory(common.out)) throw ConfigError("cannot create output directory " + common.out);
    if (*residual) {
      s.command = "residual";
      cmd_residual(s, common, field, phase, tol_residual);
    } else if (*solve) {
      s.command = "solve";
      cmd_solve(s, common, problem, tol);
    } else if (*jacobi) {
      s.command = "verify-jacobi";
      cmd_verify_jacobi(s, common, field, phase, slack, R, r);
    } else if (*prop31) {
      s.command = "verify-prop31";
      cmd_verify_prop31(s, common, field, phase);
    } else if (*rot) {
      s.command = "rotate";
      cmd_rotate(s, common, field, phase, R);
    } else if (*sob) {
      s.command = "verify-sobolev";
      cmd_verify_sobolev(s, common, field, f_spec, sob_r, sob_R, eps);
    } else if (*lmax) {
      s.command = "verify-localmax";
      cmd_verify_localmax(s, common, field, phase, lm_R, ball);
    } else if (*sweep) {
      s.command = "sweep";
      cmd_sweep(s, common, problem);
    } else if (*oracle) {
      s.command = "oracle";
      cmd_oracle(s, common, name, check, half_width, m);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const lmcf::Error& e) {
    const bool config = e.kind() == lmcf::ErrorKind::InvalidArgument || e.kind() == lmcf::ErrorKind::Io;
    std::cerr << (config ? "config error: " : "error: ") << e.what() << "\n";
    return config ? 2 : 1;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  return finish(s, common);
}
