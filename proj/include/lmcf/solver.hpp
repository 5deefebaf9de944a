#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <vector>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <json.hpp>

#include "lmcf/field_io.hpp"
#include "lmcf/geometry.hpp"
#include "lmcf/grid.hpp"
#include "lmcf/log.hpp"
#include "lmcf/oracle1d.hpp"
#include "lmcf/phase.hpp"

namespace lmcf {

using SparseMat = Eigen::SparseMatrix<double>;

struct DirichletProblem {
  GridSpec spec;
  PhaseSpec phase;
  PotentialField boundary;  // only boundary nodes are read
  std::optional<PotentialField> initial_guess;

  static DirichletProblem from_function(const GridSpec& spec, const PhaseSpec& phase,
                                        const std::function<double(const Vec&)>& boundary) {
    return DirichletProblem{spec, phase, sample(spec, boundary), std::nullopt};
  }

  void validate() const {
    if (!(boundary.spec == spec)) throw Error(ErrorKind::InvalidArgument, "boundary data must live on the problem grid");
    if (initial_guess && !(initial_guess->spec == spec))
      throw Error(ErrorKind::InvalidArgument, "initial guess must live on the problem grid");
  }
};

struct SolveOptions {
  double tol_residual = 1e-10;
  int max_iter = 50;
  int max_halvings = 10;
};

struct SolveReport {
  int iterations = 0;
  std::vector<double> residual_history;  // entry 0 is the initial guess
  std::vector<double> damping_history;
  std::vector<double> min_eig_history;
  std::vector<double> min_phase_history;
  double final_min_hessian_eigenvalue = 0.0;
  double final_min_abs_phase = 0.0;
  bool converged = false;
  std::string failure;
};

/// A failed solve: the kind says why, the report and last iterate say where.
class SolveFailure : public Error {
 public:
  SolveFailure(ErrorKind kind, const std::string& what, SolveReport report, PotentialField last)
      : Error(kind, what), report_(std::move(report)), last_(std::move(last)) {}
  const SolveReport& report() const { return report_; }
  const PotentialField& last_iterate() const { return last_; }

 private:
  SolveReport report_;
  PotentialField last_;
};

namespace detail {

/// Interior nodes (one node of clearance) numbered in linear order.
struct InteriorIndex {
  std::vector<Node> nodes;
  std::vector<long> index;  // linear node -> unknown, -1 on the boundary

  explicit InteriorIndex(const GridSpec& spec) : index(spec.num_nodes(), -1) {
    spec.for_each_node([&](const Node& node) {
      if (spec.depth(node) < 1) return;
      index[spec.linear(node)] = static_cast<long>(nodes.size());
      nodes.push_back(node);
    });
  }
};

inline void apply_boundary(PotentialField& u, const PotentialField& boundary) {
  u.spec.for_each_node([&](const Node& node) {
    if (u.spec.depth(node) == 0) u.at(node) = boundary.at(node);
  });
}

}  // namespace detail

/// sum arctan lambda_i(D^2u) - Theta(x, u, Du) on interior nodes; 0 on the
/// boundary.
inline PotentialField residual(const PotentialField& field, const PhaseSpec& phase) {
  PotentialField r(field.spec);
  field.spec.for_each_node([&](const Node& node) {
    if (field.spec.depth(node) < 1) return;
    const Vec x = field.spec.position(node);
    const Mat hess = hessian_at(field, node);
    double angle = 0.0;
    const SymEigen e = sym_eigen(hess);
    for (int i = 0; i < e.values.size(); ++i) angle += std::atan(e.values(i));
    r.at(node) = angle - phase.eval(x, field.at(node), gradient_at(field, node));
  });
  r.metadata["quantity"] = "residual";
  return r;
}

inline double max_abs(const PotentialField& f) {
  double m = 0.0;
  for (double v : f.values) m = std::max(m, std::abs(v));
  return m;
}

/// Jacobian of `residual` at `field` on the interior unknowns (homogeneous
/// Dirichlet data): v -> tr(g^-1 D^2v) - Theta_z v - Theta_p . Dv with the same
/// stencils as the residual.
inline SparseMat linearize(const PotentialField& field, const PhaseSpec& phase) {
  const GridSpec& spec = field.spec;
  const detail::InteriorIndex idx(spec);
  const int n = spec.dim();
  const double h = spec.spacing(), h2 = h * h;
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(idx.nodes.size() * static_cast<std::size_t>(1 + 2 * n + 2 * n * (n - 1)));
  for (std::size_t row = 0; row < idx.nodes.size(); ++row) {
    const Node& node = idx.nodes[row];
    const Vec x = spec.position(node);
    const Vec grad = gradient_at(field, node);
    const Mat hess = hessian_at(field, node);
    const Mat ginv = (Mat::Identity(n, n) + hess * hess).inverse();
    const PhasePartials d = phase.partials(x, field.at(node), grad);
    auto add = [&](const Node& at, double w) {
      const long col = idx.index[spec.linear(at)];
      if (col >= 0 && w != 0.0) triplets.emplace_back(static_cast<int>(row), static_cast<int>(col), w);
    };
    double center = -d.z;
    for (int a = 0; a < n; ++a) {
      center -= 2.0 * ginv(a, a) / h2;
      add(detail::shifted(node, a, 1), ginv(a, a) / h2 - d.p(a) / (2.0 * h));
      add(detail::shifted(node, a, -1), ginv(a, a) / h2 + d.p(a) / (2.0 * h));
      for (int b = a + 1; b < n; ++b) {
        const double w = 2.0 * ginv(a, b) / (4.0 * h2);
        add(detail::shifted(node, a, 1, b, 1), w);
        add(detail::shifted(node, a, 1, b, -1), -w);
        add(detail::shifted(node, a, -1, b, 1), -w);
        add(detail::shifted(node, a, -1, b, -1), w);
      }
    }
    add(node, center);
  }
  SparseMat a(static_cast<int>(idx.nodes.size()), static_cast<int>(idx.nodes.size()));
  a.setFromTriplets(triplets.begin(), triplets.end());
  return a;
}

/// Direct sparse LU for n <= 2, BiCGSTAB with a diagonal preconditioner for n = 3.
inline Vec solve_linear(const SparseMat& a, const Vec& rhs, int n) {
  if (n <= 2) {
    Eigen::SparseLU<SparseMat, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success) throw Error(ErrorKind::SingularLinearSystem, "sparse LU factorization failed");
    Vec x = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !x.allFinite())
      throw Error(ErrorKind::SingularLinearSystem, "sparse LU solve failed");
    return x;
  }
  Eigen::BiCGSTAB<SparseMat, Eigen::DiagonalPreconditioner<double>> it;
  it.setTolerance(1e-13);
  it.setMaxIterations(20000);
  it.compute(a);
  Vec x = it.solve(rhs);
  if (!x.allFinite() || (it.info() != Eigen::Success && it.error() > 1e-8))
    throw Error(ErrorKind::SingularLinearSystem, "BiCGSTAB did not converge");
  return x;
}

/// Solution of Delta u = rhs with the boundary data of `boundary`.
inline PotentialField poisson(const PotentialField& boundary, double rhs) {
  const GridSpec& spec = boundary.spec;
  PotentialField u(spec);
  detail::apply_boundary(u, boundary);
  // the residual's linearization at a flat field with constant phase is the
  // five-point (seven-point) Laplacian
  const SparseMat lap = linearize(PotentialField(spec), PhaseSpec::constant(0.0));
  const detail::InteriorIndex idx(spec);
  const double h2 = spec.spacing() * spec.spacing();
  Vec b(static_cast<int>(idx.nodes.size()));
  for (std::size_t k = 0; k < idx.nodes.size(); ++k) {
    const Node& node = idx.nodes[k];
    double known = 0.0;  // boundary neighbours, interior entries are still 0
    for (int a = 0; a < spec.dim(); ++a) known += u.at(detail::shifted(node, a, 1)) + u.at(detail::shifted(node, a, -1));
    b(static_cast<int>(k)) = rhs - known / h2;
  }
  const Vec v = solve_linear(lap, b, spec.dim());
  for (std::size_t k = 0; k < idx.nodes.size(); ++k) u.at(idx.nodes[k]) = v(static_cast<int>(k));
  return u;
}

struct InteriorMonitors {
  double min_hessian_eigenvalue = 0.0;
  double min_abs_phase = 0.0;
};

inline InteriorMonitors interior_monitors(const PotentialField& u, const PhaseSpec& phase) {
  InteriorMonitors m{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  u.spec.for_each_node([&](const Node& node) {
    if (u.spec.depth(node) < 1) return;
    m.min_hessian_eigenvalue = std::min(m.min_hessian_eigenvalue, min_eigenvalue(hessian_at(u, node)));
    m.min_abs_phase =
        std::min(m.min_abs_phase, std::abs(phase.eval(u.spec.position(node), u.at(node), gradient_at(u, node))));
  });
  return m;
}

namespace detail {

// Laplacian of the least-squares quadratic through the boundary values.
inline std::optional<double> boundary_quadratic_trace(const PotentialField& boundary) {
  const GridSpec& spec = boundary.spec;
  const int n = spec.dim();
  if (n < 2) return std::nullopt;
  const int cols = 1 + n + n * (n + 1) / 2;
  std::vector<Vec> rows;
  std::vector<double> values;
  spec.for_each_node([&](const Node& node) {
    if (spec.depth(node) != 0) return;
    const Vec x = spec.position(node);
    Vec r(cols);
    int c = 0;
    r(c++) = 1.0;
    for (int a = 0; a < n; ++a) r(c++) = x(a);
    for (int a = 0; a < n; ++a)
      for (int b = a; b < n; ++b) r(c++) = a == b ? 0.5 * x(a) * x(a) : x(a) * x(b);
    rows.push_back(r);
    values.push_back(boundary.at(node));
  });
  Mat design(static_cast<Eigen::Index>(rows.size()), cols);
  Vec rhs(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    design.row(static_cast<Eigen::Index>(k)) = rows[k].transpose();
    rhs(static_cast<Eigen::Index>(k)) = values[k];
  }
  const Vec coef = design.colPivHouseholderQr().solve(rhs);
  double trace = 0.0;
  int c = 1 + n;
  for (int a = 0; a < n; ++a)
    for (int b = a; b < n; ++b, ++c)
      if (a == b) trace += coef(c);
  return trace;
}

}  // namespace detail

/// Default starting point: the better (by residual) of two Poisson problems,
/// one with the angle of Theta(0, 0, 0) split equally over the eigenvalues and
/// one with the Laplacian of the quadratic fitted to the boundary data. The
/// second reproduces quadratic boundary data exactly.
inline PotentialField default_initial_guess(const DirichletProblem& problem) {
  const int n = problem.spec.dim();
  const double theta0 = problem.phase.eval(Vec::Zero(n), 0.0, Vec::Zero(n));
  const double per_axis = std::clamp(theta0 / n, -kPi / 2.0 + 1e-3, kPi / 2.0 - 1e-3);
  PotentialField best = poisson(problem.boundary, n * std::tan(per_axis));
  const auto trace = detail::boundary_quadratic_trace(problem.boundary);
  if (!trace) return best;
  PotentialField fitted = poisson(problem.boundary, *trace);
  const double r_best = max_abs(residual(best, problem.phase));
  const double r_fit = max_abs(residual(fitted, problem.phase));
  if (std::isfinite(r_fit) && (!std::isfinite(r_best) || r_fit < r_best)) best = std::move(fitted);
  return best;
}

/// Damped Newton on the interior unknowns.
inline std::pair<PotentialField, SolveReport> solve(const DirichletProblem& problem, const SolveOptions& opt = {}) {
  problem.validate();
  PotentialField u = problem.initial_guess ? *problem.initial_guess : default_initial_guess(problem);
  detail::apply_boundary(u, problem.boundary);
  const detail::InteriorIndex idx(problem.spec);
  SolveReport report;

  auto record_monitors = [&](const PotentialField& f) {
    const InteriorMonitors m = interior_monitors(f, problem.phase);
    report.min_eig_history.push_back(m.min_hessian_eigenvalue);
    report.min_phase_history.push_back(m.min_abs_phase);
    report.final_min_hessian_eigenvalue = m.min_hessian_eigenvalue;
    report.final_min_abs_phase = m.min_abs_phase;
  };
  auto fail = [&](ErrorKind kind, const std::string& why) {
    report.failure = why;
    throw SolveFailure(kind, why, report, u);
  };

  PotentialField r = residual(u, problem.phase);
  double norm = max_abs(r);
  if (!std::isfinite(norm)) fail(ErrorKind::NotConverged, "initial residual is not finite");
  report.residual_history.push_back(norm);
  record_monitors(u);
  log_debug("solve {}: initial residual {:.3e}", problem.phase.name(), norm);

  while (norm >= opt.tol_residual) {
    if (report.iterations >= opt.max_iter)
      fail(ErrorKind::NotConverged, fmt::format("residual {:.3e} after {} iterations", norm, report.iterations));
    const SparseMat jac = linearize(u, problem.phase);
    Vec rhs(static_cast<int>(idx.nodes.size()));
    for (std::size_t k = 0; k < idx.nodes.size(); ++k) rhs(static_cast<int>(k)) = -r.at(idx.nodes[k]);
    Vec step;
    try {
      step = solve_linear(jac, rhs, problem.spec.dim());
    } catch (const Error& e) {
      fail(e.kind(), e.what());
    }
    double alpha = 1.0;
    bool accepted = false;
    for (int halving = 0; halving <= opt.max_halvings; ++halving, alpha *= 0.5) {
      PotentialField trial = u;
      for (std::size_t k = 0; k < idx.nodes.size(); ++k) trial.at(idx.nodes[k]) += alpha * step(static_cast<int>(k));
      PotentialField tr = residual(trial, problem.phase);
      const double tn = max_abs(tr);
      if (std::isfinite(tn) && tn < norm) {
        u = std::move(trial);
        r = std::move(tr);
        norm = tn;
        accepted = true;
        break;
      }
    }
    if (!accepted) fail(ErrorKind::LineSearchFailed, fmt::format("no damping reduces the residual {:.3e}", norm));
    ++report.iterations;
    report.residual_history.push_back(norm);
    report.damping_history.push_back(alpha);
    record_monitors(u);
    log_debug("  iter {}: residual {:.3e}, damping {}", report.iterations, norm, alpha);
  }
  report.converged = true;
  u.metadata["phase"] = phase_tag(problem.phase);
  return {std::move(u), std::move(report)};
}

inline nlohmann::json to_json(const SolveReport& r) {
  return nlohmann::json{{"iterations", r.iterations},
                        {"residual_history", r.residual_history},
                        {"damping_history", r.damping_history},
                        {"min_eig_history", r.min_eig_history},
                        {"min_phase_history", r.min_phase_history},
                        {"final_min_hessian_eigenvalue", r.final_min_hessian_eigenvalue},
                        {"final_min_abs_phase", r.final_min_abs_phase},
                        {"converged", r.converged},
                        {"failure", r.failure}};
}

// ---------------------------------------------------------------------------
// Continuation

struct ContinuationStage {
  PhaseSpec phase;
  double boundary_scale = 1.0;
};

struct ContinuationOptions {
  SolveOptions solve;
  bool require_hypercritical = false;
};

struct ContinuationResult {
  std::optional<PotentialField> solution;  // last converged stage
  std::vector<SolveReport> reports;
  int completed = 0;
  bool complete = false;
  std::string failure;
};

/// Walks the path, warm-starting each stage from the previous solution, and
/// stops at the first stage that fails.
inline ContinuationResult continue_in(const DirichletProblem& problem, const std::vector<ContinuationStage>& path,
                                      const ContinuationOptions& opt = {}) {
  ContinuationResult out;
  std::optional<PotentialField> warm = problem.initial_guess;
  double warm_scale = 1.0;
  const double threshold = hypercritical_threshold(problem.spec.dim());
  for (std::size_t s = 0; s < path.size(); ++s) {
    DirichletProblem stage = problem;
    stage.phase = path[s].phase;
    for (double& v : stage.boundary.values) v *= path[s].boundary_scale;
    stage.initial_guess = warm;
    if (warm) {
      // a rescaled boundary drags the whole previous solution along with it
      if (warm_scale != 0.0 && path[s].boundary_scale != warm_scale)
        for (double& v : stage.initial_guess->values) v *= path[s].boundary_scale / warm_scale;
      detail::apply_boundary(*stage.initial_guess, stage.boundary);
    }
    try {
      auto [u, report] = solve(stage, opt.solve);
      out.reports.push_back(report);
      if (opt.require_hypercritical && report.final_min_abs_phase < threshold) {
        out.failure = fmt::format("stage {} left the hypercritical region: min |Theta| = {:.6g} < {:.6g}", s,
                                  report.final_min_abs_phase, threshold);
        return out;
      }
      warm = u;
      warm_scale = path[s].boundary_scale;
      out.solution = std::move(u);
      out.completed = static_cast<int>(s) + 1;
    } catch (const SolveFailure& e) {
      out.reports.push_back(e.report());
      out.failure = fmt::format("stage {}: {} (min |Theta| = {:.6g})", s, e.what(), e.report().final_min_abs_phase);
      return out;
    }
  }
  out.complete = true;
  return out;
}

// ---------------------------------------------------------------------------
// Problem files

inline Mat matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  Mat m(static_cast<int>(rows.size()), static_cast<int>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.size()) throw Error(ErrorKind::InvalidArgument, "matrix must be square");
    for (std::size_t k = 0; k < rows.size(); ++k) m(static_cast<int>(i), static_cast<int>(k)) = rows[i][k];
  }
  return m;
}

inline GridSpec grid_from_json(const nlohmann::json& j) {
  return GridSpec(j.at("n").get<int>(), j.at("half_width").get<double>(), j.at("m").get<int>());
}

inline PotentialField field_from_spec_json(const GridSpec& spec, const nlohmann::json& j) {
  if (j.contains("quadratic")) {
    const Mat a = matrix_from_json(j.at("quadratic"));
    if (a.rows() != spec.dim()) throw Error(ErrorKind::InvalidArgument, "quadratic matrix dimension mismatch");
    return sample(spec, [a](const Vec& x) { return 0.5 * x.dot(a * x); });
  }
  if (j.contains("oracle-trace")) return oracle_by_name(j.at("oracle-trace").get<std::string>()).sample(spec);
  if (j.contains("values")) {
    PotentialField f(spec);
    const auto v = j.at("values").get<std::vector<double>>();
    if (v.size() != f.values.size()) throw Error(ErrorKind::InvalidArgument, "explicit array has the wrong length");
    f.values = v;
    return f;
  }
  throw Error(ErrorKind::InvalidArgument, "boundary must be one of quadratic, oracle-trace, values");
}

struct ProblemFile {
  DirichletProblem problem;
  SolveOptions options;
};

inline ProblemFile problem_from_json(const nlohmann::json& j) {
  const GridSpec spec = grid_from_json(j.at("grid"));
  ProblemFile pf{DirichletProblem{spec, phase_from_json(j.at("phase")), field_from_spec_json(spec, j.at("boundary")),
                                  std::nullopt},
                 SolveOptions{}};
  if (j.contains("initial_guess")) pf.problem.initial_guess = field_from_spec_json(spec, j.at("initial_guess"));
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    pf.options.tol_residual = s.value("tol_residual", pf.options.tol_residual);
    pf.options.max_iter = s.value("max_iter", pf.options.max_iter);
  }
  return pf;
}

inline ProblemFile read_problem(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open problem file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("malformed problem JSON: ") + e.what());
  }
  return problem_from_json(j);
}

}  // namespace lmcf
