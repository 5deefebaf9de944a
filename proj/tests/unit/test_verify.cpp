#include <cmath>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "lmcf/oracle1d.hpp"
#include "lmcf/solver.hpp"
#include "lmcf/verify.hpp"

namespace lmcf {
namespace {

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

TEST(JacobiConstant, NamedPhases) {
  EXPECT_DOUBLE_EQ(jacobi_constant(PhaseSpec::translator(0.0, Vec::Ones(1), Vec::Zero(1)), Vec::Zero(1), Vec::Zero(1)),
                   0.5);
  EXPECT_EQ(jacobi_constant(PhaseSpec::shrinker(0.0, 1.0), Vec::Zero(2), Vec::Zero(2)), 0.0);
  EXPECT_DOUBLE_EQ(jacobi_constant(PhaseSpec::rotator(0.0, 2.0), vec2(1, 0), vec2(0, 1)), 8.0);
  EXPECT_EQ(jacobi_constant(PhaseSpec::constant(1.0), vec2(3, 4), vec2(5, 6)), 0.0);
}

TEST(JacobiConstant, CustomNeedsOscillation) {
  phases::Custom c;
  c.evaluate = [](const Vec& x, double, const Vec&) { return PhasePartials::zero(static_cast<int>(x.size())); };
  c.nu1 = 1.0;
  c.nu2 = 1.0;
  try {
    jacobi_constant(PhaseSpec(c), Vec::Zero(2), Vec::Zero(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingOsc);
  }
}

// Wrapping a named phase as Custom with its true structure constants must
// give a bound at least as large as the named constant, whenever |Du| and the
// point stay within the oscillation.
TEST(JacobiConstant, CustomDominatesNamed) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int n = 1; n <= 3; ++n) {
    for (int trial = 0; trial < 30; ++trial) {
      Vec x(n), p(n);
      for (int i = 0; i < n; ++i) {
        x(i) = unif(rng) / std::sqrt(double(n));
        p(i) = 2.0 * unif(rng) / std::sqrt(double(n));
      }
      const double osc = std::max(1.0, p.norm());
      const GraphBox box = GraphBox::symmetric(n, 1.0, osc, osc);
      for (const PhaseSpec& named : {PhaseSpec::shrinker(0.3, 0.8), PhaseSpec::rotator(0.1, 0.6),
                                     PhaseSpec::translator(0.2, Vec::LinSpaced(n, 0.3, 0.9), Vec::LinSpaced(n, -0.5, 0.1))}) {
        const PhaseAudit a = audit(named, box, 64);
        phases::Custom c;
        c.evaluate = [named](const Vec& y, double z, const Vec& q) { return named.partials(y, z, q); };
        c.nu1 = a.nu1;
        c.nu2 = a.nu2;
        const double generic = jacobi_constant(PhaseSpec(c), x, p, BallContext{osc});
        EXPECT_GE(generic, jacobi_constant(named, x, p)) << named.name();
      }
    }
  }
}

// Independent form of the cubic terms: sum_{abc} h_abc^2 (1 + lambda_b lambda_c).
double compact_cubic_terms(const PointGeometry& pg) {
  const int n = pg.dim();
  double acc = 0.0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) {
        const double h = (*pg.h_tensor)(a, b, c);
        acc += h * h * (1.0 + pg.lambda(b) * pg.lambda(c));
      }
  return acc;
}

TEST(Prop31, TermwiseSumMatchesCompactForm) {
  std::mt19937_64 rng(11);
  for (int n = 1; n <= 3; ++n) {
    const Polynomial u = random_cubic(n, rng, 0.3);
    const Vec x = Vec::Constant(n, 0.2);
    const PointGeometry pg = make_point_geometry(x, u.gradient(x), u.hessian(x), u.third(x));
    const Prop31Rhs rhs = prop31_rhs(pg, Vec::Zero(n), Mat::Zero(n, n));
    EXPECT_NEAR(rhs.value, compact_cubic_terms(pg), 1e-12);
  }
}

TEST(Prop31, QuadraticHasNoCubicTerms) {
  Mat a(2, 2);
  a << 1, 0, 0, 2;
  const auto r = verify_prop31(Polynomial::quadratic(a), PhaseSpec::constant(std::atan(1.0) + std::atan(2.0)), Vec::Zero(2));
  EXPECT_TRUE(r.eigen_gap_ok);
  EXPECT_EQ(r.lhs_fd, 0.0);
  EXPECT_EQ(r.rhs_formula, 0.0);
}

Polynomial example_potential() {
  Polynomial u(2);
  u.add_term({2, 0, 0}, 0.5);
  u.add_term({0, 2, 0}, 1.0);
  u.add_term({3, 0, 0}, 0.1);
  u.add_term({1, 2, 0}, 0.05);
  return u;
}

TEST(Prop31, ExamplePotentialAtOrigin) {
  const Polynomial u = example_potential();
  for (const PhaseSpec& ph : {PhaseSpec::constant(1.0), PhaseSpec::shrinker(0.0, 1.0)}) {
    const auto r = verify_prop31(u, ph, Vec::Zero(2));
    ASSERT_TRUE(r.eigen_gap_ok);
    EXPECT_LT(r.abs_gap, 1e-9) << ph.name();
    EXPECT_NEAR(r.lhs_drift, r.lhs_fd, 1e-9);
    EXPECT_TRUE(r.gradient_bound_ok);
  }
}

TEST(Prop31, RandomCubicsAllPhases) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unif(-0.3, 0.3);
  int skipped = 0, total = 0;
  double worst = 0.0;
  for (int n = 1; n <= 3; ++n) {
    const std::vector<PhaseSpec> phases{PhaseSpec::constant(0.7), PhaseSpec::shrinker(0.2, 1.0),
                                        PhaseSpec::translator(0.1, Vec::LinSpaced(n, 0.4, -0.3), Vec::LinSpaced(n, 0.2, 0.5)),
                                        PhaseSpec::rotator(0.3, 0.8)};
    for (int k = 0; k < 100; ++k) {
      const Polynomial u = random_cubic(n, rng);
      Vec x(n);
      for (int i = 0; i < n; ++i) x(i) = unif(rng);
      for (const auto& ph : phases) {
        ++total;
        const auto r = verify_prop31(u, ph, x);
        if (!r.eigen_gap_ok) {
          ++skipped;
          continue;
        }
        worst = std::max(worst, r.abs_gap);
        EXPECT_TRUE(r.gradient_bound_ok);
      }
    }
  }
  EXPECT_LT(worst, 1e-9);
  EXPECT_LT(skipped, total / 20);
}

// A deliberately broken chain rule must be caught: drop the Theta_p D^3u term.
TEST(Prop31, DetectsWrongSecondDerivative) {
  const Polynomial u = example_potential();
  const Vec x = vec2(0.1, -0.2);
  const PhaseSpec ph = PhaseSpec::translator(0.0, vec2(0.0, 0.0), vec2(0.7, -0.4));
  const PointGeometry pg = make_point_geometry(x, u.gradient(x), u.hessian(x), u.third(x));
  const PhasePartials d = ph.partials(x, u(x), pg.grad);
  const Mat broken = total_second_derivative(d, pg.grad, pg.hess, pg.third) - pg.third->contract(d.p);
  const auto good = verify_prop31(u, ph, x);
  const Vec dtheta = total_derivative(d, pg.grad, pg.hess);
  const double bad_rhs = prop31_rhs(pg, dtheta, broken).value;
  EXPECT_LT(good.abs_gap, 1e-9);
  EXPECT_GT(std::abs(bad_rhs - good.lhs_fd), 1e-3);
}

TEST(Prop31, SolvedFieldGapIsSecondOrder) {
  const auto cs = circle_shrinker();
  std::vector<double> gaps;
  for (int m : {65, 129}) {
    const GridSpec spec(1, 0.6, m);
    const auto [u, report] = solve(DirichletProblem{spec, cs.phase, cs.sample(spec), std::nullopt});
    ASSERT_TRUE(report.converged);
    Node node = spec.center();
    node[0] += (m - 1) / 4;  // x = 0.3
    const auto r = verify_prop31(u, cs.phase, node);
    gaps.push_back(r.abs_gap);
  }
  EXPECT_LT(gaps[1], 1e-3);
  EXPECT_GT(gaps[0] / gaps[1], 3.0);
}

double grim_margin(double x) { return std::cos(x) * std::cos(x) - 0.5 * std::sin(x) * std::sin(x) + 0.5; }

TEST(JacobiPointwise, GrimReaperClosedForm) {
  const double x = kPi / 3.0;
  EXPECT_NEAR(grim_margin(x), 0.375, 1e-15);
  EXPECT_GE(grim_margin(kPi / 2.0), -1e-15);
  EXPECT_NEAR(grim_margin(kPi / 2.0 - 1e-6), 0.0, 1e-11);
}

TEST(JacobiPointwise, GrimReaperFiniteDifferencesWithinBudget) {
  const auto gr = grim_reaper();
  for (int m : {257, 513}) {
    const GridSpec spec(1, 1.4, m);
    const auto u = gr.sample(spec);
    const auto s = verify_jacobi_pointwise(u, gr.phase, BallRegion::origin(1, 1.4));
    EXPECT_GT(s.points.size(), 50u);
    EXPECT_GT(s.skipped_nonconvex, 0);
    EXPECT_EQ(s.violations, 0);
    for (const auto& r : s.points) {
      EXPECT_GE(r.x(0), -1e-12);
      EXPECT_NEAR(r.margin, grim_margin(r.x(0)), s.slack_budget) << "x = " << r.x(0);
      EXPECT_DOUBLE_EQ(r.c_point, 0.5);
    }
  }
}

TEST(JacobiPointwise, QuadraticMarginIsConstant) {
  Mat a(2, 2);
  a << 2, 0.5, 0.5, 1.5;
  const GridSpec spec(2, 1.0, 21);
  const auto u = sample(spec, [&](const Vec& x) { return 0.5 * x.dot(a * x); });
  const auto s = verify_jacobi_pointwise(u, PhaseSpec::constant(lagrangian_angle(a)), BallRegion::origin(2, 1.0));
  for (const auto& r : s.points) {
    EXPECT_NEAR(r.lhs, 0.0, 1e-9);
    EXPECT_NEAR(r.grad_sq, 0.0, 1e-18);
    EXPECT_EQ(r.c_point, 0.0);
  }
  EXPECT_EQ(s.violations, 0);
}

TEST(JacobiPointwise, SolvedShrinkerHasNoViolations) {
  const GridSpec spec(2, 1.25, 33);
  auto problem = DirichletProblem::from_function(spec, PhaseSpec::shrinker(2.6, 1.0),
                                                 [](const Vec& x) { return 0.5 * (3 * x(0) * x(0) + 4 * x(1) * x(1)); });
  problem.initial_guess = problem.boundary;
  const auto u = solve(problem).first;
  const auto s = verify_jacobi_pointwise(u, problem.phase, BallRegion::origin(2, 1.0));
  EXPECT_EQ(s.skipped_nonconvex, 0);
  EXPECT_EQ(s.violations, 0);
  EXPECT_GT(s.min_margin, -s.slack_budget);
  EXPECT_FALSE(jacobi_csv(s).empty());
}

TEST(IntegralJacobi, QuadraticHasZeroLeftSide) {
  const GridSpec spec(2, 1.2, 25);
  const auto u = sample(spec, [](const Vec& x) { return x.squaredNorm(); });
  const auto r = verify_integral_jacobi(u, PhaseSpec::constant(2.0 * std::atan(2.0)), 0.5);
  EXPECT_NEAR(r.lhs, 0.0, 1e-20);
  EXPECT_TRUE(r.ok);
  EXPECT_EQ(r.c_ball, 0.0);
  // Vol_g(B_1) = 5 |B_1| up to the nodal quadrature error
  EXPECT_NEAR(r.volume_b1 / (5.0 * kPi), 1.0, 0.05);
}

TEST(IntegralJacobi, RightSideGrowsWithRadius) {
  const GridSpec spec(2, 1.2, 25);
  const auto u = sample(spec, [](const Vec& x) { return x.squaredNorm() + 0.1 * x(0) * x(0) * x(0); });
  const PhaseSpec ph = PhaseSpec::shrinker(2.0, 0.5);
  double prev = 0.0;
  for (double r : {0.25, 0.5, 0.75, 0.9}) {
    const auto rep = verify_integral_jacobi(u, ph, r);
    EXPECT_GT(rep.rhs, prev);
    prev = rep.rhs;
  }
}

TEST(IntegralJacobi, NonConvexIsRejected) {
  const GridSpec spec(2, 1.2, 25);
  const auto u = sample(spec, [](const Vec& x) { return x(0) * x(0) - x(1) * x(1); });
  try {
    verify_integral_jacobi(u, PhaseSpec::constant(0.0), 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotConvex);
  }
}

// Convex piece [c - L, c + L] of the grim reaper, mapped onto B_1 by
// v(y) = u(c + L y) / L^2, which solves the translator with Theta = c + L y.
TEST(IntegralJacobi, GrimReaperClosedForm) {
  const double c = 0.8, len = 0.6;
  const auto gr = grim_reaper();
  const GridSpec spec(1, 1.1, 4401);
  const auto v = sample(spec, [&](const Vec& y) { return gr.u(c + len * y(0)) / (len * len); });
  const auto rep = verify_integral_jacobi(v, PhaseSpec::translator(c, Vec::Constant(1, len), Vec::Zero(1)), 0.5);
  // in y-coordinates |grad_g b|^2 dv_g = L sin^2 x sec x dx
  const double exact = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      [&](double x) { return std::sin(x) * std::sin(x) / std::cos(x); }, c - 0.5 * len, c + 0.5 * len);
  EXPECT_NEAR(rep.lhs / (len * exact), 1.0, 2e-3);
  EXPECT_TRUE(rep.ok);
  EXPECT_GT(rep.headroom, 10.0);
}

TEST(Prop31, SeededSuiteIsReproducible) {
  const auto a = prop31_suite(7, 10);
  const auto b = prop31_suite(7, 10);
  EXPECT_EQ(a.cases.size(), 3u * 10u * 4u);
  EXPECT_TRUE(a.ok());
  EXPECT_EQ(prop31_csv(a), prop31_csv(b));
  EXPECT_NE(prop31_csv(a), prop31_csv(prop31_suite(8, 10)));
}

}  // namespace
}  // namespace lmcf
