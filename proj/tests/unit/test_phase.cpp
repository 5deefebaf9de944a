#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "lmcf/phase.hpp"

namespace lmcf {
namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

std::vector<PhaseSpec> named_phases(int n) {
  Vec t2 = Vec::LinSpaced(n, 0.3, -0.4), t3 = Vec::LinSpaced(n, -0.2, 0.5);
  return {PhaseSpec::constant(1.1), PhaseSpec::shrinker(0.7, 1.3), PhaseSpec::shrinker(0.2, -0.6),
          PhaseSpec::translator(0.1, t2, t3), PhaseSpec::rotator(0.4, 0.9)};
}

TEST(Partials, TranslatorTable) {
  const auto ph = PhaseSpec::translator(0.0, v2(1, 0), Vec::Zero(2));
  const auto d = ph.partials(v2(0.3, -2), 4.0, v2(1, 1));
  EXPECT_EQ(d.x, v2(1, 0));
  EXPECT_EQ(d.p, Vec::Zero(2));
  EXPECT_EQ(d.xx.norm() + d.xp.norm() + d.pp.norm() + d.xz.norm() + d.zp.norm() + std::abs(d.zz), 0.0);
}

TEST(Partials, ShrinkerTable) {
  const auto ph = PhaseSpec::shrinker(0.8, 1.0);
  const auto d = ph.partials(Vec::Zero(2), 0.0, Vec::Zero(2));
  EXPECT_EQ(d.value, 0.8);
  EXPECT_EQ(d.z, -2.0);
  EXPECT_EQ(d.xp, Mat::Identity(2, 2));
  EXPECT_EQ(ph.name(), "shrinker");
  EXPECT_EQ(PhaseSpec::shrinker(0.0, -1.0).name(), "expander");
}

TEST(Partials, RotatorTable) {
  const auto ph = PhaseSpec::rotator(0.0, 2.0);
  const auto d = ph.partials(v2(1, 0), 0.0, v2(0, 1));
  EXPECT_DOUBLE_EQ(d.value, 2.0);
  EXPECT_EQ(d.x, v2(2, 0));
  EXPECT_EQ(d.p, v2(0, 2));
  EXPECT_EQ(d.xx, 2.0 * Mat::Identity(2, 2));
  EXPECT_EQ(d.pp, 2.0 * Mat::Identity(2, 2));
}

TEST(PhaseSpec, Validation) {
  EXPECT_THROW(PhaseSpec::rotator(0, -1), Error);
  EXPECT_THROW(PhaseSpec::shrinker(0, 0), Error);
  EXPECT_THROW(PhaseSpec::translator(0, Vec::Zero(2), Vec::Zero(3)), Error);
  EXPECT_THROW(PhaseSpec(phases::Custom{}), Error);
}

// Central differences of eval reproduce the declared partials.
TEST(Partials, FiniteDifferenceProperty) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> c(-1.0, 1.0);
  for (int n = 1; n <= 3; ++n) {
    for (const PhaseSpec& ph : named_phases(n)) {
      for (int trial = 0; trial < 10; ++trial) {
        Vec x(n), p(n);
        for (int i = 0; i < n; ++i) {
          x(i) = c(rng);
          p(i) = c(rng);
        }
        const double z = c(rng);
        const auto d = ph.partials(x, z, p);
        const auto fd = detail::fd_partials(ph, x, z, p, 1e-5);
        auto rel = [](double a, double b) { return std::abs(a - b) / (1.0 + std::abs(b)); };
        for (int i = 0; i < n; ++i) {
          EXPECT_LT(rel(fd.x(i), d.x(i)), 1e-6);
          EXPECT_LT(rel(fd.p(i), d.p(i)), 1e-6);
          for (int j = 0; j < n; ++j) {
            EXPECT_LT(rel(fd.xx(i, j), d.xx(i, j)), 1e-6);
            EXPECT_LT(rel(fd.xp(i, j), d.xp(i, j)), 1e-6);
            EXPECT_LT(rel(fd.pp(i, j), d.pp(i, j)), 1e-6);
          }
        }
        EXPECT_LT(rel(fd.z, d.z), 1e-6);
        // value-only differences for the first partials
        for (int i = 0; i < n; ++i) {
          Vec xp = x, xm = x;
          xp(i) += 1e-6;
          xm(i) -= 1e-6;
          EXPECT_LT(rel((ph.eval(xp, z, p) - ph.eval(xm, z, p)) / 2e-6, d.x(i)), 1e-6);
        }
      }
    }
  }
}

TEST(TotalDerivative, Examples) {
  const Mat hess = Mat::Random(2, 2);
  const Mat sym = 0.5 * (hess + hess.transpose());
  EXPECT_EQ(total_derivative(PhaseSpec::constant(1.0), v2(1, 2), 3.0, v2(4, 5), sym), Vec::Zero(2));
  const auto gr = PhaseSpec::translator(0.0, Vec::Ones(1), Vec::Zero(1));
  EXPECT_EQ(total_derivative(gr, Vec::Constant(1, 0.7), 0.1, Vec::Constant(1, 0.2), Mat::Constant(1, 1, 0.8))(0), 1.0);
  EXPECT_EQ(total_derivative(PhaseSpec::shrinker(0, 1), Vec::Zero(2), 0.0, Vec::Zero(2), sym), Vec::Zero(2));
}

// In the eigenframe the total derivative is Theta_xi + Theta_z u_i + Theta_pi lambda_i.
TEST(TotalDerivative, DiagonalFormProperty) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> c(-1.0, 1.0);
  for (const PhaseSpec& ph : named_phases(3)) {
    Vec x(3), p(3), lambda(3);
    for (int i = 0; i < 3; ++i) {
      x(i) = c(rng);
      p(i) = c(rng);
      lambda(i) = 2.0 * c(rng);
    }
    const double z = c(rng);
    const auto d = ph.partials(x, z, p);
    const Vec got = total_derivative(ph, x, z, p, lambda.asDiagonal());
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(got(i), d.x(i) + d.z * p(i) + d.p(i) * lambda(i), 1e-15);
  }
}

TEST(TotalSecondDerivative, Examples) {
  const Tensor3 zero(2);
  EXPECT_EQ(total_second_derivative(PhaseSpec::constant(1.0), v2(1, 1), 0.0, v2(1, 1), Mat::Identity(2, 2), zero),
            Mat::Zero(2, 2));
  const auto tr = PhaseSpec::translator(0.0, v2(1, 0), Vec::Zero(2));
  EXPECT_EQ(total_second_derivative(tr, v2(1, 1), 0.0, v2(1, 1), Mat::Identity(2, 2), std::nullopt), Mat::Zero(2, 2));
  const Mat rot = total_second_derivative(PhaseSpec::rotator(0.0, 1.0), Vec::Zero(2), 0.0, Vec::Zero(2),
                                          Mat::Identity(2, 2), zero);
  EXPECT_EQ(rot, 2.0 * Mat::Identity(2, 2));
  EXPECT_THROW(total_second_derivative(PhaseSpec::rotator(0.0, 1.0), Vec::Zero(2), 0.0, v2(1, 0), Mat::Identity(2, 2),
                                       std::nullopt),
               Error);
}

// Along a polynomial potential, the chain rule matches the exact second
// derivatives of the composed polynomial.
TEST(TotalSecondDerivative, MatchesComposedPolynomial) {
  std::mt19937_64 rng(13);
  for (int n = 1; n <= 3; ++n) {
    for (const PhaseSpec& ph : named_phases(n)) {
      const Polynomial u = random_cubic(n, rng);
      const Polynomial theta = *compose(ph, u);
      const Vec x = Vec::Random(n) * 0.6;
      const Mat got = total_second_derivative(ph, x, u(x), u.gradient(x), u.hessian(x), u.third(x));
      EXPECT_LT((got - theta.hessian(x)).cwiseAbs().maxCoeff(), 1e-12) << ph.name();
      const Vec first = total_derivative(ph, x, u(x), u.gradient(x), u.hessian(x));
      EXPECT_LT((first - theta.gradient(x)).cwiseAbs().maxCoeff(), 1e-12) << ph.name();
    }
  }
}

TEST(Audit, TranslatorConstants) {
  const auto ph = PhaseSpec::translator(0.0, v2(1, 0), v2(0, 2));
  const auto a = audit(ph, GraphBox::symmetric(2, 1, 1, 1), 50);
  EXPECT_DOUBLE_EQ(a.nu1, 2.0);
  EXPECT_EQ(a.nu2, 0.0);
  EXPECT_TRUE(a.partial_convexity_p);
}

TEST(Audit, ConstantPhase) {
  const auto a = audit(PhaseSpec::constant(2.0), GraphBox::symmetric(3, 1, 1, 1), 10);
  EXPECT_EQ(a.nu1, 0.0);
  EXPECT_EQ(a.nu2, 0.0);
}

TEST(Audit, ShrinkerConstants) {
  const auto a = audit(PhaseSpec::shrinker(0.0, 1.0), GraphBox::symmetric(2, 1, 1, 1), 100);
  // max(|p|, 2, |x|) with |x|, |p| <= sqrt 2 at the corners
  EXPECT_DOUBLE_EQ(a.nu1, 2.0);
  EXPECT_DOUBLE_EQ(a.nu2, 1.0);
  EXPECT_TRUE(a.partial_convexity_p);
}

TEST(Audit, RotatorConstantsAndConvexity) {
  const auto a = audit(PhaseSpec::rotator(0.0, 0.5), GraphBox::symmetric(2, 1, 1, 2), 100);
  EXPECT_NEAR(a.nu1, 0.5 * std::sqrt(8.0), 1e-15);
  EXPECT_DOUBLE_EQ(a.nu2, 0.5);
  EXPECT_DOUBLE_EQ(a.max_pp_norm, 0.5);
  EXPECT_TRUE(a.partial_convexity_p);
}

TEST(Audit, CustomConsistency) {
  phases::Custom c;
  c.name = "sine";
  c.nu1 = 1.0;
  c.nu2 = 1.0;
  c.evaluate = [](const Vec& x, double, const Vec& p) {
    PhasePartials d = PhasePartials::zero(1);
    d.value = std::sin(x(0)) - 0.5 * p(0) * p(0);
    d.x(0) = std::cos(x(0));
    d.p(0) = -p(0);
    d.xx(0, 0) = -std::sin(x(0));
    d.pp(0, 0) = -1.0;
    return d;
  };
  const auto good = audit(PhaseSpec(c), GraphBox::symmetric(1, 1, 1, 1), 50);
  EXPECT_TRUE(good.custom.checked);
  EXPECT_TRUE(good.custom.ok);
  EXPECT_FALSE(good.partial_convexity_p);

  auto wrong = c;
  wrong.evaluate = [inner = c.evaluate](const Vec& x, double z, const Vec& p) {
    auto d = inner(x, z, p);
    d.x(0) *= 1.1;
    return d;
  };
  EXPECT_FALSE(audit(PhaseSpec(wrong), GraphBox::symmetric(1, 1, 1, 1), 50).custom.ok);
  auto understated = c;
  understated.nu1 = 0.5;
  EXPECT_FALSE(audit(PhaseSpec(understated), GraphBox::symmetric(1, 1, 1, 1), 50).custom.nu_declarations_hold);
}

TEST(Audit, IsDeterministicForSeed) {
  const auto ph = PhaseSpec::rotator(0.1, 0.3);
  const auto a = audit(ph, GraphBox::symmetric(3, 1, 2, 1), 200, 42);
  const auto b = audit(ph, GraphBox::symmetric(3, 1, 2, 1), 200, 42);
  EXPECT_EQ(a.nu1, b.nu1);
  EXPECT_EQ(a.worst_x, b.worst_x);
}

TEST(Hypercritical, Examples) {
  const GridSpec spec(2, 1.0, 9);
  const auto steep = sample(spec, [](const Vec& x) { return 1.5 * x.squaredNorm(); });
  const auto r = hypercritical_check(steep, PhaseSpec::constant(2.0 * std::atan(3.0)), BallRegion::origin(2, 0.9));
  EXPECT_TRUE(r.ok);
  EXPECT_NEAR(r.min_abs_theta, 2.0 * std::atan(3.0), 1e-12);
  EXPECT_NEAR(r.min_abs_angle, 2.0 * std::atan(3.0), 1e-12);
  EXPECT_NEAR(r.min_hessian_eigenvalue, 3.0, 1e-12);

  const auto flat = sample(spec, [](const Vec&) { return 0.0; });
  EXPECT_FALSE(hypercritical_check(flat, PhaseSpec::constant(0.0), BallRegion::origin(2, 0.9)).ok);

  const GridSpec line(1, 1.0, 9);
  const auto any = sample(line, [](const Vec& x) { return std::sin(3 * x(0)); });
  const auto r1 = hypercritical_check(any, PhaseSpec::constant(0.0), BallRegion::origin(1, 0.9));
  EXPECT_TRUE(r1.ok);
  EXPECT_EQ(r1.threshold, 0.0);
}

TEST(Rescale, NamedVariants) {
  const double k = 0.5;
  const auto s = rescale_phase(PhaseSpec::shrinker(0.3, 1.0), k);
  EXPECT_DOUBLE_EQ(std::get<phases::Shrinker>(s.variant()).s2, 0.25);
  EXPECT_DOUBLE_EQ(std::get<phases::Shrinker>(s.variant()).s1, 0.3);
  const auto r = rescale_phase(PhaseSpec::rotator(0.3, 2.0), 2.0);
  EXPECT_DOUBLE_EQ(std::get<phases::Rotator>(r.variant()).r2, 8.0);
  const auto t = rescale_phase(PhaseSpec::translator(0.0, v2(1, 2), v2(3, 4)), 2.0);
  EXPECT_EQ(std::get<phases::Translator>(t.variant()).t2, v2(2, 4));
}

// Theta'(x, z', p') with z' = u(kx)/k^2, p' = Du(kx)/k equals Theta(kx, u, Du).
TEST(Rescale, PhaseValueIsTransported) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> c(-1.0, 1.0);
  const double k = 1.7;
  for (const PhaseSpec& ph : named_phases(2)) {
    const auto scaled = rescale_phase(ph, k);
    const Vec x = v2(c(rng), c(rng)), p = v2(c(rng), c(rng));
    const double z = c(rng);
    EXPECT_NEAR(scaled.eval(x, z / (k * k), p / k), ph.eval(k * x, z, p), 1e-13);
  }
}

TEST(Json, RoundTrip) {
  for (const PhaseSpec& ph : named_phases(2)) {
    const auto j = phase_to_json(ph);
    const auto back = phase_from_json(j);
    EXPECT_EQ(phase_to_json(back), j);
  }
  nlohmann::json bad = {{"variant", "nope"}};
  EXPECT_THROW(phase_from_json(bad), Error);
}

}  // namespace
}  // namespace lmcf
