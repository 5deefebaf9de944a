#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <random>

#include "lmcf/types.hpp"

namespace lmcf {

/// Sparse multivariate polynomial in n <= 3 variables with exact derivatives.
class Polynomial {
 public:
  using Exponent = std::array<int, kMaxDim>;

  explicit Polynomial(int n = 1) : n_(n) {}

  static Polynomial constant(int n, double c) {
    Polynomial p(n);
    p.add_term({0, 0, 0}, c);
    return p;
  }

  static Polynomial variable(int n, int axis) {
    Polynomial p(n);
    Exponent e{0, 0, 0};
    e[axis] = 1;
    p.add_term(e, 1.0);
    return p;
  }

  /// 1/2 x^T a x.
  static Polynomial quadratic(const Mat& a) {
    const int n = static_cast<int>(a.rows());
    Polynomial p(n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        Exponent e{0, 0, 0};
        e[i] += 1;
        e[j] += 1;
        p.add_term(e, 0.5 * a(i, j));
      }
    return p;
  }

  int dim() const { return n_; }
  const std::map<Exponent, double>& terms() const { return terms_; }

  void add_term(const Exponent& e, double c) {
    if (c == 0.0) return;
    terms_[e] += c;
  }

  double operator()(const Vec& x) const {
    double acc = 0.0;
    for (const auto& [e, c] : terms_) {
      double t = c;
      for (int a = 0; a < n_; ++a) t *= std::pow(x(a), e[a]);
      acc += t;
    }
    return acc;
  }

  /// Partial derivative with `counts[a]` differentiations along axis a.
  Polynomial derivative(const Exponent& counts) const {
    Polynomial out(n_);
    for (const auto& [e, c] : terms_) {
      Exponent r = e;
      double coef = c;
      bool vanishes = false;
      for (int a = 0; a < n_ && !vanishes; ++a) {
        for (int k = 0; k < counts[a]; ++k) {
          if (r[a] == 0) {
            vanishes = true;
            break;
          }
          coef *= r[a];
          r[a] -= 1;
        }
      }
      if (!vanishes) out.add_term(r, coef);
    }
    return out;
  }

  /// Value of the derivative along the listed axes (e.g. {0, 0, 1} = u_112).
  double partial(const Vec& x, std::initializer_list<int> axes) const {
    Exponent counts{0, 0, 0};
    for (int a : axes) counts[a] += 1;
    return derivative(counts)(x);
  }

  Vec gradient(const Vec& x) const {
    Vec g(n_);
    for (int i = 0; i < n_; ++i) g(i) = partial(x, {i});
    return g;
  }

  Mat hessian(const Vec& x) const {
    Mat h(n_, n_);
    for (int i = 0; i < n_; ++i)
      for (int j = i; j < n_; ++j) h(i, j) = h(j, i) = partial(x, {i, j});
    return h;
  }

  Tensor3 third(const Vec& x) const {
    Tensor3 t(n_);
    for (int i = 0; i < n_; ++i)
      for (int j = i; j < n_; ++j)
        for (int k = j; k < n_; ++k) t.set_sym(i, j, k, partial(x, {i, j, k}));
    return t;
  }

  friend Polynomial operator+(Polynomial a, const Polynomial& b) {
    for (const auto& [e, c] : b.terms_) a.add_term(e, c);
    return a;
  }

  friend Polynomial operator-(Polynomial a, const Polynomial& b) {
    for (const auto& [e, c] : b.terms_) a.add_term(e, -c);
    return a;
  }

  friend Polynomial operator*(double s, Polynomial a) {
    for (auto& [e, c] : a.terms_) c *= s;
    return a;
  }

  friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
    Polynomial out(a.n_);
    for (const auto& [ea, ca] : a.terms_)
      for (const auto& [eb, cb] : b.terms_) {
        Exponent e{ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]};
        out.add_term(e, ca * cb);
      }
    return out;
  }

 private:
  int n_;
  std::map<Exponent, double> terms_;
};

/// Random convex-leaning cubic: 1/2 |x|^2 + symmetric quadratic and cubic parts
/// with coefficients uniform in [-amplitude, amplitude].
inline Polynomial random_cubic(int n, std::mt19937_64& rng, double amplitude = 0.2) {
  std::uniform_real_distribution<double> coef(-amplitude, amplitude);
  Polynomial p(n);
  for (int i = 0; i < n; ++i) {
    Polynomial::Exponent e{0, 0, 0};
    e[i] = 2;
    p.add_term(e, 0.5);
  }
  for (int total = 2; total <= 3; ++total) {
    for (int a = 0; a <= total; ++a)
      for (int b = 0; b <= total - a; ++b) {
        const int c = total - a - b;
        Polynomial::Exponent e{a, b, c};
        bool valid = true;
        for (int k = n; k < kMaxDim; ++k)
          if (e[k] != 0) valid = false;
        if (valid) p.add_term(e, coef(rng));
      }
  }
  return p;
}

/// A potential known in closed form through its first three derivatives.
struct AnalyticPotential {
  int n = 1;
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;
  std::function<Mat(const Vec&)> hessian;
  std::function<Tensor3(const Vec&)> third;

  static AnalyticPotential from(const Polynomial& p) {
    AnalyticPotential a;
    a.n = p.dim();
    a.value = [p](const Vec& x) { return p(x); };
    a.gradient = [p](const Vec& x) { return p.gradient(x); };
    a.hessian = [p](const Vec& x) { return p.hessian(x); };
    a.third = [p](const Vec& x) { return p.third(x); };
    return a;
  }
};

}  // namespace lmcf
