#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "lmcf/error.hpp"
#include "lmcf/types.hpp"

namespace lmcf {

/// Multi-index of a grid node; entries beyond the grid dimension are zero.
using Node = std::array<int, kMaxDim>;

/// Uniform tensor grid on the box [-half_width, half_width]^n with m nodes per
/// axis. m is odd so the origin is always a node.
class GridSpec {
 public:
  GridSpec() = default;
  GridSpec(int n, double half_width, int m) : n_(n), half_width_(half_width), m_(m) {
    if (n < 1 || n > kMaxDim) throw Error(ErrorKind::InvalidArgument, "grid dimension must be 1..3");
    if (m < 5 || m % 2 == 0) throw Error(ErrorKind::InvalidArgument, "points_per_axis must be odd and >= 5");
    if (!(half_width > 0.0) || !std::isfinite(half_width))
      throw Error(ErrorKind::InvalidArgument, "half_width must be positive and finite");
  }

  int dim() const { return n_; }
  int points_per_axis() const { return m_; }
  double half_width() const { return half_width_; }
  double spacing() const { return 2.0 * half_width_ / (m_ - 1); }
  int center_index() const { return (m_ - 1) / 2; }

  std::size_t num_nodes() const {
    std::size_t total = 1;
    for (int a = 0; a < n_; ++a) total *= static_cast<std::size_t>(m_);
    return total;
  }

  /// Row-major linear index, axis 1 slowest.
  std::size_t linear(const Node& node) const {
    std::size_t idx = 0;
    for (int a = 0; a < n_; ++a) idx = idx * static_cast<std::size_t>(m_) + static_cast<std::size_t>(node[a]);
    return idx;
  }

  Node node_of(std::size_t linear_index) const {
    Node node{0, 0, 0};
    for (int a = n_ - 1; a >= 0; --a) {
      node[a] = static_cast<int>(linear_index % static_cast<std::size_t>(m_));
      linear_index /= static_cast<std::size_t>(m_);
    }
    return node;
  }

  Node center() const {
    Node node{0, 0, 0};
    for (int a = 0; a < n_; ++a) node[a] = center_index();
    return node;
  }

  double coord(int index) const { return -half_width_ + index * spacing(); }

  Vec position(const Node& node) const {
    Vec x(n_);
    for (int a = 0; a < n_; ++a) x(a) = coord(node[a]);
    return x;
  }

  /// Number of nodes between `node` and the nearest box face.
  int depth(const Node& node) const {
    int d = std::numeric_limits<int>::max();
    for (int a = 0; a < n_; ++a) d = std::min({d, node[a], m_ - 1 - node[a]});
    return d;
  }

  bool contains(const Node& node) const {
    for (int a = 0; a < n_; ++a)
      if (node[a] < 0 || node[a] >= m_) return false;
    return true;
  }

  bool on_boundary(const Node& node) const { return depth(node) == 0; }

  bool contains_point(const Vec& x, double tol = 1e-12) const {
    for (int a = 0; a < n_; ++a)
      if (std::abs(x(a)) > half_width_ * (1.0 + tol)) return false;
    return true;
  }

  template <class F>
  void for_each_node(F&& f) const {
    const std::size_t total = num_nodes();
    for (std::size_t i = 0; i < total; ++i) f(node_of(i));
  }

  friend bool operator==(const GridSpec& a, const GridSpec& b) {
    return a.n_ == b.n_ && a.m_ == b.m_ && a.half_width_ == b.half_width_;
  }

 private:
  int n_ = 1;
  double half_width_ = 1.0;
  int m_ = 5;
};

/// Scalar potential sampled on a GridSpec.
struct PotentialField {
  GridSpec spec;
  std::vector<double> values;
  std::map<std::string, std::string> metadata;

  PotentialField() = default;
  explicit PotentialField(const GridSpec& s) : spec(s), values(s.num_nodes(), 0.0) {}
  PotentialField(const GridSpec& s, std::vector<double> v) : spec(s), values(std::move(v)) {
    if (values.size() != spec.num_nodes())
      throw Error(ErrorKind::InvalidArgument, "field value count does not match grid");
    for (double x : values)
      if (!std::isfinite(x)) throw Error(ErrorKind::InvalidArgument, "field values must be finite");
  }

  double at(const Node& node) const { return values[spec.linear(node)]; }
  double& at(const Node& node) { return values[spec.linear(node)]; }
};

struct BallRegion {
  Vec center;
  double radius = 1.0;

  bool contains(const Vec& x) const { return (x - center).norm() <= radius * (1.0 + 1e-12) + 1e-14; }

  static BallRegion origin(int n, double radius) { return BallRegion{Vec::Zero(n), radius}; }
};

/// Nodes of `spec` lying in `ball`, in row-major order.
inline std::vector<Node> nodes_in_ball(const GridSpec& spec, const BallRegion& ball, int min_depth = 0) {
  std::vector<Node> out;
  spec.for_each_node([&](const Node& node) {
    if (spec.depth(node) >= min_depth && ball.contains(spec.position(node))) out.push_back(node);
  });
  return out;
}

inline PotentialField sample(const GridSpec& spec, const std::function<double(const Vec&)>& f) {
  PotentialField field(spec);
  spec.for_each_node([&](const Node& node) { field.at(node) = f(spec.position(node)); });
  return field;
}

namespace detail {

inline Node shifted(Node node, int axis, int delta) {
  node[axis] += delta;
  return node;
}

inline Node shifted(Node node, int a, int da, int b, int db) {
  node[a] += da;
  node[b] += db;
  return node;
}

inline void require_depth(const GridSpec& spec, const Node& node, int depth) {
  if (!spec.contains(node) || spec.depth(node) < depth)
    throw Error(ErrorKind::StencilOutOfDomain,
                "node needs " + std::to_string(depth) + " nodes of clearance from the box boundary");
}

inline Mat hessian_stride(const PotentialField& f, const Node& node, int s) {
  const int n = f.spec.dim();
  const double hh = s * f.spec.spacing();
  const double u0 = f.at(node);
  Mat hess(n, n);
  for (int i = 0; i < n; ++i) {
    hess(i, i) = (f.at(shifted(node, i, s)) - 2.0 * u0 + f.at(shifted(node, i, -s))) / (hh * hh);
    for (int j = i + 1; j < n; ++j) {
      const double mixed = (f.at(shifted(node, i, s, j, s)) - f.at(shifted(node, i, s, j, -s)) -
                            f.at(shifted(node, i, -s, j, s)) + f.at(shifted(node, i, -s, j, -s))) /
                           (4.0 * hh * hh);
      hess(i, j) = mixed;
      hess(j, i) = mixed;
    }
  }
  return hess;
}

inline Tensor3 third_stride(const PotentialField& f, const Node& node, int s) {
  const int n = f.spec.dim();
  const double hh = s * f.spec.spacing();
  const double h3 = hh * hh * hh;
  Tensor3 t(n);
  for (int i = 0; i < n; ++i) {
    const double uiii = (f.at(shifted(node, i, 2 * s)) - 2.0 * f.at(shifted(node, i, s)) +
                         2.0 * f.at(shifted(node, i, -s)) - f.at(shifted(node, i, -2 * s))) /
                        (2.0 * h3);
    t.set_sym(i, i, i, uiii);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      auto second_i = [&](int dj) {
        return f.at(shifted(node, i, s, j, dj)) - 2.0 * f.at(shifted(node, j, dj)) + f.at(shifted(node, i, -s, j, dj));
      };
      t.set_sym(i, i, j, (second_i(s) - second_i(-s)) / (2.0 * h3));
    }
  }
  if (n == 3) {
    double acc = 0.0;
    for (int a : {-1, 1})
      for (int b : {-1, 1})
        for (int c : {-1, 1}) {
          Node p = node;
          p[0] += a * s;
          p[1] += b * s;
          p[2] += c * s;
          acc += a * b * c * f.at(p);
        }
    t.set_sym(0, 1, 2, acc / (8.0 * h3));
  }
  return t;
}

}  // namespace detail

/// Central-difference gradient; needs one node of clearance.
inline Vec gradient_at(const PotentialField& f, const Node& node) {
  detail::require_depth(f.spec, node, 1);
  const int n = f.spec.dim();
  const double h = f.spec.spacing();
  Vec g(n);
  for (int i = 0; i < n; ++i)
    g(i) = (f.at(detail::shifted(node, i, 1)) - f.at(detail::shifted(node, i, -1))) / (2.0 * h);
  return g;
}

/// Central-difference Hessian, exactly symmetric; needs one node of clearance.
inline Mat hessian_at(const PotentialField& f, const Node& node) {
  detail::require_depth(f.spec, node, 1);
  return detail::hessian_stride(f, node, 1);
}

/// Third-derivative tensor with second-order central stencils (two nodes of
/// clearance). With `richardson` the h and 2h stencils are combined, which
/// needs four nodes of clearance.
inline Tensor3 third_at(const PotentialField& f, const Node& node, bool richardson = false) {
  if (!richardson) {
    detail::require_depth(f.spec, node, 2);
    return detail::third_stride(f, node, 1);
  }
  detail::require_depth(f.spec, node, 4);
  const Tensor3 fine = detail::third_stride(f, node, 1);
  const Tensor3 coarse = detail::third_stride(f, node, 2);
  const int n = f.spec.dim();
  Tensor3 out(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) out(i, j, k) = (4.0 * fine(i, j, k) - coarse(i, j, k)) / 3.0;
  return out;
}

/// Gradient, Hessian and optionally third derivatives at a node.
struct NodeDerivatives {
  Vec grad;
  Mat hess;
  Tensor3 third;
  bool has_third = false;
};

inline NodeDerivatives derivatives_at(const PotentialField& f, const Node& node, int order) {
  if (order < 1 || order > 3) throw Error(ErrorKind::InvalidArgument, "derivative order must be 1, 2 or 3");
  NodeDerivatives d;
  d.grad = gradient_at(f, node);
  if (order >= 2) d.hess = hessian_at(f, node);
  if (order >= 3) {
    d.third = third_at(f, node);
    d.has_third = true;
  }
  return d;
}

/// max - min of the nodal values inside `ball`.
inline double oscillation(const PotentialField& f, const BallRegion& ball) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  f.spec.for_each_node([&](const Node& node) {
    if (!ball.contains(f.spec.position(node))) return;
    const double v = f.at(node);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  });
  if (!(hi >= lo)) throw Error(ErrorKind::EmptyRegion, "no grid node inside the ball");
  return hi - lo;
}

/// Multilinear interpolation; exact on multilinear functions.
inline double interpolate(const PotentialField& f, const Vec& x) {
  const GridSpec& spec = f.spec;
  const int n = spec.dim();
  if (x.size() != n || !spec.contains_point(x)) throw Error(ErrorKind::OutOfDomain, "point outside the grid box");
  const double h = spec.spacing();
  std::array<int, kMaxDim> base{0, 0, 0};
  std::array<double, kMaxDim> frac{0.0, 0.0, 0.0};
  for (int a = 0; a < n; ++a) {
    const double t = std::clamp((x(a) + spec.half_width()) / h, 0.0, double(spec.points_per_axis() - 1));
    int i = std::min(static_cast<int>(std::floor(t)), spec.points_per_axis() - 2);
    base[a] = i;
    frac[a] = t - i;
  }
  double acc = 0.0;
  for (int corner = 0; corner < (1 << n); ++corner) {
    Node node{0, 0, 0};
    double w = 1.0;
    for (int a = 0; a < n; ++a) {
      const int bit = (corner >> a) & 1;
      node[a] = base[a] + bit;
      w *= bit ? frac[a] : 1.0 - frac[a];
    }
    if (w != 0.0) acc += w * f.at(node);
  }
  return acc;
}

/// Tensor-product four-point Lagrange interpolation; exact on polynomials of
/// degree <= 3 per axis.
inline double interpolate_cubic(const PotentialField& f, const Vec& x) {
  const GridSpec& spec = f.spec;
  const int n = spec.dim();
  if (x.size() != n || !spec.contains_point(x)) throw Error(ErrorKind::OutOfDomain, "point outside the grid box");
  const double h = spec.spacing();
  const int m = spec.points_per_axis();
  std::array<int, kMaxDim> start{0, 0, 0};
  std::array<std::array<double, 4>, kMaxDim> weights{};
  for (int a = 0; a < n; ++a) {
    const double t = (x(a) + spec.half_width()) / h;
    const int s = std::clamp(static_cast<int>(std::floor(t)) - 1, 0, m - 4);
    start[a] = s;
    for (int p = 0; p < 4; ++p) {
      double w = 1.0;
      for (int q = 0; q < 4; ++q)
        if (q != p) w *= (t - (s + q)) / double(p - q);
      weights[a][p] = w;
    }
  }
  double acc = 0.0;
  const int count = 1 << (2 * n);
  for (int c = 0; c < count; ++c) {
    Node node{0, 0, 0};
    double w = 1.0;
    for (int a = 0; a < n; ++a) {
      const int p = (c >> (2 * a)) & 3;
      node[a] = start[a] + p;
      w *= weights[a][p];
    }
    acc += w * f.at(node);
  }
  return acc;
}

}  // namespace lmcf
