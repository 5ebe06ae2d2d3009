#pragma once
// Polygon geometry: validated polygons, approximate distance functions,
// the interior bubble, transfinite edge interpolants, and the similarity
// map onto the reference frame. Scalar fields are evaluated as second-order
// jets (value, gradient, Hessian) so that Laplacians of composite fields
// come out of exact chain rules instead of hand-derived formulas.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "navem/common.hpp"

namespace navem {

// ---------------------------------------------------------------------------
// Second-order jet of a scalar field at a point.
// ---------------------------------------------------------------------------
struct Jet2 {
  double v = 0.0;
  Vec2 g = Vec2::Zero();
  Mat2 h = Mat2::Zero();

  static Jet2 constant(double c) { return Jet2{c, Vec2::Zero(), Mat2::Zero()}; }
  static Jet2 affine(double c, const Vec2& grad) { return Jet2{c, grad, Mat2::Zero()}; }
  double laplacian() const { return h.trace(); }
};

inline Jet2 operator+(const Jet2& a, const Jet2& b) { return Jet2{a.v + b.v, a.g + b.g, a.h + b.h}; }
inline Jet2 operator-(const Jet2& a, const Jet2& b) { return Jet2{a.v - b.v, a.g - b.g, a.h - b.h}; }
inline Jet2 operator-(const Jet2& a) { return Jet2{-a.v, -a.g, -a.h}; }
inline Jet2 operator+(const Jet2& a, double c) { return Jet2{a.v + c, a.g, a.h}; }
inline Jet2 operator+(double c, const Jet2& a) { return a + c; }
inline Jet2 operator-(const Jet2& a, double c) { return a + (-c); }
inline Jet2 operator-(double c, const Jet2& a) { return (-a) + c; }
inline Jet2 operator*(const Jet2& a, double c) { return Jet2{a.v * c, a.g * c, a.h * c}; }
inline Jet2 operator*(double c, const Jet2& a) { return a * c; }
inline Jet2 operator/(const Jet2& a, double c) { return a * (1.0 / c); }

inline Jet2 operator*(const Jet2& a, const Jet2& b) {
  Jet2 r;
  r.v = a.v * b.v;
  r.g = a.g * b.v + b.g * a.v;
  r.h = a.h * b.v + b.h * a.v + a.g * b.g.transpose() + b.g * a.g.transpose();
  return r;
}

inline Jet2 sq(const Jet2& a) { return a * a; }

inline Jet2 inv(const Jet2& a) {
  const double iv = 1.0 / a.v;
  Jet2 r;
  r.v = iv;
  r.g = -a.g * (iv * iv);
  r.h = -a.h * (iv * iv) + 2.0 * (iv * iv * iv) * (a.g * a.g.transpose());
  return r;
}

inline Jet2 operator/(const Jet2& a, const Jet2& b) { return a * inv(b); }
inline Jet2 operator/(double c, const Jet2& b) { return c * inv(b); }

inline Jet2 sqrt(const Jet2& a) {
  const double s = std::sqrt(a.v);
  Jet2 r;
  r.v = s;
  r.g = a.g / (2.0 * s);
  r.h = a.h / (2.0 * s) - (a.g * a.g.transpose()) / (4.0 * s * s * s);
  return r;
}

inline Jet2 sin(const Jet2& a) {
  const double s = std::sin(a.v), c = std::cos(a.v);
  return Jet2{s, c * a.g, c * a.h - s * (a.g * a.g.transpose())};
}

inline Jet2 cos(const Jet2& a) {
  const double s = std::sin(a.v), c = std::cos(a.v);
  return Jet2{c, -s * a.g, -s * a.h - c * (a.g * a.g.transpose())};
}

inline Jet2 pow3(const Jet2& a) { return a * a * a; }

// Jets of the coordinate fields at x: value x_i, gradient e_i.
inline Jet2 coord_jet(const Vec2& x, int axis) {
  Vec2 g = Vec2::Zero();
  g[axis] = 1.0;
  return Jet2::affine(x[axis], g);
}

// ---------------------------------------------------------------------------
// Polygon class / validated polygon.
// ---------------------------------------------------------------------------
enum class JetOrder { values_only = 0, with_gradient = 1, with_hessian = 2 };
enum class BubbleKind { adf, distance_product };

struct PolygonClass {
  int n_vertices = 0;
  bool convex = true;
  bool operator==(const PolygonClass&) const = default;
};

inline std::string to_string(const PolygonClass& c) {
  return std::to_string(c.n_vertices) + (c.convex ? "-convex" : "-concave");
}

// Derivative requests closer to the boundary than this (measured through the
// edge distance function value) are refused: the square roots in the distance
// construction are not differentiable on the boundary itself.
inline constexpr double kSingularEps = 1e-12;

class Polygon {
 public:
  // Validates and finishes a counterclockwise vertex list. Throws
  // DegenerateGeometry / ValidationError / NotStarShaped.
  static Polygon make(std::vector<Vec2> vertices);

  int n() const { return static_cast<int>(verts_.size()); }
  const Vec2& vertex(int i) const { return verts_[wrap(i)]; }
  const std::vector<Vec2>& vertices() const { return verts_; }
  Vec2 edge_vector(int i) const { return vertex(i + 1) - vertex(i); }
  double edge_length(int i) const { return edge_vector(i).norm(); }
  Vec2 edge_midpoint(int i) const { return 0.5 * (vertex(i) + vertex(i + 1)); }
  // Unit normal pointing into the polygon (left of the edge direction).
  Vec2 inward_normal(int i) const {
    const Vec2 e = edge_vector(i) / edge_length(i);
    return Vec2(-e.y(), e.x());
  }

  double area() const { return area_; }
  double diameter() const { return diameter_; }
  const Vec2& centroid() const { return centroid_; }
  // A kernel point from which every boundary point is visible.
  const Vec2& star_center() const { return star_center_; }
  PolygonClass cls() const { return cls_; }

  // Interior angle at vertex i, in (0, 2*pi); exactly pi at a hanging node.
  double interior_angle(int i) const {
    const Vec2 a = vertex(i) - vertex(i - 1);
    const Vec2 b = vertex(i + 1) - vertex(i);
    const double turn = std::atan2(a.x() * b.y() - a.y() * b.x(), a.dot(b));
    return M_PI - turn;
  }

  bool contains(const Vec2& x) const {
    // Even-odd ray cast; points on the boundary are not meaningful here.
    bool in = false;
    const int m = n();
    for (int i = 0, j = m - 1; i < m; j = i++) {
      const Vec2& a = verts_[i];
      const Vec2& b = verts_[j];
      if ((a.y() > x.y()) != (b.y() > x.y()) &&
          x.x() < (b.x() - a.x()) * (x.y() - a.y()) / (b.y() - a.y()) + a.x())
        in = !in;
    }
    return in;
  }

  double distance_to_boundary(const Vec2& x) const {
    double d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n(); ++i) {
      const Vec2 a = vertex(i), e = edge_vector(i);
      const double t = std::clamp((x - a).dot(e) / e.squaredNorm(), 0.0, 1.0);
      d = std::min(d, (x - (a + t * e)).norm());
    }
    return d;
  }

 private:
  int wrap(int i) const {
    const int m = n();
    return ((i % m) + m) % m;
  }
  std::vector<Vec2> verts_;
  double area_ = 0.0, diameter_ = 0.0;
  Vec2 centroid_ = Vec2::Zero();
  Vec2 star_center_ = Vec2::Zero();
  PolygonClass cls_;
};

namespace detail {

// Minimum signed distance of x to all edge lines (inward-positive); the
// kernel of the polygon is exactly { x : kernel_margin(x) >= 0 }.
inline double kernel_margin(const std::vector<Vec2>& verts, const Vec2& x) {
  const int m = static_cast<int>(verts.size());
  double worst = std::numeric_limits<double>::infinity();
  for (int i = 0; i < m; ++i) {
    const Vec2 a = verts[i];
    const Vec2 e = verts[(i + 1) % m] - a;
    const double len = e.norm();
    const Vec2 nrm(-e.y() / len, e.x() / len);
    worst = std::min(worst, (x - a).dot(nrm));
  }
  return worst;
}

}  // namespace detail

inline Polygon Polygon::make(std::vector<Vec2> vertices) {
  Polygon p;
  const int m = static_cast<int>(vertices.size());
  if (m < 3) throw ValidationError("polygon needs at least 3 vertices");
  for (const Vec2& v : vertices) require_finite(v, "polygon vertex");
  p.verts_ = std::move(vertices);

  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      p.diameter_ = std::max(p.diameter_, (p.verts_[i] - p.verts_[j]).norm());
  if (!(p.diameter_ > 0.0)) throw DegenerateGeometry("polygon has zero diameter");

  for (int i = 0; i < m; ++i) {
    if (p.edge_length(i) <= 1e-12 * p.diameter_)
      throw ValidationError("degenerate polygon edge " + std::to_string(i));
  }

  double twice_area = 0.0;
  Vec2 cmom = Vec2::Zero();
  for (int i = 0; i < m; ++i) {
    const Vec2& a = p.verts_[i];
    const Vec2& b = p.verts_[(i + 1) % m];
    const double c = a.x() * b.y() - b.x() * a.y();
    twice_area += c;
    cmom += (a + b) * c;
  }
  if (!(twice_area > 0.0))
    throw ValidationError("polygon is not counterclockwise or has non-positive area");
  p.area_ = 0.5 * twice_area;
  p.centroid_ = cmom / (3.0 * twice_area);

  // Convexity: every turn strictly positive beyond a scale-aware tolerance.
  // A straight angle (hanging node) therefore classifies as non-convex.
  const double cross_tol = 1e-12 * p.diameter_ * p.diameter_;
  bool convex = true;
  for (int i = 0; i < m; ++i) {
    const Vec2 a = p.vertex(i) - p.vertex(i - 1);
    const Vec2 b = p.vertex(i + 1) - p.vertex(i);
    if (a.x() * b.y() - a.y() * b.x() <= cross_tol) convex = false;
  }
  p.cls_ = PolygonClass{m, convex};

  // Star center: centroid when it lies in the kernel, otherwise the best
  // point of a refined grid scan over the bounding box.
  const double kernel_tol = 1e-9 * p.diameter_;
  if (detail::kernel_margin(p.verts_, p.centroid_) > kernel_tol) {
    p.star_center_ = p.centroid_;
    return p;
  }
  Vec2 lo = p.verts_[0], hi = p.verts_[0];
  for (const Vec2& v : p.verts_) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  Vec2 best = p.centroid_;
  double best_margin = -std::numeric_limits<double>::infinity();
  Vec2 span = hi - lo;
  Vec2 origin = lo;
  const int grid = 48;
  for (int round = 0; round < 3; ++round) {
    Vec2 round_best = best;
    for (int iy = 0; iy <= grid; ++iy)
      for (int ix = 0; ix <= grid; ++ix) {
        const Vec2 c = origin + Vec2(span.x() * ix / grid, span.y() * iy / grid);
        const double mgn = detail::kernel_margin(p.verts_, c);
        if (mgn > best_margin) {
          best_margin = mgn;
          round_best = c;
        }
      }
    best = round_best;
    span /= grid / 4.0;  // zoom in around the incumbent
    origin = best - 0.5 * span;
  }
  if (best_margin <= kernel_tol)
    throw NotStarShaped("polygon has an (almost) empty kernel");
  p.star_center_ = best;
  return p;
}

// ---------------------------------------------------------------------------
// Edge fields. Edges are 0-based: edge i runs from vertex i to vertex i+1.
// ---------------------------------------------------------------------------

// Signed distance to the line of edge i, positive on the interior side.
inline Jet2 signed_distance(const Polygon& p, int i, const Vec2& x) {
  const Vec2 nrm = p.inward_normal(i);
  return Jet2::affine((x - p.vertex(i)).dot(nrm), nrm);
}

// Trimming field of edge i: positive inside the circle through the edge's
// endpoints centered at its midpoint, zero on that circle.
inline Jet2 trimming(const Polygon& p, int i, const Vec2& x) {
  const double len = p.edge_length(i);
  const Vec2 mid = p.edge_midpoint(i);
  const Vec2 r = x - mid;
  Jet2 t;
  t.v = (0.25 * len * len - r.squaredNorm()) / len;
  t.g = -2.0 * r / len;
  t.h = (-2.0 / len) * Mat2::Identity();
  return t;
}

// Normalized coordinate along edge i: 0 at vertex i, 1 at vertex i+1.
// The plain division makes both endpoint values exact (q/q == 1).
inline Jet2 curvilinear(const Polygon& p, int i, const Vec2& x) {
  const Vec2 e = p.edge_vector(i);
  const double len2 = e.squaredNorm();
  return Jet2::affine((x - p.vertex(i)).dot(e) / len2, e / len2);
}

namespace detail {

inline double edge_adf_value(double d, double t) {
  const double d2 = d * d, d4 = d2 * d2;
  // (sqrt(t^2+d^4) - t) / 2, written cancellation-free for t > 0.
  const double inner = t > 0.0 ? d4 / (2.0 * (std::sqrt(t * t + d4) + t))
                               : 0.5 * (std::sqrt(t * t + d4) - t);
  return std::sqrt(d2 + inner * inner);
}

}  // namespace detail

// Approximate distance to edge i as a closed set: zero exactly on the edge
// segment, positive everywhere else, ~|distance| near the segment interior.
inline Jet2 edge_adf(const Polygon& p, int i, const Vec2& x,
                     JetOrder order = JetOrder::with_hessian) {
  const Jet2 d = signed_distance(p, i, x);
  const Jet2 t = trimming(p, i, x);
  if (order == JetOrder::values_only)
    return Jet2::constant(detail::edge_adf_value(d.v, t.v));
  const double value = detail::edge_adf_value(d.v, t.v);
  if (value < kSingularEps)
    throw DerivativeSingular("edge distance derivative requested on the boundary (edge " +
                             std::to_string(i) + ")");
  const Jet2 d4 = sq(sq(d));
  const Jet2 root = sqrt(sq(t) + d4);
  const Jet2 inner = t.v > 0.0 ? d4 / (2.0 * (root + t)) : 0.5 * (root - t);
  return sqrt(sq(d) + sq(inner));
}

// Interior bubble: zero on the whole boundary, positive inside. The default
// blends the edge distance functions with exponent m = 2; the alternative
// multiplies plain signed distances (positive inside convex polygons only).
inline Jet2 bubble(const Polygon& p, const Vec2& x,
                   JetOrder order = JetOrder::with_hessian,
                   BubbleKind kind = BubbleKind::adf) {
  const int m = p.n();
  if (kind == BubbleKind::distance_product) {
    Jet2 prod = Jet2::constant(1.0);
    for (int i = 0; i < m; ++i) prod = prod * signed_distance(p, i, x);
    return order == JetOrder::values_only ? Jet2::constant(prod.v) : prod;
  }
  if (order == JetOrder::values_only) {
    double mn = std::numeric_limits<double>::infinity();
    std::array<double, 16> vals{};
    for (int i = 0; i < m; ++i) {
      vals[static_cast<std::size_t>(i)] =
          detail::edge_adf_value(signed_distance(p, i, x).v, trimming(p, i, x).v);
      mn = std::min(mn, vals[static_cast<std::size_t>(i)]);
    }
    if (mn == 0.0) return Jet2::constant(0.0);
    double s = 0.0;
    for (int i = 0; i < m; ++i) {
      const double r = mn / vals[static_cast<std::size_t>(i)];
      s += r * r;
    }
    return Jet2::constant(mn / std::sqrt(s));
  }
  // Jets: factor out the smallest field so the inverse powers cannot
  // overflow; the rewrite is an exact algebraic identity, so the chain
  // rule through it reproduces the derivatives of the original blend.
  std::vector<Jet2> psi(static_cast<std::size_t>(m));
  int a = 0;
  for (int i = 0; i < m; ++i) {
    psi[static_cast<std::size_t>(i)] = edge_adf(p, i, x, order);
    if (psi[static_cast<std::size_t>(i)].v < psi[static_cast<std::size_t>(a)].v) a = i;
  }
  Jet2 s = Jet2::constant(0.0);
  for (int i = 0; i < m; ++i)
    s = s + sq(psi[static_cast<std::size_t>(a)] / psi[static_cast<std::size_t>(i)]);
  return psi[static_cast<std::size_t>(a)] / sqrt(s);
}

// Trace of the vertex-j hat function restricted to edge i, expressed through
// the edge coordinate s: 1 - s at the edge start, s at the edge end.
inline double edge_trace(int n, int i, int j, double s) {
  if (j == (i + 1) % n) return s;
  if (j == i) return 1.0 - s;
  return 0.0;
}

// Transfinite interpolant of vertex j: matches the piecewise-linear hat
// trace on the whole boundary and blends it inward with weights built from
// the edge distance functions. On the boundary itself only the value is
// defined (one-sided); derivative requests there raise DerivativeSingular.
inline Jet2 transfinite(const Polygon& p, int j, const Vec2& x,
                        JetOrder order = JetOrder::with_hessian) {
  const int m = p.n();
  std::vector<Jet2> psi(static_cast<std::size_t>(m));
  int a = 0;
  if (order == JetOrder::values_only) {
    for (int i = 0; i < m; ++i) {
      psi[static_cast<std::size_t>(i)] = edge_adf(p, i, x, JetOrder::values_only);
      if (psi[static_cast<std::size_t>(i)].v < psi[static_cast<std::size_t>(a)].v) a = i;
    }
    if (psi[static_cast<std::size_t>(a)].v < kSingularEps) {
      // On (or numerically on) edge a: the interpolant equals the hat trace.
      const double s = curvilinear(p, a, x).v;
      return Jet2::constant(edge_trace(m, a, j, s));
    }
  } else {
    for (int i = 0; i < m; ++i) {
      psi[static_cast<std::size_t>(i)] = edge_adf(p, i, x, order);  // throws on boundary
      if (psi[static_cast<std::size_t>(i)].v < psi[static_cast<std::size_t>(a)].v) a = i;
    }
  }
  // Weight of edge i is the product of all other edge fields; only the two
  // edges meeting at vertex j carry a nonzero trace factor.
  std::vector<Jet2> prod(static_cast<std::size_t>(m), Jet2::constant(1.0));
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < m; ++k)
      if (k != i) prod[static_cast<std::size_t>(i)] =
                      prod[static_cast<std::size_t>(i)] * psi[static_cast<std::size_t>(k)];
  Jet2 wsum = Jet2::constant(0.0);
  for (int i = 0; i < m; ++i) wsum = wsum + prod[static_cast<std::size_t>(i)];
  const int prev = (j - 1 + m) % m;
  const Jet2 s_prev = curvilinear(p, prev, x);
  const Jet2 s_next = curvilinear(p, j, x);
  const Jet2 num = prod[static_cast<std::size_t>(prev)] * s_prev +
                   prod[static_cast<std::size_t>(j)] * (1.0 - s_next);
  return num / wsum;
}

// Boundary-respecting lift of an interior field v: bubble * v + interpolant.
// The result keeps the interpolant's boundary trace for any v.
inline Jet2 apply_boundary_operator(const Jet2& bubble_jet, const Jet2& v,
                                    const Jet2& interpolant) {
  return bubble_jet * v + interpolant;
}

// ---------------------------------------------------------------------------
// Reference frame: scale 2/diameter about the centroid, then a rotation
// putting the anchor vertex on the positive x1-axis.
// ---------------------------------------------------------------------------
struct ReferenceMap {
  Vec2 centre = Vec2::Zero();
  double scale = 1.0;
  Mat2 rot = Mat2::Identity();  // applied after scaling about the centre

  Vec2 to_ref(const Vec2& x) const { return rot * (scale * (x - centre)); }
  Vec2 to_phys(const Vec2& z) const { return centre + rot.transpose() * z / scale; }
  // Chain rule for fields defined on the reference frame.
  Vec2 grad_to_phys(const Vec2& gz) const { return scale * (rot.transpose() * gz); }
  Mat2 hess_to_phys(const Mat2& hz) const {
    return scale * scale * (rot.transpose() * hz * rot);
  }
  double lap_to_phys(double lz) const { return scale * scale * lz; }
  Jet2 jet_to_phys(const Jet2& jz) const {
    return Jet2{jz.v, grad_to_phys(jz.g), hess_to_phys(jz.h)};
  }
};

inline ReferenceMap reference_map(const Polygon& p, int anchor) {
  ReferenceMap map;
  map.centre = p.centroid();
  map.scale = 2.0 / p.diameter();
  const Vec2 u = map.scale * (p.vertex(anchor) - map.centre);
  const double r = u.norm();
  if (r > 1e-13) {
    const double ca = u.x() / r, sa = u.y() / r;
    map.rot << ca, sa, -sa, ca;
  }
  return map;
}

// Image of the polygon under its reference map; vertex numbering unchanged.
inline Polygon normalized(const Polygon& p, const ReferenceMap& map) {
  std::vector<Vec2> verts;
  verts.reserve(static_cast<std::size_t>(p.n()));
  for (int i = 0; i < p.n(); ++i) verts.push_back(map.to_ref(p.vertex(i)));
  return Polygon::make(std::move(verts));
}

inline Polygon normalized(const Polygon& p, int anchor) {
  return normalized(p, reference_map(p, anchor));
}

}  // namespace navem
