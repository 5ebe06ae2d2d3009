#pragma once
// Quadrature: symmetric Gauss rules on triangles, star sub-triangulation of
// polygons, the cosine-warped interior sampling lattice used for training
// losses, and exponentially clustered edge rules for boundary integrals.

#include <array>
#include <cmath>
#include <vector>

#include "navem/geometry.hpp"

namespace navem {

struct QuadratureRule {
  std::vector<Vec2> points;
  std::vector<double> weights;
  std::size_t size() const { return points.size(); }
};

// Rule on (0,1) for integrals along a parametrized edge.
struct EdgeRule {
  std::vector<double> params;
  std::vector<double> weights;  // sum to 1
};

inline double triangle_area(const Vec2& a, const Vec2& b, const Vec2& c) {
  return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
}

// ---------------------------------------------------------------------------
// Gauss rules on the reference triangle (0,0),(1,0),(0,1); weights sum to the
// reference area 1/2. Orders name the exact polynomial degree.
// ---------------------------------------------------------------------------
inline QuadratureRule gauss_triangle(int order) {
  QuadratureRule r;
  auto push3 = [&r](double a, double w) {
    // barycentric (a, a, 1-2a) and cyclic permutations; (x,y) = (l2, l3)
    r.points.emplace_back(a, 1.0 - 2.0 * a);
    r.points.emplace_back(a, a);
    r.points.emplace_back(1.0 - 2.0 * a, a);
    for (int i = 0; i < 3; ++i) r.weights.push_back(0.5 * w);
  };
  auto push6 = [&r](double a, double b, double w) {
    const double c = 1.0 - a - b;
    const std::array<std::array<double, 2>, 6> pts = {{{b, c}, {c, b}, {a, c},
                                                       {c, a}, {a, b}, {b, a}}};
    for (const auto& p : pts) {
      r.points.emplace_back(p[0], p[1]);
      r.weights.push_back(0.5 * w);
    }
  };
  switch (order) {
    case 2:
      push3(1.0 / 6.0, 1.0 / 3.0);
      break;
    case 4:
      push3(0.445948490915965, 0.223381589678011);
      push3(0.091576213509771, 0.109951743655322);
      break;
    case 6:
      push3(0.249286745170910, 0.116786275726379);
      push3(0.063089014491502, 0.050844906370207);
      push6(0.310352451033785, 0.053145049844816, 0.082851075618374);
      break;
    default:
      throw UnsupportedOrder("gauss_triangle supports orders 2, 4, 6; got " +
                             std::to_string(order));
  }
  return r;
}

// Map a reference-triangle rule onto the physical triangle (a,b,c).
inline void append_mapped_rule(const QuadratureRule& ref, const Vec2& a, const Vec2& b,
                               const Vec2& c, QuadratureRule& out) {
  const double scale = triangle_area(a, b, c) / 0.5;
  for (std::size_t q = 0; q < ref.size(); ++q) {
    const Vec2& p = ref.points[q];
    out.points.push_back(a + p.x() * (b - a) + p.y() * (c - a));
    out.weights.push_back(ref.weights[q] * scale);
  }
}

// ---------------------------------------------------------------------------
// Star sub-triangulation: fan of triangles (star_center, v_i, v_{i+1}).
// ---------------------------------------------------------------------------
struct SubTriangulation {
  Vec2 center;
  std::vector<std::array<Vec2, 3>> triangles;
};

inline SubTriangulation sub_triangulate(const Polygon& p) {
  SubTriangulation st;
  st.center = p.star_center();
  st.triangles.reserve(static_cast<std::size_t>(p.n()));
  for (int i = 0; i < p.n(); ++i) {
    std::array<Vec2, 3> tri = {st.center, p.vertex(i), p.vertex(i + 1)};
    if (triangle_area(tri[0], tri[1], tri[2]) <= 0.0)
      throw NotStarShaped("sub-triangulation produced a non-positive triangle");
    st.triangles.push_back(tri);
  }
  return st;
}

// Gauss rule over the whole polygon via its sub-triangulation.
inline QuadratureRule polygon_gauss_rule(const Polygon& p, int order) {
  const QuadratureRule ref = gauss_triangle(order);
  const SubTriangulation st = sub_triangulate(p);
  QuadratureRule out;
  out.points.reserve(ref.size() * st.triangles.size());
  out.weights.reserve(ref.size() * st.triangles.size());
  for (const auto& t : st.triangles) append_mapped_rule(ref, t[0], t[1], t[2], out);
  return out;
}

// ---------------------------------------------------------------------------
// Interior sampling lattice on the reference triangle: a triangular lattice
// in shifted barycentric coordinates, warped toward the boundary opposite
// the third coordinate by a cosine profile. All points are strictly
// interior and pairwise distinct.
// ---------------------------------------------------------------------------
inline std::vector<Vec2> interior_lattice(int n) {
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>((n + 1) * (n + 2) / 2));
  const double eps = 1e-12;
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n - i; ++j) {
      const int k = n - i - j;
      const double x0 = (i + 0.5) / (n + 1.5);
      const double y0 = (j + 0.5) / (n + 1.5);
      const double z0 = (k + 0.5) / (n + 1.5);
      const double z = 1.0 - std::cos(M_PI * z0 / 2.0);
      const double s = (1.0 - z) / (1.0 - z0 + eps);
      pts.emplace_back(s * x0, s * y0);
    }
  }
  return pts;
}

// Interior sample rule over a polygon: the lattice mapped onto every
// sub-triangle, each point carrying the uniform share of its triangle's
// area. Integrals of smooth fields are approximated by weighted sums.
inline QuadratureRule polygon_sample_points(const Polygon& p, int n) {
  const std::vector<Vec2> ref = interior_lattice(n);
  const SubTriangulation st = sub_triangulate(p);
  QuadratureRule out;
  out.points.reserve(ref.size() * st.triangles.size());
  out.weights.reserve(ref.size() * st.triangles.size());
  for (const auto& t : st.triangles) {
    const double w = triangle_area(t[0], t[1], t[2]) / static_cast<double>(ref.size());
    for (const Vec2& q : ref) {
      out.points.push_back(t[0] + q.x() * (t[1] - t[0]) + q.y() * (t[2] - t[0]));
      out.weights.push_back(w);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Edge rule: `count` parameters in (0,1), exponentially clustered toward
// both endpoints (never touching them), with trapezoid-type weights. The
// symmetry of nodes and weights makes the rule exact for linear traces.
// ---------------------------------------------------------------------------
inline EdgeRule edge_points_exponential(int count) {
  if (count < 2 || count % 2 != 0)
    throw ValidationError("edge rule needs an even count >= 2");
  const int half = count / 2;
  EdgeRule r;
  r.params.resize(static_cast<std::size_t>(count));
  const double rh = std::sqrt(static_cast<double>(half));
  for (int k = 1; k <= half; ++k) {
    const double t = 0.5 * std::exp(-4.0 * (rh - std::sqrt(static_cast<double>(k))) / rh);
    r.params[static_cast<std::size_t>(k - 1)] = t;
    r.params[static_cast<std::size_t>(count - k)] = 1.0 - t;
  }
  r.weights.resize(static_cast<std::size_t>(count));
  double prev_boundary = 0.0;
  for (int i = 0; i < count; ++i) {
    const double next_boundary =
        i + 1 < count ? 0.5 * (r.params[static_cast<std::size_t>(i)] +
                               r.params[static_cast<std::size_t>(i + 1)])
                      : 1.0;
    r.weights[static_cast<std::size_t>(i)] = next_boundary - prev_boundary;
    prev_boundary = next_boundary;
  }
  return r;
}

// Physical quadrature along edge i of a polygon; weights carry the edge
// length, so sums approximate arc-length integrals.
inline QuadratureRule edge_quadrature(const Polygon& p, int i, int count) {
  const EdgeRule ref = edge_points_exponential(count);
  const Vec2 a = p.vertex(i);
  const Vec2 e = p.edge_vector(i);
  const double len = p.edge_length(i);
  QuadratureRule out;
  out.points.reserve(ref.params.size());
  out.weights.reserve(ref.params.size());
  for (std::size_t q = 0; q < ref.params.size(); ++q) {
    out.points.push_back(a + ref.params[q] * e);
    out.weights.push_back(ref.weights[q] * len);
  }
  return out;
}

}  // namespace navem
