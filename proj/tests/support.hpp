#pragma once
// Shared helpers for the unit and acceptance suites: central finite
// differences and random polygon generators. Catch-free on purpose.

#include <cmath>
#include <random>
#include <vector>

#include "navem/geometry.hpp"

namespace testsupport {

using navem::Polygon;
using navem::Vec2;

// ---- central finite differences -------------------------------------------

template <class F>
Vec2 fd_grad(F&& f, const Vec2& x, double h = 1e-5) {
  Vec2 g;
  for (int k = 0; k < 2; ++k) {
    Vec2 e = Vec2::Zero();
    e[k] = h;
    g[k] = (f(x + e) - f(x - e)) / (2.0 * h);
  }
  return g;
}

template <class F>
double fd_laplacian(F&& f, const Vec2& x, double h = 3e-4) {
  const double c = f(x);
  double s = 0.0;
  for (int k = 0; k < 2; ++k) {
    Vec2 e = Vec2::Zero();
    e[k] = h;
    s += f(x + e) - 2.0 * c + f(x - e);
  }
  return s / (h * h);
}

template <class F>
navem::Mat2 fd_hessian(F&& f, const Vec2& x, double h = 2e-4) {
  navem::Mat2 H;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      Vec2 ea = Vec2::Zero(), eb = Vec2::Zero();
      ea[a] = h;
      eb[b] = h;
      if (a == b) {
        H(a, b) = (f(x + ea) - 2.0 * f(x) + f(x - ea)) / (h * h);
      } else {
        H(a, b) = (f(x + ea + eb) - f(x + ea - eb) - f(x - ea + eb) + f(x - ea - eb)) /
                  (4.0 * h * h);
      }
    }
  return H;
}

// Relative-ish comparison: absolute near zero, relative for large values.
inline bool close(double a, double b, double rel, double floor_scale = 1.0) {
  return std::abs(a - b) <= rel * (floor_scale + std::max(std::abs(a), std::abs(b)));
}

// ---- random polygons -------------------------------------------------------

// Star-shaped n-gon around the origin: sorted angles with a minimum gap,
// radii in [0.45, 1]. Retries until the polygon validates.
inline Polygon random_star_ngon(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> uang(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<double> urad(0.45, 1.0);
  for (;;) {
    std::vector<double> ang(static_cast<std::size_t>(n));
    for (auto& a : ang) a = uang(rng);
    std::sort(ang.begin(), ang.end());
    double min_gap = 2.0 * M_PI + ang.front() - ang.back();
    for (int i = 1; i < n; ++i)
      min_gap = std::min(min_gap, ang[static_cast<std::size_t>(i)] -
                                      ang[static_cast<std::size_t>(i - 1)]);
    if (min_gap < 0.3 * 2.0 * M_PI / n) continue;
    std::vector<Vec2> verts;
    verts.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const double r = urad(rng);
      verts.emplace_back(r * std::cos(ang[static_cast<std::size_t>(i)]),
                         r * std::sin(ang[static_cast<std::size_t>(i)]));
    }
    try {
      return Polygon::make(std::move(verts));
    } catch (const navem::Error&) {
      continue;
    }
  }
}

inline Polygon random_convex_quad(std::mt19937_64& rng) {
  for (;;) {
    Polygon p = random_star_ngon(rng, 4);
    if (p.cls().convex) return p;
  }
}

inline Polygon random_concave_quad(std::mt19937_64& rng) {
  for (;;) {
    Polygon p = random_star_ngon(rng, 4);
    if (!p.cls().convex) {
      // Skip near-degenerate reflex angles; they make finite differences
      // unreliable without being geometrically interesting.
      double worst = 0.0;
      for (int i = 0; i < 4; ++i)
        worst = std::max(worst, std::abs(p.interior_angle(i) - M_PI));
      if (worst > 0.15) return p;
    }
  }
}

// Triangle with an extra vertex placed exactly on one edge (interior angle
// pi there): geometrically a hanging node, classified as a concave quad.
inline Polygon hanging_node_quad(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.35, 0.65);
  for (;;) {
    Polygon tri = random_star_ngon(rng, 3);
    const Vec2 a = tri.vertex(0), b = tri.vertex(1), c = tri.vertex(2);
    const Vec2 h = a + u(rng) * (b - a);
    try {
      return Polygon::make({a, h, b, c});
    } catch (const navem::Error&) {
      continue;
    }
  }
}

// Interior sample points: convex combinations of the star center and
// boundary points, biased away from the boundary.
inline std::vector<Vec2> interior_points(const Polygon& p, std::mt19937_64& rng, int count,
                                         double pull = 0.6) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>(count));
  while (static_cast<int>(pts.size()) < count) {
    const int e = static_cast<int>(u01(rng) * p.n()) % p.n();
    const Vec2 q = p.vertex(e) + u01(rng) * p.edge_vector(e);
    const double t = pull * (0.15 + 0.85 * u01(rng));
    pts.push_back(p.star_center() + t * (q - p.star_center()));
  }
  return pts;
}

inline std::vector<Vec2> boundary_points(const Polygon& p, int per_edge) {
  std::vector<Vec2> pts;
  for (int i = 0; i < p.n(); ++i)
    for (int k = 0; k < per_edge; ++k) {
      const double s = (k + 0.5) / per_edge;
      pts.push_back(p.vertex(i) + s * p.edge_vector(i));
    }
  return pts;
}

}  // namespace testsupport
