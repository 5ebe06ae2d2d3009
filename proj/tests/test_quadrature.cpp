#include <catch2/catch_amalgamated.hpp>

#include "navem/quadrature.hpp"
#include "support.hpp"

using namespace navem;
using Catch::Approx;

namespace {

double factorial(int k) { return k == 0 ? 1.0 : k * factorial(k - 1); }

// Exact monomial moment over the reference triangle.
double tri_moment(int a, int b) {
  return factorial(a) * factorial(b) / factorial(a + b + 2);
}

}  // namespace

TEST_CASE("gauss triangle rules: counts, weights, exact moments", "[quadrature]") {
  const std::array<std::pair<int, int>, 3> specs = {{{2, 3}, {4, 6}, {6, 12}}};
  for (auto [order, count] : specs) {
    const QuadratureRule r = gauss_triangle(order);
    CHECK(static_cast<int>(r.size()) == count);
    double wsum = 0.0;
    for (std::size_t q = 0; q < r.size(); ++q) {
      CHECK(r.weights[q] > 0.0);
      const Vec2& p = r.points[q];
      CHECK(p.x() > 0.0);
      CHECK(p.y() > 0.0);
      CHECK(p.x() + p.y() < 1.0);
      wsum += r.weights[q];
    }
    CHECK(wsum == Approx(0.5).epsilon(1e-14));
    for (int a = 0; a + 0 <= order; ++a)
      for (int b = 0; a + b <= order; ++b) {
        double s = 0.0;
        for (std::size_t q = 0; q < r.size(); ++q)
          s += r.weights[q] * std::pow(r.points[q].x(), a) * std::pow(r.points[q].y(), b);
        CHECK(s == Approx(tri_moment(a, b)).epsilon(5e-13));
      }
  }
  // x^2 y^2 moment, pinned directly.
  const QuadratureRule r6 = gauss_triangle(6);
  double s = 0.0;
  for (std::size_t q = 0; q < r6.size(); ++q)
    s += r6.weights[q] * r6.points[q].x() * r6.points[q].x() * r6.points[q].y() *
         r6.points[q].y();
  CHECK(std::abs(s - 1.0 / 180.0) <= 1e-15);

  CHECK_THROWS_AS(gauss_triangle(3), UnsupportedOrder);
  CHECK_THROWS_AS(gauss_triangle(8), UnsupportedOrder);
}

TEST_CASE("interior lattice: counts, first point, interiority", "[quadrature]") {
  const std::vector<Vec2> one = interior_lattice(0);
  REQUIRE(one.size() == 1);
  CHECK(one[0].x() == Approx(0.4330127).margin(1e-6));
  CHECK(one[0].y() == Approx(0.4330127).margin(1e-6));

  for (int n : {1, 5, 10, 13}) {
    const std::vector<Vec2> pts = interior_lattice(n);
    CHECK(static_cast<int>(pts.size()) == (n + 1) * (n + 2) / 2);
    double min_dist = 1e30;
    for (std::size_t a = 0; a < pts.size(); ++a) {
      CHECK(pts[a].x() > 0.0);
      CHECK(pts[a].y() > 0.0);
      CHECK(pts[a].x() + pts[a].y() < 1.0);
      for (std::size_t b = a + 1; b < pts.size(); ++b)
        min_dist = std::min(min_dist, (pts[a] - pts[b]).norm());
    }
    CHECK(min_dist > 1e-4);
  }
}

TEST_CASE("sub-triangulation and polygon rules", "[quadrature]") {
  const Polygon sq = Polygon::make({Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)});
  const SubTriangulation st = sub_triangulate(sq);
  CHECK(st.triangles.size() == 4);
  CHECK(st.center.x() == Approx(0.5));
  double asum = 0.0;
  for (const auto& t : st.triangles) asum += triangle_area(t[0], t[1], t[2]);
  CHECK(asum == Approx(1.0).epsilon(1e-14));

  const QuadratureRule samples = polygon_sample_points(sq, 10);
  CHECK(samples.size() == 264);
  double wsum = 0.0;
  for (std::size_t q = 0; q < samples.size(); ++q) {
    CHECK(sq.contains(samples.points[q]));
    wsum += samples.weights[q];
  }
  CHECK(wsum == Approx(sq.area()).epsilon(1e-13));

  // Gauss rule over a concave polygon integrates polynomials exactly.
  std::mt19937_64 rng(31);
  const Polygon p = testsupport::random_concave_quad(rng);
  const QuadratureRule r = polygon_gauss_rule(p, 4);
  double area = 0.0, mx = 0.0;
  for (std::size_t q = 0; q < r.size(); ++q) {
    area += r.weights[q];
    mx += r.weights[q] * r.points[q].x();
  }
  CHECK(area == Approx(p.area()).epsilon(1e-13));
  CHECK(mx / area == Approx(p.centroid().x()).epsilon(1e-12));
}

TEST_CASE("edge rule: symmetry, endpoint avoidance, linear exactness", "[quadrature]") {
  const EdgeRule r = edge_points_exponential(50);
  REQUIRE(r.params.size() == 50);
  double wsum = 0.0;
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(r.params[i] > 0.0);
    CHECK(r.params[i] < 1.0);
    CHECK(r.weights[i] > 0.0);
    CHECK(std::abs(r.params[i] + r.params[49 - i] - 1.0) <= 1e-15);
    CHECK(std::abs(r.weights[i] - r.weights[49 - i]) <= 1e-15);
    wsum += r.weights[i];
  }
  CHECK(wsum == Approx(1.0).epsilon(1e-14));
  // clustering: gaps grow monotonically from the endpoints toward the middle
  CHECK(r.params[1] - r.params[0] < 0.25 * (r.params[24] - r.params[23]));

  CHECK_THROWS_AS(edge_points_exponential(7), ValidationError);

  const Polygon sq = Polygon::make({Vec2(0, 0), Vec2(2, 0), Vec2(2, 1), Vec2(0, 1)});
  const QuadratureRule er = edge_quadrature(sq, 0, 50);
  double ig = 0.0;
  for (std::size_t q = 0; q < er.size(); ++q) ig += er.weights[q] * (3.0 * er.points[q].x() / 2.0 - 1.0);
  // trace g(s) = 3s - 1 on an edge of length 2: integral = 2 * 1/2
  CHECK(ig == Approx(1.0).epsilon(1e-13));
}
