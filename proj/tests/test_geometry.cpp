#include <catch2/catch_amalgamated.hpp>

#include "navem/geometry.hpp"
#include "support.hpp"

using namespace navem;
using testsupport::close;
using Catch::Approx;

namespace {

Polygon unit_square() {
  return Polygon::make({
      Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)});
}

}  // namespace

TEST_CASE("jet algebra matches finite differences", "[geometry]") {
  auto field = [](const Vec2& x) {
    Jet2 a = coord_jet(x, 0), b = coord_jet(x, 1);
    return sin(a * b + 0.3) * sqrt(sq(a) + sq(b) + 1.5) + cos(b) / (a + 2.0) - inv(b + 3.0);
  };
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  for (int k = 0; k < 25; ++k) {
    const Vec2 x(u(rng), u(rng));
    const Jet2 j = field(x);
    const auto f = [&](const Vec2& y) { return field(y).v; };
    const Vec2 gfd = testsupport::fd_grad(f, x);
    const Mat2 hfd = testsupport::fd_hessian(f, x);
    CHECK(close(j.g.x(), gfd.x(), 1e-7));
    CHECK(close(j.g.y(), gfd.y(), 1e-7));
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) CHECK(close(j.h(a, b), hfd(a, b), 1e-5));
  }
}

TEST_CASE("polygon validation and measures", "[geometry]") {
  Polygon sq = unit_square();
  CHECK(sq.area() == Approx(1.0));
  CHECK(sq.diameter() == Approx(std::sqrt(2.0)));
  CHECK(sq.centroid().x() == Approx(0.5));
  CHECK(sq.centroid().y() == Approx(0.5));
  CHECK(sq.cls() == PolygonClass{4, true});
  for (int i = 0; i < 4; ++i) CHECK(sq.interior_angle(i) == Approx(M_PI / 2));

  CHECK_THROWS_AS(Polygon::make({Vec2(0, 0), Vec2(1, 0)}), ValidationError);
  // clockwise
  CHECK_THROWS_AS(Polygon::make({Vec2(0, 0), Vec2(0, 1), Vec2(1, 0)}), ValidationError);
  // repeated vertex
  CHECK_THROWS_AS(Polygon::make({Vec2(0, 0), Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)}),
                  ValidationError);
  CHECK_THROWS_AS(Polygon::make({Vec2(0, 0), Vec2(0, 0), Vec2(0, 0)}), DegenerateGeometry);

  // U-shape: simple but with empty kernel.
  CHECK_THROWS_AS(Polygon::make({Vec2(0, 0), Vec2(3, 0), Vec2(3, 3), Vec2(2, 3), Vec2(2, 1),
                                 Vec2(1, 1), Vec2(1, 3), Vec2(0, 3)}),
                  NotStarShaped);

  // L-shape is star-shaped; its centroid is outside the kernel, so the
  // fallback search must find a valid center.
  Polygon ell = Polygon::make(
      {Vec2(0, 0), Vec2(2, 0), Vec2(2, 1), Vec2(1, 1), Vec2(1, 2), Vec2(0, 2)});
  CHECK(navem::detail::kernel_margin(ell.vertices(), ell.star_center()) > 0.0);
  CHECK_FALSE(ell.cls().convex);

  // Hanging node: interior angle exactly pi classifies as concave.
  Polygon hang = Polygon::make({Vec2(0, 0), Vec2(0.5, 0), Vec2(1, 0), Vec2(0, 1)});
  CHECK_FALSE(hang.cls().convex);
  CHECK(hang.interior_angle(1) == Approx(M_PI));
}

TEST_CASE("edge fields: signed distance, trimming, edge coordinate", "[geometry]") {
  Polygon sq = unit_square();
  const Jet2 d = signed_distance(sq, 0, Vec2(0.3, 0.4));
  CHECK(d.v == Approx(0.4));
  CHECK(d.g.x() == Approx(0.0).margin(1e-15));
  CHECK(d.g.y() == Approx(1.0));
  CHECK(d.h.norm() == 0.0);

  Polygon strip = Polygon::make({Vec2(-0.5, 0), Vec2(0.5, 0), Vec2(0.5, 1), Vec2(-0.5, 1)});
  const Jet2 t = trimming(strip, 0, Vec2(0.0, 0.0));
  CHECK(t.v == Approx(0.25));
  CHECK(t.h(0, 0) == Approx(-2.0));
  CHECK(t.h(1, 1) == Approx(-2.0));

  Polygon wide = Polygon::make({Vec2(0, 0), Vec2(2, 0), Vec2(2, 9), Vec2(0, 9)});
  const Jet2 s = curvilinear(wide, 0, Vec2(0.5, 7.3));
  CHECK(s.v == Approx(0.25));  // independent of the transverse coordinate
  CHECK(s.g.x() == Approx(0.5));
  CHECK(s.g.y() == Approx(0.0).margin(1e-15));
}

TEST_CASE("edge distance function values", "[geometry]") {
  Polygon strip = Polygon::make({Vec2(-0.5, 0), Vec2(0.5, 0), Vec2(0.5, 1), Vec2(-0.5, 1)});
  // d = 0.3, t = 0.16; frozen via scalar arithmetic:
  // inner = (sqrt(t^2 + d^4) - t)/2, psi = sqrt(d^2 + inner^2).
  const Jet2 psi = edge_adf(strip, 0, Vec2(0.0, 0.3), JetOrder::values_only);
  CHECK(psi.v == Approx(0.3002314976804588).epsilon(1e-12));

  // Exactly zero on the closed edge, positive elsewhere (value-only requests
  // are legal on the boundary).
  for (double s : {0.0, 0.25, 0.5, 0.99, 1.0}) {
    const Vec2 x = strip.vertex(0) + s * strip.edge_vector(0);
    CHECK(edge_adf(strip, 0, x, JetOrder::values_only).v <= 1e-15);
  }
  CHECK(edge_adf(strip, 0, Vec2(0.7, 0.0), JetOrder::values_only).v > 0.0);   // past the end
  CHECK(edge_adf(strip, 0, Vec2(0.0, -0.2), JetOrder::values_only).v > 0.0);  // outside

  CHECK_THROWS_AS(edge_adf(strip, 0, Vec2(0.1, 0.0), JetOrder::with_gradient),
                  DerivativeSingular);
}

TEST_CASE("edge distance jets match finite differences", "[geometry]") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Polygon p = trial % 2 == 0 ? testsupport::random_convex_quad(rng)
                                     : testsupport::random_concave_quad(rng);
    for (const Vec2& x : testsupport::interior_points(p, rng, 4)) {
      for (int i = 0; i < p.n(); ++i) {
        const Jet2 j = edge_adf(p, i, x);
        const auto f = [&](const Vec2& y) {
          return edge_adf(p, i, y, JetOrder::values_only).v;
        };
        const Vec2 gfd = testsupport::fd_grad(f, x);
        CHECK(close(j.g.x(), gfd.x(), 1e-6));
        CHECK(close(j.g.y(), gfd.y(), 1e-6));
        CHECK(close(j.laplacian(), testsupport::fd_laplacian(f, x), 1e-4));
      }
    }
  }
}

TEST_CASE("bubble: boundary zero, interior positive, frozen center value", "[geometry]") {
  Polygon sq = unit_square();
  // All four edge fields equal sqrt(1/4 + 1/64) at the center; the blend
  // divides by sqrt(4): bubble = sqrt(17)/8/2.
  const double expected = std::sqrt(17.0) / 16.0;
  CHECK(bubble(sq, Vec2(0.5, 0.5), JetOrder::values_only).v == Approx(expected).epsilon(1e-13));

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 12; ++trial) {
    Polygon p = trial % 3 == 0   ? testsupport::random_convex_quad(rng)
                : trial % 3 == 1 ? testsupport::random_concave_quad(rng)
                                 : testsupport::hanging_node_quad(rng);
    for (const Vec2& x : testsupport::boundary_points(p, 20))
      CHECK(std::abs(bubble(p, x, JetOrder::values_only).v) <= 1e-12);
    for (int i = 0; i < p.n(); ++i)
      CHECK(std::abs(bubble(p, p.vertex(i), JetOrder::values_only).v) <= 1e-12);
    for (const Vec2& x : testsupport::interior_points(p, rng, 10))
      CHECK(bubble(p, x, JetOrder::values_only).v > 0.0);
    CHECK_THROWS_AS(bubble(p, p.edge_midpoint(0), JetOrder::with_gradient),
                    DerivativeSingular);
  }
}

TEST_CASE("bubble jets match finite differences", "[geometry]") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Polygon p = trial % 2 == 0 ? testsupport::random_convex_quad(rng)
                                     : testsupport::random_concave_quad(rng);
    for (const Vec2& x : testsupport::interior_points(p, rng, 5)) {
      const Jet2 j = bubble(p, x);
      const auto f = [&](const Vec2& y) { return bubble(p, y, JetOrder::values_only).v; };
      const Vec2 gfd = testsupport::fd_grad(f, x);
      CHECK(close(j.g.x(), gfd.x(), 1e-6));
      CHECK(close(j.g.y(), gfd.y(), 1e-6));
      CHECK(close(j.laplacian(), testsupport::fd_laplacian(f, x), 1e-4));
    }
  }
}

TEST_CASE("product-of-distances bubble on convex polygons", "[geometry]") {
  std::mt19937_64 rng(9);
  const Polygon p = testsupport::random_convex_quad(rng);
  for (const Vec2& x : testsupport::interior_points(p, rng, 10))
    CHECK(bubble(p, x, JetOrder::values_only, BubbleKind::distance_product).v > 0.0);
  for (const Vec2& x : testsupport::boundary_points(p, 10))
    CHECK(std::abs(bubble(p, x, JetOrder::values_only, BubbleKind::distance_product).v) <=
          1e-13);
  for (const Vec2& x : testsupport::interior_points(p, rng, 4)) {
    const Jet2 j = bubble(p, x, JetOrder::with_hessian, BubbleKind::distance_product);
    const auto f = [&](const Vec2& y) {
      return bubble(p, y, JetOrder::values_only, BubbleKind::distance_product).v;
    };
    const Vec2 gfd = testsupport::fd_grad(f, x);
    CHECK(close(j.g.x(), gfd.x(), 1e-6));
    CHECK(close(j.g.y(), gfd.y(), 1e-6));
  }
}

TEST_CASE("transfinite interpolant: Lagrange, unity, boundary trace", "[geometry]") {
  Polygon sq = unit_square();
  for (int j = 0; j < 4; ++j)
    CHECK(transfinite(sq, j, Vec2(0.5, 0.5), JetOrder::values_only).v == Approx(0.25));

  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 12; ++trial) {
    Polygon p = trial % 3 == 0   ? testsupport::random_convex_quad(rng)
                : trial % 3 == 1 ? testsupport::random_concave_quad(rng)
                                 : testsupport::random_star_ngon(rng, 5 + trial % 3);
    const int m = p.n();
    // Exact Kronecker delta at the vertices.
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k) {
        const double v = transfinite(p, j, p.vertex(k), JetOrder::values_only).v;
        CHECK(v == (j == k ? 1.0 : 0.0));
      }
    // Piecewise-linear trace along every edge.
    for (int i = 0; i < m; ++i)
      for (double s : {0.21, 0.5, 0.83}) {
        const Vec2 x = p.vertex(i) + s * p.edge_vector(i);
        for (int j = 0; j < m; ++j) {
          const double v = transfinite(p, j, x, JetOrder::values_only).v;
          CHECK(std::abs(v - edge_trace(m, i, j, curvilinear(p, i, x).v)) <= 1e-12);
        }
      }
    // Partition of unity (values and derivatives) in the interior.
    for (const Vec2& x : testsupport::interior_points(p, rng, 5)) {
      Jet2 sum = Jet2::constant(0.0);
      for (int j = 0; j < m; ++j) sum = sum + transfinite(p, j, x);
      CHECK(sum.v == Approx(1.0).epsilon(1e-12));
      CHECK(sum.g.norm() <= 1e-10);
      CHECK(sum.h.norm() <= 1e-8);
    }
    CHECK_THROWS_AS(transfinite(p, 0, p.edge_midpoint(0), JetOrder::with_gradient),
                    DerivativeSingular);
  }
}

TEST_CASE("transfinite jets match finite differences", "[geometry]") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 8; ++trial) {
    const Polygon p = trial % 2 == 0 ? testsupport::random_convex_quad(rng)
                                     : testsupport::random_concave_quad(rng);
    for (const Vec2& x : testsupport::interior_points(p, rng, 4)) {
      for (int j = 0; j < p.n(); ++j) {
        const Jet2 jj = transfinite(p, j, x);
        const auto f = [&](const Vec2& y) {
          return transfinite(p, j, y, JetOrder::values_only).v;
        };
        const Vec2 gfd = testsupport::fd_grad(f, x);
        CHECK(close(jj.g.x(), gfd.x(), 1e-6));
        CHECK(close(jj.g.y(), gfd.y(), 1e-6));
        CHECK(close(jj.laplacian(), testsupport::fd_laplacian(f, x), 1e-4));
      }
    }
  }
}

TEST_CASE("boundary operator: trace preserved, Laplacian expansion", "[geometry]") {
  std::mt19937_64 rng(19);
  const Polygon p = testsupport::random_concave_quad(rng);
  auto v_field = [](const Vec2& x) {
    return sin(coord_jet(x, 0) * 1.3 + coord_jet(x, 1) * 0.7 + 0.2);
  };
  for (const Vec2& x : testsupport::interior_points(p, rng, 6)) {
    const Jet2 b = bubble(p, x);
    const Jet2 v = v_field(x);
    const Jet2 psi = transfinite(p, 1, x);
    const Jet2 lifted = apply_boundary_operator(b, v, psi);
    // product rule expansion of the Laplacian
    const double lap = b.v * v.laplacian() + 2.0 * b.g.dot(v.g) + v.v * b.laplacian() +
                       psi.laplacian();
    CHECK(lifted.laplacian() == Approx(lap).margin(1e-10));
    const auto f = [&](const Vec2& y) {
      return bubble(p, y, JetOrder::values_only).v * v_field(y).v +
             transfinite(p, 1, y, JetOrder::values_only).v;
    };
    const Vec2 gfd = testsupport::fd_grad(f, x);
    CHECK(close(lifted.g.x(), gfd.x(), 1e-6));
    CHECK(close(lifted.g.y(), gfd.y(), 1e-6));
  }
  // On the boundary the lifted field keeps the interpolant's trace.
  for (const Vec2& x : testsupport::boundary_points(p, 8)) {
    const double got = bubble(p, x, JetOrder::values_only).v * 3.7 +
                       transfinite(p, 1, x, JetOrder::values_only).v;
    CHECK(std::abs(got - transfinite(p, 1, x, JetOrder::values_only).v) <= 1e-11);
  }
}

TEST_CASE("reference map: round trip, diameter, anchor alignment", "[geometry]") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 15; ++trial) {
    Polygon p = trial % 3 == 0   ? testsupport::random_convex_quad(rng)
                : trial % 3 == 1 ? testsupport::random_concave_quad(rng)
                                 : testsupport::random_star_ngon(rng, 5 + trial % 3);
    // Shift/scale into an arbitrary physical position.
    std::vector<Vec2> verts;
    for (const Vec2& v : p.vertices()) verts.push_back(3.5 * v + Vec2(12.0, -4.0));
    p = Polygon::make(verts);
    for (int anchor = 0; anchor < p.n(); ++anchor) {
      const ReferenceMap map = reference_map(p, anchor);
      const Polygon ref = normalized(p, map);
      CHECK(ref.diameter() == Approx(2.0).epsilon(1e-12));
      const Vec2 va = ref.vertex(anchor);
      CHECK(std::abs(va.y()) <= 1e-13);
      CHECK(va.x() > 0.0);
      for (int i = 0; i < p.n(); ++i) {
        const Vec2 back = map.to_phys(map.to_ref(p.vertex(i)));
        CHECK((back - p.vertex(i)).norm() <= 1e-12 * p.diameter());
      }
      // Chain rule: gradient of f(map(x)) = scale * rot^T * grad f.
      auto fhat = [](const Vec2& z) { return std::sin(1.1 * z.x()) * std::cos(0.4 * z.y()); };
      const Vec2 x = p.star_center();
      const Vec2 z = map.to_ref(x);
      const Vec2 ghat(1.1 * std::cos(1.1 * z.x()) * std::cos(0.4 * z.y()),
                      -0.4 * std::sin(1.1 * z.x()) * std::sin(0.4 * z.y()));
      const Vec2 gphys = map.grad_to_phys(ghat);
      const auto composite = [&](const Vec2& y) { return fhat(map.to_ref(y)); };
      const Vec2 gfd = testsupport::fd_grad(composite, x);
      CHECK(close(gphys.x(), gfd.x(), 1e-7));
      CHECK(close(gphys.y(), gfd.y(), 1e-7));
    }
  }
}
