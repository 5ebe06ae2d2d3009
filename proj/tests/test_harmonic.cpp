#include <catch2/catch_amalgamated.hpp>

#include <complex>
#include <filesystem>
#include <fstream>
#include <random>

#include "navem/harmonic.hpp"
#include "support.hpp"

using namespace navem;
using namespace testsupport;
using Catch::Approx;

namespace {

// The default fit takes a moment; share one instance across the cases.
const PhiModel& fitted_phi() {
  static const PhiModel model = fit_phi();
  return model;
}

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("pole ladder clusters at the singular corner", "[harmonic]") {
  const VecX z = phi_pole_positions(80);
  REQUIRE(z.size() == 80);
  CHECK(z[79] == 3.0);  // exp(0) == 1 exactly, no tolerance needed
  CHECK(z[0] - 1.0 < 1e-13);
  CHECK(z[0] > 1.0);
  for (int a = 1; a < 80; ++a) CHECK(z[a] > z[a - 1]);
  // the clustering law, spot-checked
  CHECK(z[39] == Approx(1.0 + 2.0 * std::exp(-4.0 * (std::sqrt(80.0) -
                                                     std::sqrt(40.0)))));
}

TEST_CASE("boundary fit reproduces the tent data", "[harmonic]") {
  const PhiModel& m = fitted_phi();
  CHECK(m.max_residual <= 1e-3);
  CHECK(m.max_residual < 1e-10);  // root-exponential clustering is accurate
  CHECK(m.pole_coeff.size() == 80);
  CHECK(m.poly_coeff.size() == 41);

  // data vanishes at the far corners; the peak value sits at (1,0)
  for (const Vec2 c : {Vec2(-1, -1), Vec2(-1, 1), Vec2(1, 1), Vec2(1, -1)})
    CHECK(std::abs(m.eval(c, JetOrder::values_only).v) <= 1e-4);
  CHECK(m.eval(Vec2(1, 0), JetOrder::values_only).v == Approx(1.0).margin(1e-3));
  CHECK(m.eval(Vec2(1, 0.5), JetOrder::values_only).v ==
        Approx(0.5).margin(1e-6));
  CHECK(m.eval(Vec2(1, -0.25), JetOrder::values_only).v ==
        Approx(0.75).margin(1e-6));

  // sweep off-sample boundary points on all four sides
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const double s = (k + 0.37) / 200.0;
    const double d = 8.0 * s <= 4.0 ? 8.0 * s : 8.0 * s - 8.0;
    const double ad = std::abs(d);
    Vec2 q;
    if (ad <= 1.0) q = Vec2(1.0, ad);
    else if (ad <= 3.0) q = Vec2(2.0 - ad, 1.0);
    else q = Vec2(-1.0, 4.0 - ad);
    if (d < 0.0) q.y() = -q.y();
    worst = std::max(worst, std::abs(m.eval(q, JetOrder::values_only).v -
                                     phi_boundary_data(q)));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("fit rejects an insufficient basis", "[harmonic]") {
  CHECK_THROWS_AS(fit_phi(4, 2, 200), FitDiverged);
  CHECK_THROWS_AS(fit_phi(0, 4, 200), ValidationError);
  CHECK_THROWS_AS(fit_phi(8, 4, 4), ValidationError);
}

TEST_CASE("model jets are harmonic and match finite differences",
          "[harmonic]") {
  const PhiModel& m = fitted_phi();
  auto value = [&](const Vec2& y) {
    return m.eval(y, JetOrder::values_only).v;
  };
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  for (int k = 0; k < 50; ++k) {
    const Vec2 x(u(rng), u(rng));
    const Jet2 j = m.eval(x, JetOrder::with_hessian);
    CHECK(j.h.trace() == 0.0);  // trace-free by construction
    CHECK(j.h(0, 1) == j.h(1, 0));
    const Vec2 fg = fd_grad(value, x);
    CHECK((fg - j.g).norm() <= 1e-8 * (1.0 + j.g.norm()));
    CHECK(std::abs(fd_laplacian(value, x, 1e-4)) <=
          1e-5 * (1.0 + std::abs(j.h(0, 0))));
    const Mat2 fh = fd_hessian(value, x);
    CHECK((fh - j.h).norm() <= 1e-5 * (1.0 + j.h.norm()));
  }
}

TEST_CASE("transplants pin the singular point to the target vertex",
          "[harmonic]") {
  const PhiModel& m = fitted_phi();
  std::mt19937_64 rng(9001);
  std::vector<Polygon> shapes;
  shapes.push_back(Polygon::make({{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}));
  shapes.push_back(Polygon::make({{0, 0}, {1, 0}, {0.45, 0.45}, {0, 1}}));
  shapes.push_back(Polygon::make({{0, 0}, {0.5, 0}, {1, 0}, {1, 1}, {0, 1}}));
  for (int n : {5, 6, 8}) shapes.push_back(random_star_ngon(rng, n));
  shapes.push_back(random_concave_quad(rng));
  shapes.push_back(hanging_node_quad(rng));

  for (const Polygon& p : shapes) {
    for (int v = 0; v < p.n(); ++v) {
      const PhiMap map = make_phi_map(m, p, v);
      // the affine map sends the singular point (z = 1) to the vertex exactly
      const Complex image = map.a * (Complex(1.0, 0.0) - 1.0) +
                            Complex(map.vertex.x(), map.vertex.y());
      CHECK((Vec2(image.real(), image.imag()) - p.vertex(v)).norm() <= 1e-12);
      CHECK(map.halvings <= 6);
      CHECK(std::abs(map.a) > 0.0);
      // every resolvable pole lands strictly outside the element
      const Vec2 dir(map.a.real() / std::abs(map.a),
                     map.a.imag() / std::abs(map.a));
      for (int a = 0; a < m.n_poles; ++a) {
        const double t = (m.poles[a] - 1.0) * std::abs(map.a);
        if (t < 1e-12 * p.diameter()) continue;
        const Vec2 pt = p.vertex(v) + t * dir;
        CHECK_FALSE(p.contains(pt));
        CHECK(p.distance_to_boundary(pt) > 0.0);
      }
      // deterministic
      const PhiMap again = make_phi_map(m, p, v);
      CHECK(again.a == map.a);
      CHECK(again.halvings == map.halvings);
    }
  }

  // hanging node: outward direction is the outward edge normal
  const Polygon hn = Polygon::make({{0, 0}, {0.5, 0}, {1, 0}, {1, 1}, {0, 1}});
  const PhiMap hm = make_phi_map(m, hn, 1);
  const Complex unit = hm.a / std::abs(hm.a);
  CHECK(unit.real() == Approx(0.0).margin(1e-12));
  CHECK(unit.imag() == Approx(-1.0).margin(1e-12));
}

TEST_CASE("transplanted jets stay harmonic inside elements", "[harmonic]") {
  const PhiModel& m = fitted_phi();
  std::mt19937_64 rng(52);
  const std::vector<Polygon> shapes = {
      Polygon::make({{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}),
      random_concave_quad(rng), random_star_ngon(rng, 6)};
  for (const Polygon& p : shapes) {
    for (int v = 0; v < p.n(); ++v) {
      const PhiMap map = make_phi_map(m, p, v);
      auto value = [&](const Vec2& y) {
        return transformed_phi(m, map, y, JetOrder::values_only).v;
      };
      for (const Vec2& x : interior_points(p, rng, 8)) {
        const Jet2 j = transformed_phi(m, map, x, JetOrder::with_hessian);
        CHECK(j.h.trace() == 0.0);
        const Vec2 fg = fd_grad(value, x);
        CHECK((fg - j.g).norm() <= 1e-7 * (1.0 + j.g.norm()));
        CHECK(std::abs(fd_laplacian(value, x, 1e-4)) <=
              1e-5 * (1.0 + std::abs(j.h(0, 0))));
      }
    }
  }
}

TEST_CASE("expansion basis spans the expected members", "[harmonic]") {
  HarmonicSpace space;
  space.phi = fitted_phi();
  REQUIRE(space.degree == 20);
  CHECK(space.dim() == 44);

  const Polygon p = Polygon::make({{-1, -1}, {1, -1}, {1, 1}, {-1, 1}});
  const HarmonicContext ctx = harmonic_context(space, p, 0);
  CHECK(ctx.anchor == 0);
  CHECK((ctx.maps[0].vertex - p.vertex(3)).norm() == 0.0);
  CHECK((ctx.maps[1].vertex - p.vertex(0)).norm() == 0.0);
  CHECK((ctx.maps[2].vertex - p.vertex(1)).norm() == 0.0);

  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-0.85, 0.85);
  std::vector<Jet2> out;
  for (int k = 0; k < 50; ++k) {
    const Vec2 x(u(rng), u(rng));
    harmonic_basis_eval(space, ctx, x, JetOrder::with_hessian, out);
    REQUIRE(static_cast<int>(out.size()) == 44);

    // low-order members have closed forms
    CHECK(out[0].v == 1.0);
    CHECK(out[0].g.norm() == 0.0);
    CHECK(out[1].v == x.x());
    CHECK((out[1].g - Vec2(1, 0)).norm() == 0.0);
    CHECK(out[2].v == x.y());
    CHECK((out[2].g - Vec2(0, 1)).norm() == 0.0);
    CHECK(out[3].v == Approx(x.x() * x.x() - x.y() * x.y()).margin(1e-15));
    CHECK(out[3].g.x() == Approx(2.0 * x.x()).margin(1e-15));
    CHECK(out[3].g.y() == Approx(-2.0 * x.y()).margin(1e-15));
    CHECK(out[3].h(0, 0) == Approx(2.0).margin(1e-15));
    CHECK(out[3].h(1, 1) == Approx(-2.0).margin(1e-15));
    CHECK(out[4].v == Approx(2.0 * x.x() * x.y()).margin(1e-15));
    CHECK(out[4].g.x() == Approx(2.0 * x.y()).margin(1e-15));
    CHECK(out[4].g.y() == Approx(2.0 * x.x()).margin(1e-15));

    // every member is harmonic: exact trace and a finite-difference check
    for (const Jet2& j : out) CHECK(j.h.trace() == 0.0);
  }

  // finite-difference Laplacians across all members at a handful of points
  for (int k = 0; k < 6; ++k) {
    const Vec2 x(u(rng), u(rng));
    harmonic_basis_eval(space, ctx, x, JetOrder::with_hessian, out);
    for (int i = 0; i < 44; ++i) {
      auto value = [&](const Vec2& y) {
        std::vector<Jet2> jets;
        harmonic_basis_eval(space, ctx, y, JetOrder::values_only, jets);
        return jets[static_cast<std::size_t>(i)].v;
      };
      CHECK(std::abs(fd_laplacian(value, x, 1e-4)) <=
            1e-6 * (1.0 + out[static_cast<std::size_t>(i)].h.norm()));
    }
  }

  // gradient-space convention: member count drops only the constant
  CHECK(space.dim() - 1 == 2 * space.degree + 3);
}

TEST_CASE("phi model serialization round trips", "[harmonic]") {
  const PhiModel& m = fitted_phi();
  const std::string path = tmp_path("navem_phi_roundtrip.json");
  save_phi(m, path);
  const PhiModel back = load_phi(path);
  CHECK(back.n_poles == m.n_poles);
  CHECK(back.n_poly == m.n_poly);
  CHECK(back.max_residual == m.max_residual);
  REQUIRE(back.pole_coeff.size() == m.pole_coeff.size());
  for (int i = 0; i < m.pole_coeff.size(); ++i)
    CHECK(back.pole_coeff[i] == m.pole_coeff[i]);
  for (int i = 0; i < m.poly_coeff.size(); ++i)
    CHECK(back.poly_coeff[i] == m.poly_coeff[i]);
  // byte-exact second write
  CHECK(phi_to_json(back) == phi_to_json(m));
  // identical evaluation after the round trip
  const Vec2 x(0.31, -0.47);
  CHECK(back.eval(x, JetOrder::with_hessian).v ==
        m.eval(x, JetOrder::with_hessian).v);

  CHECK_THROWS_AS(phi_from_json("{not json"), ParseError);
  CHECK_THROWS_AS(phi_from_json("{}"), ParseError);
  CHECK_THROWS_AS(phi_from_json(R"({"schema": "navem-phi/9"})"),
                  SchemaVersionError);
  {
    nlohmann::json doc = nlohmann::json::parse(phi_to_json(m));
    doc["pole_coeff"].erase(0);
    CHECK_THROWS_AS(phi_from_json(doc.dump()), ParseError);
  }
  CHECK_THROWS_AS(load_phi(tmp_path("no_such_phi.json")), ParseError);
}
