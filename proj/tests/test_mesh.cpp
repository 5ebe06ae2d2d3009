#include <catch2/catch_amalgamated.hpp>

#include "navem/mesh.hpp"
#include "support.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

using namespace navem;
using Catch::Approx;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

Mesh unit_square_mesh() {
  return build_mesh({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {{0, 1, 2, 3}},
                    {0, 1, 2, 3});
}

}  // namespace

TEST_CASE("mesh assembly validates its inputs", "[mesh]") {
  std::vector<Vec2> square = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};

  CHECK_NOTHROW(unit_square_mesh());
  // index out of range
  CHECK_THROWS_AS(build_mesh(square, {{0, 1, 2, 7}}, {0, 1, 2, 3}),
                  ValidationError);
  // too-short cell
  CHECK_THROWS_AS(build_mesh(square, {{0, 1}}, {0, 1, 2, 3}),
                  ValidationError);
  // repeated vertex inside a cell
  CHECK_THROWS_AS(build_mesh(square, {{0, 1, 1, 2}}, {0, 1, 2}),
                  ValidationError);
  // vertex 3 dangles
  CHECK_THROWS_AS(build_mesh(square, {{0, 1, 2}}, {0, 1, 2}),
                  ValidationError);
  // boundary vertex 3 missing from the dirichlet list
  CHECK_THROWS_AS(build_mesh(square, {{0, 1, 2, 3}}, {0, 1, 2}),
                  ValidationError);
  // dirichlet index out of range
  CHECK_THROWS_AS(build_mesh(square, {{0, 1, 2, 3}}, {0, 1, 2, 3, 9}),
                  ValidationError);
  // degenerate cell geometry is wrapped into ValidationError
  std::vector<Vec2> collinear = {{0, 0}, {1, 0}, {2, 0}, {3, 0}};
  CHECK_THROWS_AS(build_mesh(collinear, {{0, 1, 2, 3}}, {0, 1, 2, 3}),
                  ValidationError);
  // an edge shared by three cells is non-manifold
  std::vector<Vec2> sheets = {{0, 0}, {1, 0}, {0.5, 1}, {0.5, -1}, {0.5, 2}};
  CHECK_THROWS_AS(build_mesh(sheets,
                             {{0, 1, 2}, {0, 1, 3}, {0, 1, 4}},
                             {0, 1, 2, 3, 4}),
                  ValidationError);

  // clockwise input is reoriented, not rejected
  Mesh cw = build_mesh(square, {{3, 2, 1, 0}}, {0, 1, 2, 3});
  CHECK(cw.polygons[0].area() == Approx(1.0));
  CHECK(cw.cells[0] == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("mesh metadata: dof map, mesh size, dirichlet flags", "[mesh]") {
  Mesh mesh = gen_triangle(3);
  CHECK(mesh.n_vertices() == 16);
  CHECK(mesh.n_cells() == 18);
  CHECK(mesh.h == Approx(std::sqrt(2.0) / 3.0));

  int flagged = 0;
  for (char d : mesh.dirichlet) flagged += d != 0;
  CHECK(flagged == 12);  // 4n boundary vertices

  DofMap dofs = build_dof_map(mesh);
  CHECK(dofs.n_free == 4);
  for (int f = 0; f < dofs.n_free; ++f) {
    const int g = dofs.free_to_global[f];
    CHECK(dofs.global_to_free[g] == f);
    CHECK(!mesh.dirichlet[g]);
  }
  for (int v = 0; v < mesh.n_vertices(); ++v)
    if (mesh.dirichlet[v]) CHECK(dofs.global_to_free[v] == -1);
}

TEST_CASE("mesh JSON save/load round-trips byte-exactly", "[mesh]") {
  Mesh mesh = gen_quad_convex_concave(4, 0.15, 77);
  const std::string path_a = tmp_path("navem_mesh_a.json");
  const std::string path_b = tmp_path("navem_mesh_b.json");
  save_mesh(mesh, path_a);
  Mesh loaded = load_mesh(path_a);
  save_mesh(loaded, path_b);

  std::ifstream fa(path_a), fb(path_b);
  std::string text_a((std::istreambuf_iterator<char>(fa)),
                     std::istreambuf_iterator<char>());
  std::string text_b((std::istreambuf_iterator<char>(fb)),
                     std::istreambuf_iterator<char>());
  CHECK(text_a == text_b);
  CHECK(!text_a.empty());

  REQUIRE(loaded.n_vertices() == mesh.n_vertices());
  REQUIRE(loaded.n_cells() == mesh.n_cells());
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    CHECK(loaded.vertices[v].x() == mesh.vertices[v].x());
    CHECK(loaded.vertices[v].y() == mesh.vertices[v].y());
    CHECK(loaded.dirichlet[v] == mesh.dirichlet[v]);
  }
  CHECK(loaded.cells == mesh.cells);
  std::remove(path_a.c_str());
  std::remove(path_b.c_str());
}

TEST_CASE("mesh JSON loader rejects malformed input", "[mesh]") {
  CHECK_THROWS_AS(mesh_from_json_text("not json at all"), ParseError);
  CHECK_THROWS_AS(mesh_from_json_text("{\"vertices\": []}"), ParseError);
  CHECK_THROWS_AS(
      mesh_from_json_text("{\"vertices\": [[0,0],[1,0],[0,1]],"
                          " \"cells\": [[0,1,2]],"
                          " \"dirichlet_vertices\": \"oops\"}"),
      ParseError);
  CHECK_THROWS_AS(
      mesh_from_json_text("{\"vertices\": [[0,0,3]],"
                          " \"cells\": [[0,1,2]],"
                          " \"dirichlet_vertices\": []}"),
      ParseError);
  CHECK_THROWS_AS(load_mesh(tmp_path("navem_no_such_mesh.json")), ParseError);
  // structurally valid JSON with a geometric defect raises ValidationError
  CHECK_THROWS_AS(
      mesh_from_json_text("{\"vertices\": [[0,0],[1,0],[2,0]],"
                          " \"cells\": [[0,1,2]],"
                          " \"dirichlet_vertices\": [0,1,2]}"),
      ValidationError);
}

TEST_CASE("quad generator carves concave and hanging-node cells", "[mesh]") {
  Mesh mesh = gen_quad_convex_concave(4, 0.0, 1);
  CHECK(mesh.n_cells() == 16);
  CHECK(mesh.n_vertices() == 25);

  int concave = 0;
  for (const Polygon& p : mesh.polygons) concave += !p.cls().convex;
  // one carved lower-left cell per 2x2 block
  CHECK(concave == 4);

  // blocks alternate: (0,0) and (1,1) pull by 0.55/n (strictly reflex),
  // (1,0) and (0,1) pull by exactly 0.5/n (hanging node, straight angle).
  const double h = 0.25;
  const Polygon& reflex_cell = mesh.polygons[0];  // cell (0,0)
  const Polygon& hanging_cell = mesh.polygons[2];  // cell (2,0)
  CHECK(!reflex_cell.cls().convex);
  CHECK(!hanging_cell.cls().convex);
  // pulled vertex sits at index 2 of the lower-left cell of its block
  CHECK(reflex_cell.interior_angle(2) > M_PI + 0.05);
  CHECK(hanging_cell.interior_angle(2) == Approx(M_PI).margin(1e-9));
  CHECK(reflex_cell.vertex(2).x() == Approx(h - 0.55 * h));
  CHECK(hanging_cell.vertex(2).x() == Approx(3 * h - 0.5 * h));

  // boundary vertices stay on the unit-square boundary
  for (int v = 0; v < mesh.n_vertices(); ++v)
    if (mesh.dirichlet[v]) {
      const Vec2& x = mesh.vertices[v];
      const bool on_edge = x.x() == 0.0 || x.x() == 1.0 || x.y() == 0.0 ||
                           x.y() == 1.0;
      CHECK(on_edge);
    }

  CHECK_THROWS_AS(gen_quad_convex_concave(0, 0.0, 1), ValidationError);
  CHECK_THROWS_AS(gen_quad_convex_concave(4, -0.1, 1), ValidationError);
}

TEST_CASE("quad generator jitter is seed-deterministic", "[mesh]") {
  Mesh a = gen_quad_convex_concave(5, 0.2, 42);
  Mesh b = gen_quad_convex_concave(5, 0.2, 42);
  Mesh c = gen_quad_convex_concave(5, 0.2, 43);
  CHECK(mesh_to_json_text(a) == mesh_to_json_text(b));
  CHECK(mesh_to_json_text(a) != mesh_to_json_text(c));

  // jitter moved at least one interior vertex, but never a boundary one
  Mesh flat = gen_quad_convex_concave(5, 0.0, 42);
  bool moved = false;
  for (int v = 0; v < a.n_vertices(); ++v) {
    const double shift = (a.vertices[v] - flat.vertices[v]).norm();
    if (a.dirichlet[v]) {
      CHECK(shift == 0.0);
    } else {
      CHECK(shift <= 0.2 / 5.0 + 1e-15);
      moved = moved || shift > 0.0;
    }
  }
  CHECK(moved);
}

TEST_CASE("triangle generator builds a criss-cross grid", "[mesh]") {
  Mesh mesh = gen_triangle(4);
  CHECK(mesh.n_cells() == 32);
  CHECK(mesh.n_vertices() == 25);
  double area = 0.0;
  for (const Polygon& p : mesh.polygons) {
    CHECK(p.n() == 3);
    CHECK(p.cls().convex);
    CHECK(p.area() == Approx(0.5 / 16.0));
    area += p.area();
  }
  CHECK(area == Approx(1.0));
  CHECK(mesh.h == Approx(std::sqrt(2.0) / 4.0));
  CHECK_THROWS_AS(gen_triangle(0), ValidationError);
}
