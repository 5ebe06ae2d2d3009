#pragma once
// Polygonal meshes: JSON load/save, validation, and the two built-in
// generators (a quad grid with carved concave/hanging-node cells, and a
// criss-cross triangle grid). Cells are stored as validated Polygons so the
// rest of the library never touches raw index lists.

#include "navem/common.hpp"
#include "navem/geometry.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace navem {

struct Mesh {
  std::vector<Vec2> vertices;
  std::vector<std::vector<int>> cells;  // CCW vertex indices into `vertices`
  std::vector<char> dirichlet;          // per-vertex boundary flag
  std::vector<Polygon> polygons;        // one validated Polygon per cell
  double h = 0.0;                       // max cell diameter

  int n_vertices() const { return static_cast<int>(vertices.size()); }
  int n_cells() const { return static_cast<int>(cells.size()); }
};

// Maps mesh vertices to free (unconstrained) equation numbers.
struct DofMap {
  std::vector<int> global_to_free;  // -1 for Dirichlet vertices
  std::vector<int> free_to_global;
  int n_free = 0;
};

inline DofMap build_dof_map(const Mesh& mesh) {
  DofMap map;
  map.global_to_free.assign(mesh.vertices.size(), -1);
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    if (!mesh.dirichlet[v]) {
      map.global_to_free[v] = map.n_free++;
      map.free_to_global.push_back(v);
    }
  }
  return map;
}

namespace detail {

// Signed area of an index cycle (positive = CCW).
inline double cell_signed_area(const std::vector<Vec2>& verts,
                               const std::vector<int>& cell) {
  double twice = 0.0;
  const int m = static_cast<int>(cell.size());
  for (int i = 0; i < m; ++i) {
    const Vec2& a = verts[cell[i]];
    const Vec2& b = verts[cell[(i + 1) % m]];
    twice += a.x() * b.y() - a.y() * b.x();
  }
  return 0.5 * twice;
}

}  // namespace detail

// Validates raw arrays and assembles a Mesh. Orientation is normalised to
// CCW; every other defect is an error:
//   - indices out of range, cells with < 3 or repeated vertices,
//   - vertices referenced by no cell,
//   - an edge shared by more than two cells (non-manifold),
//   - a boundary-edge endpoint missing from the Dirichlet list,
//   - any cell rejected by Polygon::make (degenerate, not star-shaped, ...).
inline Mesh build_mesh(std::vector<Vec2> vertices,
                       std::vector<std::vector<int>> cells,
                       const std::vector<int>& dirichlet_ids) {
  const int nv = static_cast<int>(vertices.size());
  if (nv < 3) throw ValidationError("mesh needs at least 3 vertices");
  for (const Vec2& v : vertices)
    if (!v.allFinite()) throw ValidationError("mesh vertex is not finite");
  if (cells.empty()) throw ValidationError("mesh has no cells");

  std::vector<char> referenced(vertices.size(), 0);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    std::vector<int>& cell = cells[c];
    const std::string where = "cell " + std::to_string(c);
    if (cell.size() < 3)
      throw ValidationError(where + " has fewer than 3 vertices");
    std::vector<int> sorted = cell;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw ValidationError(where + " repeats a vertex");
    for (int idx : cell) {
      if (idx < 0 || idx >= nv)
        throw ValidationError(where + " references vertex " +
                              std::to_string(idx) + " out of range");
      referenced[idx] = 1;
    }
    if (detail::cell_signed_area(vertices, cell) < 0.0)
      std::reverse(cell.begin(), cell.end());
  }
  for (int v = 0; v < nv; ++v)
    if (!referenced[v])
      throw ValidationError("vertex " + std::to_string(v) +
                            " belongs to no cell");

  // Undirected edge incidence: 1 = boundary, 2 = interior.
  std::map<std::pair<int, int>, int> edge_count;
  for (const std::vector<int>& cell : cells) {
    const int m = static_cast<int>(cell.size());
    for (int i = 0; i < m; ++i) {
      int a = cell[i], b = cell[(i + 1) % m];
      if (a > b) std::swap(a, b);
      int& count = ++edge_count[{a, b}];
      if (count > 2)
        throw ValidationError("edge (" + std::to_string(a) + "," +
                              std::to_string(b) +
                              ") is shared by more than two cells");
    }
  }

  std::vector<char> dirichlet(vertices.size(), 0);
  for (int idx : dirichlet_ids) {
    if (idx < 0 || idx >= nv)
      throw ValidationError("dirichlet vertex " + std::to_string(idx) +
                            " out of range");
    dirichlet[idx] = 1;
  }
  for (const auto& [edge, count] : edge_count) {
    if (count != 1) continue;
    for (int endpoint : {edge.first, edge.second})
      if (!dirichlet[endpoint])
        throw ValidationError("boundary vertex " + std::to_string(endpoint) +
                              " is not in the dirichlet list");
  }

  Mesh mesh;
  mesh.vertices = std::move(vertices);
  mesh.cells = std::move(cells);
  mesh.dirichlet = std::move(dirichlet);
  mesh.polygons.reserve(mesh.cells.size());
  for (std::size_t c = 0; c < mesh.cells.size(); ++c) {
    std::vector<Vec2> pts;
    pts.reserve(mesh.cells[c].size());
    for (int idx : mesh.cells[c]) pts.push_back(mesh.vertices[idx]);
    try {
      mesh.polygons.push_back(Polygon::make(std::move(pts)));
    } catch (const Error& err) {
      throw ValidationError("cell " + std::to_string(c) +
                            " is invalid: " + err.what());
    }
    mesh.h = std::max(mesh.h, mesh.polygons.back().diameter());
  }
  return mesh;
}

// ---------------------------------------------------------------------------
// JSON I/O. Schema:
//   { "vertices": [[x,y],...], "cells": [[i,...],...],
//     "dirichlet_vertices": [i,...] }
// Floats are written with 17 significant digits so load->save round-trips
// byte-exactly.
// ---------------------------------------------------------------------------

inline Mesh mesh_from_json_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& err) {
    throw ParseError(std::string("mesh JSON is malformed: ") + err.what());
  }
  try {
    if (!doc.is_object() || !doc.contains("vertices") ||
        !doc.contains("cells") || !doc.contains("dirichlet_vertices"))
      throw ParseError(
          "mesh JSON needs 'vertices', 'cells' and 'dirichlet_vertices'");
    std::vector<Vec2> vertices;
    for (const auto& row : doc.at("vertices")) {
      if (!row.is_array() || row.size() != 2)
        throw ParseError("each vertex must be a [x, y] pair");
      vertices.emplace_back(row[0].get<double>(), row[1].get<double>());
    }
    std::vector<std::vector<int>> cells;
    for (const auto& row : doc.at("cells"))
      cells.push_back(row.get<std::vector<int>>());
    const auto dirichlet =
        doc.at("dirichlet_vertices").get<std::vector<int>>();
    return build_mesh(std::move(vertices), std::move(cells), dirichlet);
  } catch (const nlohmann::json::exception& err) {
    throw ParseError(std::string("mesh JSON has wrong types: ") + err.what());
  }
}

inline Mesh load_mesh(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open mesh file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return mesh_from_json_text(text.str());
}

inline std::string mesh_to_json_text(const Mesh& mesh) {
  std::ostringstream out;
  out << "{\n  \"vertices\": [\n";
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v)
    out << "    [" << fmt17(mesh.vertices[v].x()) << ", "
        << fmt17(mesh.vertices[v].y()) << "]"
        << (v + 1 < mesh.vertices.size() ? "," : "") << "\n";
  out << "  ],\n  \"cells\": [\n";
  for (std::size_t c = 0; c < mesh.cells.size(); ++c) {
    out << "    [";
    for (std::size_t i = 0; i < mesh.cells[c].size(); ++i)
      out << mesh.cells[c][i] << (i + 1 < mesh.cells[c].size() ? ", " : "");
    out << "]" << (c + 1 < mesh.cells.size() ? "," : "") << "\n";
  }
  out << "  ],\n  \"dirichlet_vertices\": [";
  bool first = true;
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    if (!mesh.dirichlet[v]) continue;
    out << (first ? "" : ", ") << v;
    first = false;
  }
  out << "]\n}\n";
  return out.str();
}

inline void save_mesh(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open mesh file for writing: " + path);
  out << mesh_to_json_text(mesh);
  if (!out) throw ParseError("failed writing mesh file: " + path);
}

// ---------------------------------------------------------------------------
// Generators.
// ---------------------------------------------------------------------------

// n x n unit-square quad grid with every interior 2x2 block carved: the
// block's centre vertex is pulled toward the lower-left cell's far corner.
// Blocks alternate between a pull of 0.55/n per axis (the lower-left cell
// becomes a genuinely concave quad) and exactly 0.5/n (the vertex lands on
// the cell diagonal, i.e. a hanging node with a straight angle). Interior
// vertices are then jittered by up to `perturbation`/n in norm; generation
// retries fresh jitters up to 20 times before giving up.
inline Mesh gen_quad_convex_concave(int n, double perturbation,
                                    std::uint64_t seed) {
  if (n < 1) throw ValidationError("quad grid needs n >= 1");
  if (perturbation < 0.0)
    throw ValidationError("perturbation must be non-negative");
  const double h = 1.0 / n;
  const auto vid = [n](int i, int j) { return j * (n + 1) + i; };

  std::vector<Vec2> base((n + 1) * (n + 1));
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i)
      base[vid(i, j)] = Vec2(static_cast<double>(i) / n,
                             static_cast<double>(j) / n);
  for (int bj = 0; 2 * bj + 1 < n; ++bj)
    for (int bi = 0; 2 * bi + 1 < n; ++bi) {
      const double pull = ((bi + bj) % 2 == 0) ? 0.55 * h : 0.5 * h;
      base[vid(2 * bi + 1, 2 * bj + 1)] -= Vec2(pull, pull);
    }

  std::vector<std::vector<int>> cells;
  cells.reserve(static_cast<std::size_t>(n) * n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      cells.push_back({vid(i, j), vid(i + 1, j), vid(i + 1, j + 1),
                       vid(i, j + 1)});
  std::vector<int> dirichlet_ids;
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i)
      if (i == 0 || i == n || j == 0 || j == n)
        dirichlet_ids.push_back(vid(i, j));

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int max_attempts = 20;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    std::vector<Vec2> verts = base;
    if (perturbation > 0.0) {
      for (int j = 1; j < n; ++j)
        for (int i = 1; i < n; ++i) {
          const double angle = 2.0 * M_PI * unit(rng);
          const double radius = perturbation * h * std::sqrt(unit(rng));
          verts[vid(i, j)] +=
              radius * Vec2(std::cos(angle), std::sin(angle));
        }
    }
    try {
      return build_mesh(std::move(verts), cells, dirichlet_ids);
    } catch (const Error&) {
      if (perturbation == 0.0) throw;  // deterministic; retrying is useless
    }
  }
  throw GenerationError("quad mesh generation failed after " +
                        std::to_string(max_attempts) + " jitter attempts");
}

// Criss-cross triangulation of the unit square: n x n cells, each split
// along a diagonal that alternates with (i + j) parity, giving 2 n^2
// triangles.
inline Mesh gen_triangle(int n) {
  if (n < 1) throw ValidationError("triangle grid needs n >= 1");
  const auto vid = [n](int i, int j) { return j * (n + 1) + i; };
  std::vector<Vec2> verts((n + 1) * (n + 1));
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i)
      verts[vid(i, j)] = Vec2(static_cast<double>(i) / n,
                              static_cast<double>(j) / n);
  std::vector<std::vector<int>> cells;
  cells.reserve(2 * static_cast<std::size_t>(n) * n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const int bl = vid(i, j), br = vid(i + 1, j);
      const int tr = vid(i + 1, j + 1), tl = vid(i, j + 1);
      if ((i + j) % 2 == 0) {
        cells.push_back({bl, br, tr});
        cells.push_back({bl, tr, tl});
      } else {
        cells.push_back({br, tr, tl});
        cells.push_back({br, tl, bl});
      }
    }
  std::vector<int> dirichlet_ids;
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i)
      if (i == 0 || i == n || j == 0 || j == n)
        dirichlet_ids.push_back(vid(i, j));
  return build_mesh(std::move(verts), std::move(cells), dirichlet_ids);
}

}  // namespace navem
