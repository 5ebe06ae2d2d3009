#!/usr/bin/env python3
"""Generate the committed Voronoi fixture meshes under data/meshes/.

Seeds a deterministic point set in the unit square, Lloyd-relaxes it a few
times for cell quality, clips the Voronoi diagram to the square by mirroring
the generators across all four sides, and writes the polygon mesh in the
format read by navem::load_mesh.

Usage: python3 tools/make_voronoi_fixture.py
"""

import json
import math

import numpy as np
from scipy.spatial import Voronoi


def mirrored(points):
    """Original points plus their reflections across the four unit-square
    sides; the Voronoi cells of the originals are then exactly the clipped
    cells."""
    p = points
    left = p * [-1, 1]
    right = p * [-1, 1] + [2, 0]
    down = p * [1, -1]
    up = p * [1, -1] + [0, 2]
    return np.vstack([p, left, right, down, up])


def clipped_voronoi_cells(points):
    vor = Voronoi(mirrored(points))
    cells = []
    for i in range(len(points)):
        region = vor.regions[vor.point_region[i]]
        assert -1 not in region, "mirrored diagram must be bounded"
        poly = vor.vertices[region]
        # counterclockwise orientation
        area = 0.0
        for k in range(len(poly)):
            x0, y0 = poly[k]
            x1, y1 = poly[(k + 1) % len(poly)]
            area += x0 * y1 - x1 * y0
        if area < 0:
            poly = poly[::-1]
        cells.append(poly)
    return cells


def lloyd_step(points):
    centroids = []
    for poly in clipped_voronoi_cells(points):
        a = 0.0
        cx = 0.0
        cy = 0.0
        for k in range(len(poly)):
            x0, y0 = poly[k]
            x1, y1 = poly[(k + 1) % len(poly)]
            cross = x0 * y1 - x1 * y0
            a += cross
            cx += (x0 + x1) * cross
            cy += (y0 + y1) * cross
        a *= 0.5
        centroids.append((cx / (6 * a), cy / (6 * a)))
    return np.array(centroids)


def snap(v, tol=1e-9):
    """Pull coordinates lying numerically on the square border onto it."""
    out = []
    for c in v:
        if abs(c) < tol:
            c = 0.0
        elif abs(c - 1.0) < tol:
            c = 1.0
        out.append(c)
    return tuple(out)


def build_mesh(points):
    key_of = {}
    vertices = []

    def vertex_id(xy):
        key = (round(xy[0], 9), round(xy[1], 9))
        if key not in key_of:
            key_of[key] = len(vertices)
            vertices.append(snap(xy))
        return key_of[key]

    cells = []
    for poly in clipped_voronoi_cells(points):
        ids = []
        for xy in poly:
            vid = vertex_id(xy)
            if not ids or (vid != ids[-1] and vid != ids[0]):
                ids.append(vid)
        assert len(ids) >= 3
        cells.append(ids)

    boundary = [
        i
        for i, (x, y) in enumerate(vertices)
        if x in (0.0, 1.0) or y in (0.0, 1.0)
    ]
    return vertices, cells, boundary


def fmt17(x):
    return repr(float(x)) if x != int(x) else str(int(x))


def write_mesh(path, vertices, cells, boundary):
    lines = ['{', '  "vertices": [']
    for i, (x, y) in enumerate(vertices):
        comma = "," if i + 1 < len(vertices) else ""
        lines.append(f"    [{fmt17(x)}, {fmt17(y)}]{comma}")
    lines += ["  ],", '  "cells": [']
    for i, cell in enumerate(cells):
        comma = "," if i + 1 < len(cells) else ""
        lines.append("    [" + ", ".join(map(str, cell)) + "]" + comma)
    lines += ["  ],", '  "dirichlet_vertices": [' + ", ".join(map(str, boundary)) + "]", "}"]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
    print(f"{path}: {len(vertices)} vertices, {len(cells)} cells")
    hist = {}
    for cell in cells:
        hist[len(cell)] = hist.get(len(cell), 0) + 1
    print("  cell sizes:", dict(sorted(hist.items())))


def make(path, n_points, seed, lloyd_iters=2):
    rng = np.random.default_rng(seed)
    points = rng.random((n_points, 2))
    for _ in range(lloyd_iters):
        points = lloyd_step(points)
    vertices, cells, boundary = build_mesh(points)
    write_mesh(path, vertices, cells, boundary)


if __name__ == "__main__":
    make("data/meshes/voronoi_small.json", 24, seed=7)
    make("data/meshes/voronoi_med.json", 96, seed=11)
