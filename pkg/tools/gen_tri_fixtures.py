#!/usr/bin/env python3
"""Offline generator for the triangular plate-with-hole fixtures.

Builds Delaunay triangulations of jittered point sets over the quarter
plate (hole radius 1, half-width 5) plus the surrounding collar bands,
replaces each triangle by its centroid/area, tags kinds by region, and
writes node-cloud text files under src/pdmeshfree/data/.  The package
itself never generates triangular meshes; it only ingests these files.

Usage: python3 tools/gen_tri_fixtures.py [outdir]
"""

import math
import sys
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from pdmeshfree.pointcloud import NodeKind, PointCloud, save_cloud  # noqa: E402

A_HOLE = 1.0
L_PLATE = 5.0


def make_points(h, collar, rng):
    """Jittered grid over the padded quarter plate plus hole-arc rings."""
    pad = collar + h
    xs = np.arange(-0.0, L_PLATE + pad, h)
    pts = []
    for x in xs:
        for y in xs:
            r = math.hypot(x, y)
            if r < A_HOLE - pad:
                continue
            jitter = rng.uniform(-0.25 * h, 0.25 * h, size=2)
            p = np.array([x, y]) + jitter
            p = np.clip(p, 0.0, None)
            pts.append(p)
    # rings hugging the hole so triangle edges follow the arc
    for rad in (A_HOLE - 0.5 * h, A_HOLE, A_HOLE + 0.5 * h):
        if rad <= 0:
            continue
        n_arc = max(8, int(round(0.5 * math.pi * rad / (0.9 * h))))
        for k in range(n_arc + 1):
            t = 0.5 * math.pi * k / n_arc
            pts.append(np.array([rad * math.cos(t), rad * math.sin(t)]))
    pts = np.unique(np.round(np.array(pts), 12), axis=0)
    return pts


def build_cloud(h, collar, seed):
    rng = np.random.default_rng(seed)
    pts = make_points(h, collar, rng)
    tri = Delaunay(pts)
    rows = []
    for simplex in tri.simplices:
        corners = pts[simplex]
        c = corners.mean(axis=0)
        e1 = corners[1] - corners[0]
        e2 = corners[2] - corners[0]
        area = 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
        if area < 1e-6 * h * h:
            continue
        r = math.hypot(*c)
        if c[0] < 0 or c[1] < 0:
            continue
        if r < A_HOLE - collar or c[0] > L_PLATE + collar or \
                c[1] > L_PLATE + collar:
            continue
        if r < A_HOLE:
            kind = NodeKind.FREE_SURFACE
        elif c[0] > L_PLATE or c[1] > L_PLATE:
            kind = NodeKind.NATURAL
        else:
            kind = NodeKind.BULK
        rows.append((c[0], c[1], area, kind))
    X = np.array([(r[0], r[1]) for r in rows])
    V = np.array([r[2] for r in rows])
    kind = np.array([r[3] for r in rows], dtype=np.int8)
    return PointCloud(ids=np.arange(len(rows)), X=X, V=V, kind=kind)


def main():
    outdir = Path(sys.argv[1]) if len(sys.argv) > 1 else \
        Path(__file__).resolve().parents[1] / "src" / "pdmeshfree" / "data"
    outdir.mkdir(parents=True, exist_ok=True)
    for lvl, h in enumerate((0.2, 0.1)):
        collar = 4.5 * h
        cloud = build_cloud(h, collar, seed=1000 + lvl)
        n_bulk = int((cloud.kind == NodeKind.BULK).sum())
        path = outdir / f"plate_hole_tri_L{lvl}.cloud"
        save_cloud(cloud, path)
        print(f"L{lvl}: {len(cloud)} cells ({n_bulk} material), "
              f"h={cloud.h:.4f} -> {path}")


if __name__ == "__main__":
    main()
