#!/usr/bin/env python3
"""Time the numba kernels against the pure NumPy reference path.

The hot loop of the package is per-node gradient-weight construction
(small dense solves over every family).  This script builds perturbed
clouds of increasing size and times both backends on the same flattened
bond arrays, plus the end-to-end weight-table build.

Usage:
    python3 benchmarks/compare_backends.py [--nodes 40] [--repeats 3]

`--nodes` is the per-side node count of the square test cloud.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from pdmeshfree import _backend, _weights_numpy  # noqa: E402
from pdmeshfree.gradops import build_weight_table  # noqa: E402
from pdmeshfree.kernels import MonomialBasis, cubic_bspline  # noqa: E402
from pdmeshfree.pointcloud import build_families, generate_uniform_grid, \
    perturb_grid, split_families  # noqa: E402


def flatten(cloud, fams):
    centers = np.arange(len(cloud))
    bonds = [fams[c].hs for c in centers]
    counts = np.array([b.size for b in bonds], dtype=np.int64)
    offsets = np.zeros(centers.size + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    nbrs = np.concatenate(bonds).astype(np.int64)
    rep = np.repeat(centers, counts)
    dx = cloud.X[nbrs] - cloud.X[rep]
    r = np.sqrt(np.einsum("ij,ij->i", dx, dx))
    scales = np.array([r[offsets[k]:offsets[k + 1]].max()
                       for k in range(centers.size)])
    return offsets, nbrs, dx, r, scales


def timed(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--nodes", type=int, default=40,
                    help="nodes per side of the square cloud")
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--order", type=int, default=2, choices=(1, 2, 3))
    args = ap.parse_args()

    h = 2.0 / args.nodes
    delta = 3.5 * h
    cloud = perturb_grid(
        generate_uniform_grid(((-1, 1), (-1, 1)), h), 0.15, seed=0)
    fams = split_families(build_families(cloud, delta), cloud)
    offsets, nbrs, dx, r, scales = flatten(cloud, fams)
    basis = MonomialBasis(args.order, 2)
    alpha = cubic_bspline(r / delta)
    vols = cloud.V[nbrs]
    n = len(cloud)
    print(f"cloud: {n} nodes, {nbrs.size} bonds, order {args.order}, "
          f"active backend: {_backend.backend_name()}")

    rows = []
    t_np_rk = timed(lambda: _weights_numpy.rk_gamma(
        offsets, dx, alpha, vols, basis.exponents, scales, 1e-12),
        args.repeats)
    t_np_gm = timed(lambda: _weights_numpy.gmls_gamma(
        offsets, dx, basis.exponents, scales, 1e-12), args.repeats)
    rows.append(("rk weights", "numpy", t_np_rk))
    rows.append(("gmls weights", "numpy", t_np_gm))

    if _backend.HAVE_NUMBA:
        from pdmeshfree import _weights_numba
        # trigger compilation outside the timer
        _weights_numba.rk_gamma(offsets, dx, alpha, vols, basis.exponents,
                                scales, 1e-12)
        _weights_numba.gmls_gamma(offsets, dx, basis.exponents, scales, 1e-12)
        t_nb_rk = timed(lambda: _weights_numba.rk_gamma(
            offsets, dx, alpha, vols, basis.exponents, scales, 1e-12),
            args.repeats)
        t_nb_gm = timed(lambda: _weights_numba.gmls_gamma(
            offsets, dx, basis.exponents, scales, 1e-12), args.repeats)
        rows.append(("rk weights", "numba", t_nb_rk))
        rows.append(("gmls weights", "numba", t_nb_gm))
        g1, _ = _weights_numpy.rk_gamma(offsets, dx, alpha, vols,
                                        basis.exponents, scales, 1e-12)
        g2, _ = _weights_numba.rk_gamma(offsets, dx, alpha, vols,
                                        basis.exponents, scales, 1e-12)
        gap = float(np.abs(g1 - g2).max())
        print(f"backend agreement (rk): max |gamma difference| = {gap:.2e}")
    else:
        print("numba not available: timing the NumPy path only")

    t_table = timed(lambda: build_weight_table(
        cloud, fams, np.arange(n), route="rk", order=args.order,
        neighborhood="stress"), args.repeats)
    rows.append(("full table build", _backend.backend_name(), t_table))

    print(f"\n{'kernel':<18} {'backend':<8} {'best time':>12} {'per node':>12}")
    for name, backend, t in rows:
        print(f"{name:<18} {backend:<8} {t * 1e3:>10.2f}ms {t / n * 1e6:>10.2f}us")
    by = {(nm, bk): t for nm, bk, t in rows}
    if ("rk weights", "numba") in by:
        for nm in ("rk weights", "gmls weights"):
            sp = by[(nm, "numpy")] / by[(nm, "numba")]
            print(f"speedup {nm}: {sp:.1f}x")


if __name__ == "__main__":
    main()
