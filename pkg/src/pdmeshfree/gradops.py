"""Per-bond gradient weight construction and nonlocal gradient evaluation.

Two routes produce the vector coefficients attached to each bond of a
family:

* the reproducing-kernel route, which weights bonds with an influence
  function and inverts a small moment matrix per node, and
* the moving-least-squares route, which solves a per-node constrained
  minimum-norm problem (exact gradients for every basis polynomial)
  and carries an inverse-square geometric factor.

Both reproduce gradients of all polynomials up to the requested order
exactly on the family.  Batched construction over many centers runs
through the numba backend when available (see ``_backend``).
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _backend, _weights_numpy
from .errors import UnisolvencyError, ValidationError
from .kernels import MonomialBasis, cubic_bspline, grad_selector, monomials
from .pointcloud import Family, PointCloud

__all__ = [
    "RCOND_MIN",
    "InfluenceFunction",
    "GradientWeights",
    "WeightTable",
    "rk_moment_matrix",
    "rk_weights",
    "gmls_weights",
    "build_weight_table",
    "nonlocal_gradient",
    "verify_reproduction",
]

# Reciprocal-condition threshold below which a neighborhood is rejected
RCOND_MIN = 1e-12


@dataclass(frozen=True)
class InfluenceFunction:
    """Bond weighting: cubic B-spline of the normalized length, or inverse square.

    ``delta`` normalizes the B-spline argument; it is expressed in the
    metric the family was built in (parametric families pass their
    parametric horizon).
    """

    variant: str = "cubic-bspline"
    delta: float = 1.0

    def __post_init__(self):
        if self.variant not in ("cubic-bspline", "inverse-square"):
            raise ValidationError(f"unknown influence variant {self.variant!r}")

    def alpha(self, metric_dist, phys_sep=None):
        """Weights for bonds with the given metric lengths / physical separations."""
        if self.variant == "cubic-bspline":
            return cubic_bspline(np.asarray(metric_dist) / self.delta)
        sep = np.asarray(phys_sep, dtype=float)
        r2 = np.einsum("ij,ij->i", sep, sep)
        if np.any(r2 == 0.0):
            raise ValidationError("inverse-square influence at zero separation")
        return 1.0 / r2


@dataclass
class GradientWeights:
    """Weight vectors for the bonds of one family."""

    center: int
    neighbors: np.ndarray
    vectors: np.ndarray  # (n_bonds, d)
    order: int
    route: str
    neighborhood: str = "raw"

    def as_dict(self):
        return {int(j): self.vectors[k].copy() for k, j in enumerate(self.neighbors)}


@dataclass
class WeightTable:
    """Stacked weight vectors for many centers (CSR layout).

    ``slot_of_node[row]`` gives the center slot of a node, or -1 if the
    table holds no weights for it.
    """

    route: str
    order: int
    neighborhood: str
    centers: np.ndarray
    offsets: np.ndarray
    neighbors: np.ndarray
    vectors: np.ndarray
    slot_of_node: np.ndarray

    def weights_for(self, node_row: int) -> GradientWeights:
        slot = int(self.slot_of_node[node_row])
        if slot < 0:
            raise KeyError(f"no weights stored for node row {node_row}")
        s, e = self.offsets[slot], self.offsets[slot + 1]
        return GradientWeights(center=node_row, neighbors=self.neighbors[s:e],
                               vectors=self.vectors[s:e], order=self.order,
                               route=self.route, neighborhood=self.neighborhood)


def _family_bonds(family: Family, neighborhood: str) -> np.ndarray:
    if neighborhood == "raw":
        return family.neighbors
    if neighborhood == "kinematic":
        if family.hk is None:
            raise ValidationError("family not split; call split_families first")
        return family.hk
    if neighborhood == "stress":
        if family.hs is None:
            raise ValidationError("family not split; call split_families first")
        return family.hs
    raise ValidationError(f"unknown neighborhood {neighborhood!r}")


def _metric_dist(cloud: PointCloud, family: Family, bonds: np.ndarray) -> np.ndarray:
    if family.metric == "parametric":
        diff = cloud.xi[bonds] - cloud.xi[family.center]
    else:
        diff = cloud.X[bonds] - cloud.X[family.center]
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def rk_moment_matrix(family: Family, cloud: PointCloud,
                     influence: InfluenceFunction, basis: MonomialBasis,
                     neighborhood: str = "raw", scale: float = 1.0) -> np.ndarray:
    """Moment matrix sum(alpha * Q Q^T * V) over the family's bonds.

    ``scale`` conditions the monomial argument; an empty family yields
    the zero matrix (rejected later by the condition check).
    """
    bonds = _family_bonds(family, neighborhood)
    if bonds.size == 0:
        return np.zeros((basis.m, basis.m))
    dx = cloud.X[bonds] - cloud.X[family.center]
    Q = np.atleast_2d(monomials(dx, basis, scale=scale))
    a = influence.alpha(_metric_dist(cloud, family, bonds), dx)
    w = np.asarray(a, dtype=float) * cloud.V[bonds]
    return (Q * w[:, None]).T @ Q


def _bond_scale(dx: np.ndarray) -> float:
    r = np.sqrt(np.einsum("ij,ij->i", dx, dx))
    return float(r.max()) if r.size else 1.0


def rk_weights(family: Family, cloud: PointCloud, influence: InfluenceFunction,
               basis: MonomialBasis, neighborhood: str = "raw",
               scale: Optional[float] = None) -> GradientWeights:
    """Reproducing-kernel weight vectors for one family."""
    bonds = _family_bonds(family, neighborhood)
    dx = cloud.X[bonds] - cloud.X[family.center]
    sc = _bond_scale(dx) if scale is None else scale
    a = np.asarray(influence.alpha(_metric_dist(cloud, family, bonds), dx), float)
    offsets = np.array([0, bonds.size], dtype=np.int64)
    gamma, bad = _weights_numpy.rk_gamma(
        offsets, dx, a, cloud.V[bonds], basis.exponents,
        np.array([sc]), RCOND_MIN)
    if bad[0]:
        raise UnisolvencyError(int(cloud.ids[family.center]),
                               f"order {basis.n} needs a richer neighborhood")
    return GradientWeights(center=family.center, neighbors=bonds, vectors=gamma,
                           order=basis.n, route="rk", neighborhood=neighborhood)


def gmls_weights(family: Family, cloud: PointCloud, basis: MonomialBasis,
                 neighborhood: str = "raw",
                 scale: Optional[float] = None) -> GradientWeights:
    """Minimum-norm moving-least-squares weight vectors for one family."""
    bonds = _family_bonds(family, neighborhood)
    dx = cloud.X[bonds] - cloud.X[family.center]
    sc = _bond_scale(dx) if scale is None else scale
    offsets = np.array([0, bonds.size], dtype=np.int64)
    gamma, bad = _weights_numpy.gmls_gamma(
        offsets, dx, basis.exponents, np.array([sc]), RCOND_MIN)
    if bad[0]:
        raise UnisolvencyError(int(cloud.ids[family.center]),
                               f"order {basis.n} constraints are rank deficient")
    return GradientWeights(center=family.center, neighbors=bonds, vectors=gamma,
                           order=basis.n, route="gmls", neighborhood=neighborhood)


def build_weight_table(cloud: PointCloud, families, centers, route: str,
                       order: int, neighborhood: str = "raw") -> WeightTable:
    """Build weight vectors for many centers at once.

    ``families`` is the full per-node family list; ``centers`` the node
    rows to build for.  The hot loop runs on the numba backend when
    active, otherwise on the NumPy reference kernels; both produce the
    same tables.
    """
    if route not in ("rk", "gmls"):
        raise ValidationError(f"unknown weight route {route!r}")
    centers = np.asarray(centers, dtype=np.int64)
    basis = MonomialBasis(order, cloud.d)
    bond_lists = [_family_bonds(families[c], neighborhood) for c in centers]
    counts = np.array([b.size for b in bond_lists], dtype=np.int64)
    offsets = np.zeros(centers.size + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    nbrs = (np.concatenate(bond_lists) if bond_lists
            else np.empty(0, dtype=np.int64)).astype(np.int64)
    rep_centers = np.repeat(centers, counts)
    dx = cloud.X[nbrs] - cloud.X[rep_centers]

    scales = np.ones(centers.size)
    r = np.sqrt(np.einsum("ij,ij->i", dx, dx))
    for k in range(centers.size):
        s, e = offsets[k], offsets[k + 1]
        if e > s:
            scales[k] = r[s:e].max()

    if _backend.USE_NUMBA:
        from . import _weights_numba as kern
    else:
        kern = _weights_numpy

    if route == "rk":
        fam0 = families[centers[0]] if centers.size else None
        delta = fam0.delta if fam0 is not None else 1.0
        if fam0 is not None and fam0.metric == "parametric":
            diff = cloud.xi[nbrs] - cloud.xi[rep_centers]
            mdist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        else:
            mdist = r
        alpha = cubic_bspline(mdist / delta)
        gamma, bad = kern.rk_gamma(offsets, dx, alpha, cloud.V[nbrs],
                                   basis.exponents, scales, RCOND_MIN)
    else:
        gamma, bad = kern.gmls_gamma(offsets, dx, basis.exponents, scales,
                                     RCOND_MIN)
    if np.any(bad):
        slot = int(np.nonzero(bad)[0][0])
        raise UnisolvencyError(int(cloud.ids[centers[slot]]),
                               f"order {order} {route} weights ({neighborhood})")

    slot_of_node = np.full(len(cloud), -1, dtype=np.int64)
    slot_of_node[centers] = np.arange(centers.size)
    return WeightTable(route=route, order=order, neighborhood=neighborhood,
                       centers=centers, offsets=offsets, neighbors=nbrs,
                       vectors=gamma, slot_of_node=slot_of_node)


def nonlocal_gradient(values, weights: GradientWeights, family=None):
    """Nonlocal gradient of a per-node field at the weight center.

    ``values`` holds one entry per node row: a scalar field gives the
    gradient vector, a vector field the (d, d) gradient tensor (outer
    products with the weight vectors), and a matrix field contracts to
    the divergence-style vector.
    """
    vals = np.asarray(values)
    fj = vals[weights.neighbors]
    fi = vals[weights.center]
    if np.any(np.isnan(np.atleast_1d(fj).real)) or np.any(
            np.isnan(np.atleast_1d(fi).real)):
        raise ValidationError("missing (NaN) value on a bond")
    diff = fj - fi
    g = weights.vectors
    if vals.ndim == 1:  # scalar field
        return diff @ g
    if vals.ndim == 2:  # vector field -> gradient tensor
        return np.einsum("ka,kj->aj", diff, g)
    if vals.ndim == 3:  # matrix field -> divergence vector
        return np.einsum("kab,kb->a", diff, g)
    raise ValidationError("field must be scalar, vector, or matrix per node")


def reproduction_errors(table: WeightTable, cloud: PointCloud,
                        n: Optional[int] = None) -> np.ndarray:
    """Per-center worst reproduction error of a whole weight table.

    Vectorized equivalent of calling :func:`verify_reproduction` on
    every center at the table's own order (or a probe order ``n``).
    """
    basis = MonomialBasis(n or table.order, cloud.d)
    d = cloud.d
    counts = np.diff(table.offsets)
    rep = np.repeat(table.centers, counts)
    dx = cloud.X[table.neighbors] - cloud.X[rep]
    r = np.sqrt(np.einsum("ij,ij->i", dx, dx))
    scales = np.ones(table.centers.size)
    for k in range(table.centers.size):
        s, e = table.offsets[k], table.offsets[k + 1]
        if e > s:
            scales[k] = r[s:e].max()
    scale_bond = np.repeat(scales, counts)
    Q = np.prod((dx / scale_bond[:, None])[:, None, :]
                ** basis.exponents[None, :, :], axis=2)
    prod = Q[:, :, None] * table.vectors[:, None, :]
    sums = np.add.reduceat(prod, table.offsets[:-1], axis=0)
    sel = np.zeros((table.centers.size, basis.m, d))
    for j in range(d):
        row = j  # degree-1 monomials lead the graded ordering
        sel[:, row, j] = 1.0 / scales
    return np.abs(sums - sel).max(axis=(1, 2)) * scales


def verify_reproduction(weights: GradientWeights, family: Family,
                        cloud: PointCloud, n: int) -> float:
    """Worst reproduction error over all monomials of degree <= n.

    Each probe monomial is centered on the weight center and normalized
    by the largest bond length, so errors are relative to the gradient
    scale.  Construction guarantees values at roundoff for probes
    within the build order.
    """
    basis = MonomialBasis(n, cloud.d)
    dx = cloud.X[weights.neighbors] - cloud.X[weights.center]
    sc = _bond_scale(dx)
    Q = np.atleast_2d(monomials(dx, basis, scale=sc))
    worst = 0.0
    for p in range(basis.m):
        got = Q[:, p] @ weights.vectors
        exact = np.array([grad_selector(j + 1, basis, scale=sc)[p]
                          for j in range(cloud.d)])
        worst = max(worst, float(np.abs(got - exact).max()) * sc)
    return worst
