"""Meshfree nodal discretizations and their dual neighbor families.

A :class:`PointCloud` stores node positions, volumes, kinds (bulk,
essential-bc, natural-bc, free-surface) and optional parametric
coordinates.  Generators produce uniform lattices (with fictitious
boundary collars continuing the lattice outward), random perturbations
of them, systematic midpoint refinements, and polar grids for the
quarter plate with a hole; scattered clouds are imported from a plain
text format.

Families are built with an inclusive-radius search in either the
physical or the parametric metric and then split into the kinematic
set (bulk and essential neighbors over unbroken bonds, used for
deformation gradients) and the stress set (all neighbors, used for the
stress divergence).
"""

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Callable, Optional

import numpy as np

from .errors import CloudFormatError, ValidationError

__all__ = [
    "NodeKind",
    "BondStatus",
    "Node",
    "PointCloud",
    "Family",
    "generate_uniform_grid",
    "classify_collar",
    "perturb_grid",
    "refine_by_midpoints",
    "generate_polar_grid",
    "add_mirror_ghosts",
    "import_cloud",
    "save_cloud",
    "build_families",
    "split_families",
]


class NodeKind(IntEnum):
    BULK = 0
    ESSENTIAL = 1
    NATURAL = 2
    FREE_SURFACE = 3


class BondStatus(IntEnum):
    KINEMATIC = 0
    NATURAL = 1
    BROKEN = 2


_KIND_NAMES = {
    NodeKind.BULK: "bulk",
    NodeKind.ESSENTIAL: "essential",
    NodeKind.NATURAL: "natural",
    NodeKind.FREE_SURFACE: "freesurface",
}
_KIND_FROM_NAME = {v: k for k, v in _KIND_NAMES.items()}


@dataclass(frozen=True)
class Node:
    """Read-only view of a single node."""

    id: int
    X: np.ndarray
    V: float
    kind: NodeKind
    xi: Optional[np.ndarray] = None


@dataclass
class _Lattice:
    """Connectivity metadata that makes midpoint refinement possible.

    Node positions before perturbation are ``origin + index * spacing``;
    ``domain_hi`` is the largest per-axis index (inclusive) that still
    lies inside the generated box.  ``kind_rule`` maps an unperturbed
    collar position to its :class:`NodeKind`.
    """

    origin: np.ndarray
    spacing: float
    domain_hi: np.ndarray
    index: np.ndarray
    kind_rule: Optional[Callable] = None
    level: int = 0
    # physical distance from the outermost lattice nodes to the tile edge;
    # stays at half the generation spacing through every refinement
    overhang: float = 0.0


@dataclass
class PointCloud:
    """Immutable-by-convention nodal discretization.

    ``ids`` are external identifiers (file-provided or sequential);
    every cross-reference inside the package uses row indices.  ``ties``
    maps a ghost row to ``(mirror_row, signs)``: the ghost displacement
    equals ``signs * u[mirror_row]`` (symmetry reflection constraints).
    """

    ids: np.ndarray
    X: np.ndarray
    V: np.ndarray
    kind: np.ndarray
    xi: Optional[np.ndarray] = None
    lattice: Optional[_Lattice] = None
    ties: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        self.X = X[:, None] if X.ndim == 1 else X
        self.V = np.asarray(self.V, dtype=float)
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.kind = np.asarray(self.kind, dtype=np.int8)
        if np.any(self.V <= 0.0):
            raise ValidationError("nodal volumes must be positive")
        if len(self) > 1:
            order = np.lexsort(self.X.T)
            same = np.all(np.diff(self.X[order], axis=0) == 0.0, axis=1)
            if np.any(same):
                i = order[int(np.nonzero(same)[0][0])]
                raise ValidationError(f"coincident nodes detected near row {i}")

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def h(self) -> float:
        """Average nodal spacing, (sum V / N) ** (1/d) over material nodes.

        Falls back to all nodes when the cloud has no bulk nodes yet
        (e.g. freshly generated, unclassified grids keep every node bulk).
        """
        mask = self.kind == NodeKind.BULK
        if not np.any(mask):
            mask = np.ones(len(self), dtype=bool)
        return float((self.V[mask].sum() / mask.sum()) ** (1.0 / self.d))

    def node(self, row: int) -> Node:
        return Node(
            id=int(self.ids[row]),
            X=self.X[row].copy(),
            V=float(self.V[row]),
            kind=NodeKind(self.kind[row]),
            xi=None if self.xi is None else self.xi[row].copy(),
        )

    def is_kinematic(self) -> np.ndarray:
        """Mask of nodes carrying displacement data (bulk or essential)."""
        return (self.kind == NodeKind.BULK) | (self.kind == NodeKind.ESSENTIAL)


@dataclass
class Family:
    """Dual neighborhoods of one node.

    ``neighbors`` is the raw inclusive-radius result; after
    :func:`split_families`, ``hk`` holds the kinematic subset and
    ``hs``/``hs_status`` the stress set with one :class:`BondStatus`
    per bond.
    """

    center: int
    delta: float
    metric: str
    neighbors: np.ndarray
    hk: Optional[np.ndarray] = None
    hs: Optional[np.ndarray] = None
    hs_status: Optional[np.ndarray] = None


def _as_box(box, d=None):
    b = np.asarray(box, dtype=float)
    if b.ndim == 1:
        b = b.reshape(1, 2)
    if b.ndim != 2 or b.shape[1] != 2 or np.any(b[:, 1] <= b[:, 0]):
        raise ValidationError("box must be ((lo, hi), ...) with hi > lo")
    if d is not None and b.shape[0] != d:
        raise ValidationError(f"box dimension {b.shape[0]} != {d}")
    return b


def generate_uniform_grid(box, h: float, collar_layers: int = 0,
                          kind_rule: Optional[Callable] = None) -> PointCloud:
    """Uniform lattice of cell-centered nodes over an axis-aligned box.

    Each cell contributes one node at its center with volume ``h**d``.
    ``collar_layers`` extra layers of fictitious nodes continue the
    lattice outward on every side; their kind comes from ``kind_rule``
    (position -> NodeKind), defaulting to essential.
    """
    b = _as_box(box)
    d = b.shape[0]
    if h <= 0.0:
        raise ValidationError("grid spacing must be positive")
    lengths = b[:, 1] - b[:, 0]
    ncells = lengths / h
    if np.any(np.abs(ncells - np.round(ncells)) > 1e-9 * np.maximum(ncells, 1.0)):
        raise ValidationError(f"spacing {h} does not evenly divide the box")
    ncells = np.round(ncells).astype(int)
    lo, hi = -collar_layers, ncells + collar_layers
    axes = [np.arange(lo, hi[a]) for a in range(d)]
    grids = np.meshgrid(*axes, indexing="ij")
    index = np.stack([g.ravel() for g in grids], axis=1)
    origin = b[:, 0] + 0.5 * h
    X = origin[None, :] + index * h
    n = X.shape[0]
    inside = np.all((index >= 0) & (index < ncells[None, :]), axis=1)
    kind = np.full(n, NodeKind.BULK, dtype=np.int8)
    if kind_rule is None:
        kind[~inside] = NodeKind.ESSENTIAL
    else:
        for row in np.nonzero(~inside)[0]:
            kind[row] = NodeKind(kind_rule(X[row]))
    lattice = _Lattice(origin=origin, spacing=h, domain_hi=ncells - 1,
                       index=index, kind_rule=kind_rule, level=0,
                       overhang=0.5 * h)
    return PointCloud(ids=np.arange(n), X=X, V=np.full(n, h**d),
                      kind=kind, lattice=lattice)


def classify_collar(cloud: PointCloud, kind_rule: Callable) -> PointCloud:
    """Re-tag collar nodes of a lattice cloud with ``kind_rule``.

    The rule sees the unperturbed lattice position, so classification
    is stable under perturbation and refinement.
    """
    if cloud.lattice is None:
        raise ValidationError("classify_collar requires lattice metadata")
    lat = cloud.lattice
    inside = np.all((lat.index >= 0) & (lat.index <= lat.domain_hi[None, :]), axis=1)
    pos = lat.origin[None, :] + lat.index * lat.spacing
    kind = np.full(len(cloud), NodeKind.BULK, dtype=np.int8)
    for row in np.nonzero(~inside)[0]:
        kind[row] = NodeKind(kind_rule(pos[row]))
    new_lat = replace(lat, kind_rule=kind_rule)
    return replace(cloud, kind=kind, lattice=new_lat)


def perturb_grid(cloud: PointCloud, sigma_fraction: float, seed: int) -> PointCloud:
    """Shift every coordinate by an independent normal draw.

    The standard deviation is ``sigma_fraction * cloud.h``.  Draws come
    from ``numpy.random.Generator(PCG64(seed))`` in node order with
    shape (N, d), so identical seeds give bitwise-identical clouds on
    every platform.  Volumes and kinds are unchanged.
    """
    if sigma_fraction < 0.0:
        raise ValidationError("sigma_fraction must be nonnegative")
    if cloud.ties:
        raise ValidationError("cannot perturb a cloud with symmetry ties")
    if sigma_fraction == 0.0:
        return replace(cloud, X=cloud.X.copy())
    rng = np.random.Generator(np.random.PCG64(seed))
    offsets = rng.normal(0.0, sigma_fraction * cloud.h, size=cloud.X.shape)
    return replace(cloud, X=cloud.X + offsets)


def refine_by_midpoints(cloud: PointCloud) -> PointCloud:
    """Halve the lattice spacing by inserting midpoint nodes.

    Children at even index pairs inherit the (possibly perturbed)
    parent positions; odd indices take the midpoint of the two adjacent
    parents along that axis, and in 2D the doubly-odd child sits at the
    centroid of its four parents.  Volumes come from the refined
    lattice partition of the original tile, so the total volume is
    conserved exactly.
    """
    if cloud.lattice is None:
        raise ValidationError(
            "refine_by_midpoints requires lattice connectivity; "
            "imported clouds cannot be refined")
    lat = cloud.lattice
    d = cloud.d
    idx = lat.index
    lo = idx.min(axis=0)
    hi = idx.max(axis=0)
    shape = tuple(hi - lo + 1)
    row_of = np.full(shape, -1, dtype=np.int64)
    row_of[tuple((idx - lo).T)] = np.arange(len(cloud))

    s = 0.5 * lat.spacing
    new_axes = [np.arange(2 * lo[a], 2 * hi[a] + 1) for a in range(d)]

    def axis_widths(a):
        k = new_axes[a]
        w = np.full(k.shape, s)
        w[0] = w[-1] = lat.overhang + 0.5 * s
        return w

    grids = np.meshgrid(*new_axes, indexing="ij")
    nidx = np.stack([g.ravel() for g in grids], axis=1)
    n_new = nidx.shape[0]

    parent = np.floor_divide(nidx, 2)
    frac = nidx - 2 * parent  # 0 = on a parent, 1 = between two parents
    # Average the perturbed positions of the 1, 2, or 4 parents
    X_new = np.zeros((n_new, d))
    count = np.zeros(n_new)
    for bits in np.ndindex(*([2] * d)):
        c = np.asarray(bits, dtype=np.int64)
        applies = np.all(frac >= c[None, :], axis=1)
        p = np.clip(parent + c[None, :], lo, hi)
        rows = row_of[tuple((p - lo).T)]
        X_new[applies] += cloud.X[rows[applies]]
        count[applies] += 1.0
    X_new /= count[:, None]

    widths = [axis_widths(a) for a in range(d)]
    V_new = widths[0][(nidx[:, 0] - 2 * lo[0])]
    for a in range(1, d):
        V_new = V_new * widths[a][(nidx[:, a] - 2 * lo[a])]

    domain_hi = 2 * lat.domain_hi
    inside = np.all((nidx >= 0) & (nidx <= domain_hi[None, :]), axis=1)
    kind = np.full(n_new, NodeKind.BULK, dtype=np.int8)
    pos0 = lat.origin[None, :] + nidx * s
    if lat.kind_rule is None:
        kind[~inside] = NodeKind.ESSENTIAL
    else:
        for row in np.nonzero(~inside)[0]:
            kind[row] = NodeKind(lat.kind_rule(pos0[row]))

    new_lat = _Lattice(origin=lat.origin, spacing=s, domain_hi=domain_hi,
                       index=nidx, kind_rule=lat.kind_rule, level=lat.level + 1,
                       overhang=lat.overhang)
    return PointCloud(ids=np.arange(n_new), X=X_new, V=V_new,
                      kind=kind, lattice=new_lat)


def _polygon_centroid_area(corners: np.ndarray):
    """Centroid and area of a simple polygon given as (k, 2) vertices."""
    x, y = corners[:, 0], corners[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return np.array([cx, cy]), abs(area)


def generate_polar_grid(a: float, L: float, n_r: int, n_theta: int,
                        delta: float = 2.75) -> PointCloud:
    """Quarter plate with a hole on a polar lattice of quadrilateral cells.

    The modeled plate region is the annular sector a <= r <= L (the
    exact far-field data on the outer collar makes any outer contour
    equivalent; the smooth arc keeps the index-to-position map free of
    corner kinks that destabilize low-order formulations).  Cells live
    on uniform radial/angular index lines; each meshfree node sits at a
    cell centroid with the cell area as its volume and carries
    parametric coordinates (radial index + 1/2, angular index + 1/2),
    so adjacent parametric neighbors differ by exactly 1 in one index.
    Collars are appended: natural-bc cells beyond the outer perimeter,
    zero-stress free-surface cells inside the hole, and reflection
    ghosts past both symmetry axes (tied to their mirror material nodes
    with component signs, which realizes the zero-normal-displacement
    symmetry condition).  ``delta`` is the parametric horizon the
    collars must cover.
    """
    if not (0.0 < a < L):
        raise ValidationError("hole radius must satisfy 0 < a < L")
    if n_r < 2 or n_theta < 2:
        raise ValidationError("polar grid needs at least 2 cells per direction")
    n_theta += n_theta % 2
    layers = math.ceil(delta)

    dtheta = 0.5 * math.pi / n_theta
    dr = (L - a) / n_r
    # the zero-stress collar inside the hole is clipped where its cells
    # would cross the origin (very coarse grids)
    inner_layers = int(min(layers, math.floor(a / dr - 1e-9)))

    def corner(i, j):
        r = a + i * dr
        th = j * dtheta
        return np.array([r * math.cos(th), r * math.sin(th)])

    rows_X, rows_V, rows_kind, rows_xi = [], [], [], []
    cell_row = {}

    def add_cell(i, j, kind):
        quad = np.array([corner(i, j), corner(i + 1, j),
                         corner(i + 1, j + 1), corner(i, j + 1)])
        c, area = _polygon_centroid_area(quad)
        cell_row[(i, j)] = len(rows_X)
        rows_X.append(c)
        rows_V.append(area)
        rows_kind.append(kind)
        rows_xi.append((i + 0.5, j + 0.5))

    # material cells plus the radial collars over the material angle range
    for j in range(n_theta):
        for i in range(-inner_layers, n_r + layers):
            if i < 0:
                k = NodeKind.FREE_SURFACE
            elif i >= n_r:
                k = NodeKind.NATURAL
            else:
                k = NodeKind.BULK
            add_cell(i, j, k)

    # angular reflection ghosts across theta = 0 and theta = pi/2
    ties = {}
    reflections = [(-1, np.array([1.0, -1.0])), (+1, np.array([-1.0, 1.0]))]
    for side, signs in reflections:
        for g in range(layers):
            j = -1 - g if side < 0 else n_theta + g
            jm = g if side < 0 else n_theta - 1 - g
            for i in range(-inner_layers, n_r + layers):
                mirror = cell_row[(i, jm)]
                c = rows_X[mirror] * signs
                row = len(rows_X)
                rows_X.append(c)
                rows_V.append(rows_V[mirror])
                km = rows_kind[mirror]
                if km == NodeKind.BULK:
                    rows_kind.append(NodeKind.ESSENTIAL)
                    ties[row] = (mirror, signs.copy())
                else:
                    rows_kind.append(km)
                rows_xi.append((i + 0.5, j + 0.5))

    n = len(rows_X)
    return PointCloud(ids=np.arange(n), X=np.array(rows_X),
                      V=np.array(rows_V),
                      kind=np.array(rows_kind, dtype=np.int8),
                      xi=np.array(rows_xi), ties=ties)


def add_mirror_ghosts(cloud: PointCloud, axis: str, width: float) -> PointCloud:
    """Append reflection ghosts across a symmetry axis of a physical cloud.

    ``axis`` is ``"y=0"`` (reflect nodes with 0 < y <= width) or
    ``"x=0"``.  Bulk nodes become tied essential ghosts; natural and
    free-surface nodes are copied with mirrored positions (their stress
    data is evaluated at the new position by the driver).
    """
    if cloud.d != 2:
        raise ValidationError("mirror ghosts are a 2D operation")
    if axis == "y=0":
        coord, signs = 1, np.array([1.0, -1.0])
    elif axis == "x=0":
        coord, signs = 0, np.array([-1.0, 1.0])
    else:
        raise ValidationError(f"unknown symmetry axis {axis!r}")
    if cloud.xi is not None:
        raise ValidationError("use generate_polar_grid ghosts for parametric clouds")
    c = cloud.X[:, coord]
    in_band = (c > 0.0) & (c <= width)
    # existing ghosts (essential) are not re-reflected
    sel = np.nonzero(in_band & (cloud.kind != NodeKind.ESSENTIAL))[0]
    if sel.size == 0:
        return cloud
    Xg = cloud.X[sel] * signs[None, :]
    Vg = cloud.V[sel]
    kindg = cloud.kind[sel].copy()
    ties = dict(cloud.ties)
    base = len(cloud)
    for k, row in enumerate(sel):
        if cloud.kind[row] == NodeKind.BULK:
            kindg[k] = NodeKind.ESSENTIAL
            ties[base + k] = (int(row), signs.copy())
    ids = np.concatenate([cloud.ids, cloud.ids.max() + 1 + np.arange(len(Xg))])
    return PointCloud(ids=ids, X=np.vstack([cloud.X, Xg]),
                      V=np.concatenate([cloud.V, Vg]),
                      kind=np.concatenate([cloud.kind, kindg]),
                      xi=None, ties=ties)


def import_cloud(path) -> PointCloud:
    """Read a cloud from the node-cloud text format.

    One record per line: ``id x [y] volume kind [pxi pyi]`` with kind in
    {bulk, essential, natural, freesurface}; ``#`` starts a comment.
    Token count decides the layout: 4 = 1D, 5 = 2D, 7 = 2D with
    parametric coordinates.
    """
    ids, X, V, kinds, xis = [], [], [], [], []
    d = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            if len(tok) == 4:
                this_d, has_xi = 1, False
            elif len(tok) == 5:
                this_d, has_xi = 2, False
            elif len(tok) == 7:
                this_d, has_xi = 2, True
            else:
                raise CloudFormatError(f"{path}:{lineno}: expected 4, 5, or 7 fields")
            if d is None:
                d = this_d
            elif d != this_d:
                raise CloudFormatError(f"{path}:{lineno}: inconsistent dimension")
            try:
                ids.append(int(tok[0]))
                X.append([float(t) for t in tok[1 : 1 + d]])
                vol = float(tok[1 + d])
                kind_name = tok[2 + d].lower()
                if has_xi:
                    xis.append([float(tok[5]), float(tok[6])])
            except ValueError as exc:
                raise CloudFormatError(f"{path}:{lineno}: {exc}") from exc
            if vol <= 0.0:
                raise CloudFormatError(f"{path}:{lineno}: nonpositive volume")
            if kind_name not in _KIND_FROM_NAME:
                raise CloudFormatError(f"{path}:{lineno}: unknown kind {kind_name!r}")
            V.append(vol)
            kinds.append(_KIND_FROM_NAME[kind_name])
    if not ids:
        raise CloudFormatError(f"{path}: no records")
    ids = np.asarray(ids, dtype=np.int64)
    if len(np.unique(ids)) != len(ids):
        raise CloudFormatError(f"{path}: duplicate node ids")
    xi = np.asarray(xis) if xis else None
    if xi is not None and len(xi) != len(ids):
        raise CloudFormatError(f"{path}: parametric coordinates on some lines only")
    return PointCloud(ids=ids, X=np.asarray(X), V=np.asarray(V),
                      kind=np.asarray(kinds, dtype=np.int8), xi=xi)


def save_cloud(cloud: PointCloud, path) -> None:
    """Write a cloud in the node-cloud text format (see import_cloud)."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in range(len(cloud)):
            parts = [str(int(cloud.ids[row]))]
            parts += [f"{v:.17g}" for v in cloud.X[row]]
            parts.append(f"{cloud.V[row]:.17g}")
            parts.append(_KIND_NAMES[NodeKind(cloud.kind[row])])
            if cloud.xi is not None:
                parts += [f"{v:.17g}" for v in cloud.xi[row]]
            fh.write(" ".join(parts) + "\n")


def build_families(cloud: PointCloud, delta: float, metric: str = "physical"):
    """Inclusive-radius neighbor search, excluding self.

    ``metric`` is ``"physical"`` (node positions) or ``"parametric"``
    (stored parametric coordinates).  Cell binning with bins of side
    ``delta`` keeps construction O(N); membership is the exact test
    ``0 < |x_J - x_I| <= delta`` with no tolerance adjustments.
    """
    if delta <= 0.0:
        raise ValidationError("horizon must be positive")
    if metric == "physical":
        pts = cloud.X
    elif metric == "parametric":
        if cloud.xi is None:
            raise ValidationError("parametric metric requires parametric coordinates")
        pts = cloud.xi
    else:
        raise ValidationError(f"unknown metric {metric!r}")

    n, d = pts.shape
    bins = np.floor(pts / delta).astype(np.int64)
    table = {}
    for row, key in enumerate(map(tuple, bins)):
        table.setdefault(key, []).append(row)
    table = {k: np.asarray(v) for k, v in table.items()}

    offsets = np.array(np.meshgrid(*([[-1, 0, 1]] * d), indexing="ij"))
    offsets = offsets.reshape(d, -1).T

    d2max = delta * delta
    families = []
    for row in range(n):
        key = bins[row]
        cand = [table[t] for t in map(tuple, key[None, :] + offsets) if t in table]
        cand = np.concatenate(cand)
        diff = pts[cand] - pts[row]
        dist2 = np.einsum("ij,ij->i", diff, diff)
        keep = (dist2 <= d2max) & (cand != row)
        families.append(Family(center=row, delta=float(delta), metric=metric,
                               neighbors=np.sort(cand[keep])))
    return families


def split_families(families, cloud: PointCloud, broken=None):
    """Populate the kinematic and stress neighbor sets of each family.

    The kinematic set keeps unbroken bonds to bulk/essential nodes; the
    stress set keeps every neighbor, tagging natural-bc and
    free-surface neighbors (and declared broken bonds) with the status
    that drives the stress-divergence case split.  ``broken`` is an
    optional iterable of unordered row pairs with severed bonds.
    """
    broken_set = set()
    if broken:
        for i, j in broken:
            broken_set.add((min(i, j), max(i, j)))
    kin_mask = cloud.is_kinematic()
    for fam in families:
        nbrs = fam.neighbors
        status = np.full(nbrs.shape, BondStatus.KINEMATIC, dtype=np.int8)
        status[~kin_mask[nbrs]] = BondStatus.NATURAL
        if broken_set:
            c = fam.center
            for k, j in enumerate(nbrs):
                if (min(c, j), max(c, j)) in broken_set:
                    status[k] = BondStatus.BROKEN
        fam.hs = nbrs
        fam.hs_status = status
        fam.hk = nbrs[status == BondStatus.KINEMATIC]
    return families
