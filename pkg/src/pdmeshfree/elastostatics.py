"""Static equilibrium under mixed essential/natural boundary conditions.

The displacement-to-force map of every formulation is linear, so the
residual is assembled exactly as a sparse operator by composing the
kinematic-gradient, constitutive, and stress-divergence stages (the
bond-associated correction adds per-bond rank-one couplings that reach
neighbors of neighbors).  Essential values, symmetry ties, and fixed
components are eliminated by substitution; the reduced system is
solved with a sparse direct factorization, with a nonsymmetric Krylov
fallback for large clouds.  A direct summation ``residual`` path is
kept independent of the assembled operator so the two can check each
other.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .correspondence import Material, linear_elastic_stress
from .errors import SingularSystemError, ValidationError
from .formulation import Formulation
from .gradops import WeightTable, build_weight_table
from .pointcloud import BondStatus, NodeKind, PointCloud, build_families, \
    split_families

__all__ = [
    "BCSpec",
    "StaticSolution",
    "ErrorReport",
    "Discretization",
    "build_discretization",
    "residual",
    "assemble_operator",
    "solve_static",
    "rms_error",
    "convergence_rate",
]

# direct factorization up to this many unknowns, Krylov beyond
_DIRECT_LIMIT = 60_000


@dataclass
class BCSpec:
    """Boundary data: essential displacements, natural stresses, body force.

    ``essential`` maps essential node rows to prescribed displacement
    vectors (tied ghosts come from ``cloud.ties`` instead and need no
    entry).  ``natural`` maps natural-bc/free-surface rows to
    prescribed stress tensors (zero for free surfaces).  ``body_force``
    is a callable of position or a per-row dict; ``fixed_components``
    pins single displacement components of bulk nodes.
    """

    essential: Dict[int, np.ndarray] = field(default_factory=dict)
    natural: Dict[int, np.ndarray] = field(default_factory=dict)
    body_force: Optional[Callable] = None
    fixed_components: Dict[Tuple[int, int], float] = field(default_factory=dict)


@dataclass
class StaticSolution:
    u: np.ndarray            # (N, d) displacements, data rows included
    residual_norm: float     # relative algebraic residual of the solve
    n_unknowns: int
    method: str


@dataclass
class ErrorReport:
    levels: list             # per-level dicts: level, h, rms_u, rms_stress
    rate_u: float = float("nan")
    rate_stress: float = float("nan")


@dataclass
class Discretization:
    """Cloud, split families, and both weight tables for one formulation order."""

    cloud: PointCloud
    families: list
    order: int
    route: str
    delta: float
    hk: WeightTable          # kinematic weights, centers = all kinematic nodes
    hs: WeightTable          # stress weights, centers = bulk nodes
    kin_rows: np.ndarray
    bulk_rows: np.ndarray
    kin_slot: np.ndarray     # node row -> column slot, -1 elsewhere
    bulk_slot: np.ndarray
    hs_status: np.ndarray    # per stress bond, aligned with hs.neighbors


def build_discretization(cloud: PointCloud, delta: float, order: int,
                         route: str, metric: str = "physical",
                         broken=None) -> Discretization:
    families = split_families(build_families(cloud, delta, metric=metric),
                              cloud, broken=broken)
    kin_rows = np.nonzero(cloud.is_kinematic())[0]
    bulk_rows = np.nonzero(cloud.kind == NodeKind.BULK)[0]
    # deformation gradients are needed at bulk nodes and at the kinematic
    # neighbors their stress bonds reach; deeper collar nodes are pure data
    needed = np.zeros(len(cloud), dtype=bool)
    needed[bulk_rows] = True
    for c in bulk_rows:
        hk_nbrs = families[c].hk
        needed[hk_nbrs] = True
    f_rows = np.nonzero(needed & cloud.is_kinematic())[0]
    hk = build_weight_table(cloud, families, f_rows, route=route,
                            order=order, neighborhood="kinematic")
    hs = build_weight_table(cloud, families, bulk_rows, route=route,
                            order=order, neighborhood="stress")
    kin_slot = np.full(len(cloud), -1, dtype=np.int64)
    kin_slot[kin_rows] = np.arange(kin_rows.size)
    bulk_slot = np.full(len(cloud), -1, dtype=np.int64)
    bulk_slot[bulk_rows] = np.arange(bulk_rows.size)
    hs_status = np.concatenate([families[c].hs_status for c in bulk_rows]) \
        if bulk_rows.size else np.empty(0, dtype=np.int8)
    return Discretization(cloud=cloud, families=families, order=order,
                          route=route, delta=delta, hk=hk, hs=hs,
                          kin_rows=kin_rows, bulk_rows=bulk_rows,
                          kin_slot=kin_slot, bulk_slot=bulk_slot,
                          hs_status=hs_status)


def _natural_stress_array(disc: Discretization, bc: BCSpec) -> np.ndarray:
    """(N, d, d) array with prescribed stresses on natural/free rows.

    Raises when a natural-status bond points at a row without data.
    """
    cloud = disc.cloud
    d = cloud.d
    phat = np.zeros((len(cloud), d, d))
    have = np.zeros(len(cloud), dtype=bool)
    for row, P in bc.natural.items():
        phat[row] = np.asarray(P, dtype=float)
        have[row] = True
    nat_targets = disc.hs.neighbors[disc.hs_status == BondStatus.NATURAL]
    missing = nat_targets[~have[nat_targets]]
    if missing.size:
        raise ValidationError(
            f"unresolved natural-bc bond stress at node row {int(missing[0])}")
    return phat


def _full_displacement(disc: Discretization, u_bulk: np.ndarray,
                       bc: BCSpec) -> np.ndarray:
    """Expand bulk displacements into the full per-node array."""
    cloud = disc.cloud
    u = np.zeros((len(cloud), cloud.d))
    u[disc.bulk_rows] = u_bulk
    for (row, axis), val in bc.fixed_components.items():
        u[row, axis] = val
    for row, val in bc.essential.items():
        u[row] = np.asarray(val, dtype=float)
    for ghost, (mirror, signs) in cloud.ties.items():
        u[ghost] = signs * u[mirror]
    return u


def _body_force(disc: Discretization, bc: BCSpec) -> np.ndarray:
    b = np.zeros((disc.bulk_rows.size, disc.cloud.d))
    if bc.body_force is None:
        return b
    if callable(bc.body_force):
        for i, row in enumerate(disc.bulk_rows):
            b[i] = bc.body_force(disc.cloud.X[row])
    else:
        for row, val in bc.body_force.items():
            slot = disc.bulk_slot[row]
            if slot >= 0:
                b[slot] = np.asarray(val, dtype=float)
    return b


def residual(u_full: np.ndarray, disc: Discretization, material: Material,
             bc: BCSpec, formulation: Formulation) -> np.ndarray:
    """Direct-summation force density at every bulk node.

    Deliberately independent of :func:`assemble_operator`: it forms
    deformation gradients, stresses, per-bond gradients, and the
    case-split stress divergence by explicit summation.
    """
    from .correspondence import deformation_gradients

    cloud = disc.cloud
    d = cloud.d
    F = deformation_gradients(disc.hk, np.asarray(u_full, dtype=float))
    P = linear_elastic_stress(F, material)
    phat = _natural_stress_array(disc, bc)

    t = disc.hs
    nbrs = t.neighbors
    rep = np.repeat(t.centers, np.diff(t.offsets))
    status = disc.hs_status

    P_bond = np.where((status == BondStatus.KINEMATIC)[:, None, None],
                      P[nbrs], phat[nbrs])
    P_bond[status == BondStatus.BROKEN] = 0.0

    if formulation.bond_associated:
        kin = status == BondStatus.KINEMATIC
        dX = cloud.X[nbrs[kin]] - cloud.X[rep[kin]]
        r2 = np.einsum("ij,ij->i", dX, dX)
        du = u_full[nbrs[kin]] - u_full[rep[kin]]
        Fbar = 0.5 * (F[rep[kin]] + F[nbrs[kin]])
        defect = dX + du - np.einsum("kab,kb->ka", Fbar, dX)
        F_ji = F[nbrs[kin]] + defect[:, :, None] * (dX / r2[:, None])[:, None, :]
        P_bond[kin] = linear_elastic_stress(F_ji, material)

    diff = P_bond - P[rep]
    contrib = np.einsum("kab,kb->ka", diff, t.vectors)
    div = np.add.reduceat(contrib, t.offsets[:-1], axis=0)
    return div + _body_force(disc, bc)


def _difference_operators(table: WeightTable, slot: np.ndarray, ncols: int,
                          row_slot: np.ndarray):
    """Per-direction sparse difference operators sum gamma_b (f_J - f_I)."""
    d = table.vectors.shape[1]
    rep = np.repeat(table.centers, np.diff(table.offsets))
    rows = row_slot[rep]
    cols_j = slot[table.neighbors]
    cols_i = slot[rep]
    if np.any(cols_j < 0):
        raise ValidationError("difference operator references a non-column node")
    ops = []
    nrows = int(row_slot.max()) + 1
    for b in range(d):
        g = table.vectors[:, b]
        data = np.concatenate([g, -g])
        r = np.concatenate([rows, rows])
        c = np.concatenate([cols_j, cols_i])
        ops.append(sp.csr_matrix((data, (r, c)), shape=(nrows, ncols)))
    return ops


def assemble_operator(disc: Discretization, material: Material, bc: BCSpec,
                      formulation: Formulation):
    """Sparse residual map: r = A_blocks . u_kin + const.

    Returns ``(blocks, const)`` where ``blocks[a][c]`` maps the c-th
    displacement component on kinematic nodes to the a-th force
    component on bulk nodes, and ``const`` (B, d) carries the
    natural-bc stress data contributions.  Boundary data substitution
    happens in :func:`solve_static`.
    """
    cloud = disc.cloud
    d = cloud.d
    K = disc.kin_rows.size
    B = disc.bulk_rows.size
    lam, mu = material.lam, material.mu

    # kinematic-gradient difference operators over kinematic columns
    kin_rowslot = np.zeros(len(cloud), dtype=np.int64)
    kin_rowslot[disc.kin_rows] = np.arange(K)
    Dk = _difference_operators(disc.hk, disc.kin_slot, K, kin_rowslot)

    # stress maps P_ab = lam dab (D1 u1 + D2 u2) + mu (D_b u_a + D_a u_b)
    def stress_map(a, b, c):
        m = sp.csr_matrix((K, K))
        if a == b:
            m = m + lam * Dk[c]
        if c == a:
            m = m + mu * Dk[b]
        if c == b:
            m = m + mu * Dk[a]
        return m

    # stress-divergence operators: kinematic-bond columns, full diagonal
    t = disc.hs
    rep = np.repeat(t.centers, np.diff(t.offsets))
    status = disc.hs_status
    kin = status == BondStatus.KINEMATIC
    rows_all = disc.bulk_slot[rep]
    S = []
    for b in range(d):
        g = t.vectors[:, b]
        r = np.concatenate([rows_all[kin], rows_all])
        c = np.concatenate([disc.kin_slot[t.neighbors[kin]],
                            disc.kin_slot[rep]])
        data = np.concatenate([g[kin], -g])
        S.append(sp.csr_matrix((data, (r, c)), shape=(B, K)))

    blocks = [[None] * d for _ in range(d)]
    for a in range(d):
        for c in range(d):
            acc = sp.csr_matrix((B, K))
            for b in range(d):
                acc = acc + S[b] @ stress_map(a, b, c)
            blocks[a][c] = acc

    # natural-bc data contributions sum gamma_b phat[a, b]
    phat = _natural_stress_array(disc, bc)
    const = np.zeros((B, d))
    nat = status == BondStatus.NATURAL
    if np.any(nat):
        gn = t.vectors[nat]
        pj = phat[t.neighbors[nat]]
        contrib = np.einsum("kab,kb->ka", pj, gn)
        np.add.at(const, rows_all[nat], contrib)

    if formulation.bond_associated:
        nbk = int(np.count_nonzero(kin))
        dX = cloud.X[t.neighbors[kin]] - cloud.X[rep[kin]]
        r2 = np.einsum("ij,ij->i", dX, dX)
        ehat = dX / r2[:, None]
        g = t.vectors[kin]
        ge = np.einsum("kb,kb->k", g, ehat)
        slots_j = disc.kin_slot[t.neighbors[kin]]
        slots_i = disc.kin_slot[rep[kin]]
        arange = np.arange(nbk)
        E = sp.csr_matrix(
            (np.concatenate([np.ones(nbk), -np.ones(nbk)]),
             (np.concatenate([arange, arange]),
              np.concatenate([slots_j, slots_i]))), shape=(nbk, K))
        Rsum = sp.csr_matrix(
            (np.ones(2 * nbk),
             (np.concatenate([arange, arange]),
              np.concatenate([slots_i, slots_j]))), shape=(nbk, K))
        V = E
        for dd in range(d):
            V = V - 0.5 * sp.diags(dX[:, dd]) @ (Rsum @ Dk[dd])
        V = V.tocsr()
        T = sp.csr_matrix((np.ones(nbk), (rows_all[kin], arange)),
                          shape=(B, nbk))
        for a in range(d):
            for c in range(d):
                w = lam * g[:, a] * ehat[:, c] + mu * ehat[:, a] * g[:, c]
                if a == c:
                    w = w + mu * ge
                blocks[a][c] = blocks[a][c] + T @ sp.diags(w) @ V

    return blocks, const


def _constraint_expansion(disc: Discretization, bc: BCSpec):
    """Substitution u_kin = E u_unknown + g plus the kept residual rows."""
    cloud = disc.cloud
    d = cloud.d
    K = disc.kin_rows.size

    fixed = {}
    for (row, axis), val in bc.fixed_components.items():
        if disc.bulk_slot[row] < 0:
            raise ValidationError(
                f"fixed component on non-bulk node row {row}")
        fixed[(row, axis)] = float(val)

    dof_of = {}
    for row in disc.bulk_rows:
        for axis in range(d):
            if (row, axis) not in fixed:
                dof_of[(int(row), axis)] = len(dof_of)
    n_unk = len(dof_of)

    g = np.zeros(K * d)
    rows_E, cols_E, data_E = [], [], []

    def col_index(slot, axis):
        return axis * K + slot

    for row in disc.kin_rows:
        slot = disc.kin_slot[row]
        kind = cloud.kind[row]
        if int(row) in cloud.ties:
            mirror, signs = cloud.ties[int(row)]
            for axis in range(d):
                key = (int(mirror), axis)
                if key in dof_of:
                    rows_E.append(col_index(slot, axis))
                    cols_E.append(dof_of[key])
                    data_E.append(signs[axis])
                else:
                    g[col_index(slot, axis)] = signs[axis] * fixed.get(
                        (int(mirror), axis), 0.0)
        elif kind == NodeKind.ESSENTIAL:
            if int(row) not in bc.essential:
                raise ValidationError(
                    f"essential node row {int(row)} has no prescribed value")
            val = np.asarray(bc.essential[int(row)], dtype=float)
            for axis in range(d):
                g[col_index(slot, axis)] = val[axis]
        else:  # bulk
            for axis in range(d):
                key = (int(row), axis)
                if key in dof_of:
                    rows_E.append(col_index(slot, axis))
                    cols_E.append(dof_of[key])
                    data_E.append(1.0)
                else:
                    g[col_index(slot, axis)] = fixed[key]

    E = sp.csr_matrix((data_E, (rows_E, cols_E)), shape=(K * d, n_unk))

    kept = []
    for row in disc.bulk_rows:
        for axis in range(d):
            if (int(row), axis) in dof_of:
                kept.append((disc.bulk_slot[row], axis))
    return E, g, dof_of, kept


def _stack_blocks(blocks):
    return sp.bmat([[blocks[a][c] for c in range(len(blocks))]
                    for a in range(len(blocks))], format="csr")


def solve_static(disc: Discretization, material: Material, bc: BCSpec,
                 formulation: Formulation, rtol: float = 1e-10,
                 method: Optional[str] = None) -> StaticSolution:
    """Assemble, substitute boundary data, and solve for bulk displacements.

    ``method`` is ``"direct"`` (sparse LU) or ``"krylov"`` (nonsymmetric
    LGMRES at relative tolerance ``rtol``); by default small systems go
    direct and large ones iterate.  Raises
    :class:`~pdmeshfree.errors.SingularSystemError` when the essential
    constraints leave rigid modes.
    """
    d = disc.cloud.d
    B = disc.bulk_rows.size
    if not bc.essential and not bc.fixed_components and not disc.cloud.ties:
        raise SingularSystemError(
            "no essential constraints: rigid modes are unconstrained")
    blocks, const = assemble_operator(disc, material, bc, formulation)
    A_full = _stack_blocks(blocks)
    E, g, dof_of, kept = _constraint_expansion(disc, bc)
    n_unk = len(dof_of)
    if n_unk == 0:
        raise ValidationError("no unknown displacement components")

    b_body = _body_force(disc, bc)
    rhs_full = -(A_full @ g
                 + np.concatenate([const[:, a] for a in range(d)])
                 + np.concatenate([b_body[:, a] for a in range(d)]))
    # kept rows are (bulk slot, axis); rows of A_full are component-major
    keep_idx = np.array([axis * B + slot for slot, axis in kept],
                        dtype=np.int64)
    A_red = (A_full @ E)[keep_idx]
    rhs = rhs_full[keep_idx]
    if A_red.shape[0] != n_unk:
        raise SingularSystemError(
            f"constraint bookkeeping mismatch: {A_red.shape[0]} x {n_unk}")

    if method is None:
        method = "direct" if n_unk <= _DIRECT_LIMIT else "krylov"
    if method == "direct":
        try:
            lu = spla.splu(A_red.tocsc())
            x = lu.solve(rhs)
        except RuntimeError as exc:
            raise SingularSystemError(str(exc)) from exc
    elif method == "krylov":
        x, info = spla.lgmres(A_red, rhs, rtol=rtol, atol=0.0, maxiter=2000)
        if info != 0:
            raise SingularSystemError(
                f"Krylov solve did not converge (info={info})")
    else:
        raise ValidationError(f"unknown solve method {method!r}")
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("singular system: non-finite solution")

    scale = max(float(np.linalg.norm(rhs)), 1e-300)
    rnorm = float(np.linalg.norm(A_red @ x - rhs)) / scale
    if rnorm > max(rtol, 1e-8):
        raise SingularSystemError(
            f"solution residual {rnorm:.2e} exceeds tolerance")

    u_bulk = np.zeros((B, d))
    for (row, axis), j in dof_of.items():
        u_bulk[disc.bulk_slot[row], axis] = x[j]
    u_full = _full_displacement(disc, u_bulk, bc)
    return StaticSolution(u=u_full, residual_norm=rnorm, n_unknowns=n_unk,
                          method=method)


def rms_error(computed: np.ndarray, exact: np.ndarray,
              subset: np.ndarray) -> float:
    """Root-mean-square error over the scalar components of a node subset."""
    subset = np.asarray(subset)
    if subset.size == 0:
        raise ValidationError("rms_error needs a nonempty node subset")
    diff = (np.asarray(computed) - np.asarray(exact))[subset]
    return float(np.sqrt(np.mean(np.square(diff))))


def convergence_rate(errors, spacings) -> float:
    """Least-squares slope of log(error) against log(spacing)."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(spacings, dtype=float)
    if e.size < 2 or h.size != e.size:
        raise ValidationError("rate fit needs at least two levels")
    if np.any(e <= 0.0) or np.any(h <= 0.0):
        raise ValidationError("rate fit needs positive errors and spacings")
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])
