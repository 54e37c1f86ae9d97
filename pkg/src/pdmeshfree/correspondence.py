"""Correspondence-model kinematics and constitutive evaluation.

Displacements enter through nonlocal deformation gradients built from
the kinematic neighborhood; stresses follow from a small-strain linear
elastic law and diverge back to force densities through the stress
neighborhood.  The bond-associated variant evaluates a distinct
deformation gradient per bond, which removes the zero-energy
oscillations of the base operator without tuning parameters.  Bonds to
natural-bc or free-surface nodes carry externally prescribed stress
tensors instead of kinematics; broken bonds carry zero stress.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .gradops import GradientWeights, WeightTable
from .pointcloud import BondStatus

__all__ = [
    "Material",
    "KinematicState",
    "deformation_gradient",
    "deformation_gradients",
    "bond_deformation_gradient",
    "linear_elastic_stress",
    "stress_1d",
    "stress_divergence_base",
    "stress_divergence_ba",
]


@dataclass(frozen=True)
class Material:
    """Linear elastic material via its Lame parameters."""

    lam: float
    mu: float

    def __post_init__(self):
        if self.mu <= 0.0:
            raise ValidationError("shear modulus must be positive")

    @classmethod
    def plane_strain(cls, E: float, nu: float) -> "Material":
        if not (0.0 <= nu < 0.5):
            raise ValidationError("plane strain requires 0 <= nu < 0.5")
        lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        mu = E / (2.0 * (1.0 + nu))
        return cls(lam=lam, mu=mu)

    @property
    def p_wave_modulus(self) -> float:
        """lam + 2 mu, the stress scale used by residual tolerances."""
        return self.lam + 2.0 * self.mu


@dataclass
class KinematicState:
    """Displacements and the deformation gradients derived from them."""

    u: np.ndarray  # (N, d)
    F: np.ndarray  # (N, d, d); identity rows where no gradient was built


def deformation_gradient(weights: GradientWeights, u: np.ndarray) -> np.ndarray:
    """Nonlocal deformation gradient at one node from its kinematic bonds."""
    u = np.asarray(u)
    d = u.shape[1]
    diff = u[weights.neighbors] - u[weights.center]
    return np.eye(d, dtype=diff.dtype) + np.einsum("ka,kj->aj", diff,
                                                   weights.vectors)


def deformation_gradients(table: WeightTable, u: np.ndarray,
                          out: np.ndarray = None) -> np.ndarray:
    """Deformation gradients for every center of a kinematic weight table.

    Returns an (N, d, d) array over all node rows, identity where the
    table holds no weights.  ``out`` may supply a preallocated array.
    """
    u = np.asarray(u)
    n, d = u.shape
    if out is None:
        out = np.broadcast_to(np.eye(d, dtype=u.dtype), (n, d, d)).copy()
    rep = np.repeat(table.centers, np.diff(table.offsets))
    diff = u[table.neighbors] - u[rep]
    contrib = diff[:, :, None] * table.vectors[:, None, :]
    sums = np.add.reduceat(contrib, table.offsets[:-1], axis=0)
    out[table.centers] += sums
    return out


def bond_deformation_gradient(F_I, F_J, X_I, X_J, x_I, x_J) -> np.ndarray:
    """Per-bond deformation gradient with the nonhomogeneous correction.

    Adds to the neighbor gradient the rank-one term aligning the bond's
    midpoint-rule stretch with the actual relative current positions;
    the correction vanishes for homogeneous deformations.
    """
    F_I = np.atleast_2d(np.asarray(F_I))
    F_J = np.atleast_2d(np.asarray(F_J))
    dX = np.atleast_1d(np.asarray(X_J, dtype=float) - np.asarray(X_I, dtype=float))
    r2 = float(dX @ dX)
    if r2 == 0.0:
        raise ValidationError("coincident reference positions on a bond")
    dx = np.atleast_1d(np.asarray(x_J) - np.asarray(x_I))
    defect = dx - 0.5 * (F_I + F_J) @ dX
    return F_J + np.outer(defect, dX) / r2


def linear_elastic_stress(F, material: Material) -> np.ndarray:
    """Small-strain stress of one or many deformation gradients.

    strain = sym(F) - I; stress = lam tr(strain) I + 2 mu strain.
    Accepts (d, d) or stacked (..., d, d) input.
    """
    F = np.asarray(F)
    d = F.shape[-1]
    eye = np.eye(d, dtype=F.dtype)
    eps = 0.5 * (F + np.swapaxes(F, -1, -2)) - eye
    tr = np.trace(eps, axis1=-2, axis2=-1)
    return material.lam * tr[..., None, None] * eye + 2.0 * material.mu * eps


def stress_1d(F, E: float):
    """Linear 1D bar stress E (F - 1); accepts scalars or arrays."""
    return E * (np.asarray(F) - 1.0)


def stress_divergence_base(weights: GradientWeights,
                           stresses: np.ndarray) -> np.ndarray:
    """Base force density sum([P_J - P_I] . gamma) over the stress bonds.

    ``stresses`` holds one (d, d) tensor per node row; prescribed
    boundary stresses must already occupy the natural-bc/free-surface
    rows.
    """
    P = np.asarray(stresses)
    diff = P[weights.neighbors] - P[weights.center]
    return np.einsum("kab,kb->a", diff, weights.vectors)


def stress_divergence_ba(weights: GradientWeights, state: KinematicState,
                         bond_status: np.ndarray, prescribed: np.ndarray,
                         material: Material, X: np.ndarray,
                         include_correction: bool = True) -> np.ndarray:
    """Bond-associated force density at one node with the stress case split.

    Kinematic bonds evaluate the constitutive law on the per-bond
    deformation gradient, natural-bc bonds substitute the prescribed
    neighbor stress, and broken bonds contribute zero stress; every
    bond still subtracts the center stress.  Turning the
    nonhomogeneous correction off (``include_correction=False``)
    reduces the kinematic-bond stress to the neighbor's own stress,
    i.e. the base operator with identical weights.
    """
    c = weights.center
    nbrs = weights.neighbors
    status = np.asarray(bond_status)
    if status.shape[0] != nbrs.shape[0]:
        raise ValidationError("bond status array does not match the bond count")
    d = state.u.shape[1]
    P_I = linear_elastic_stress(state.F[c], material)
    total = np.zeros(d, dtype=state.u.dtype)
    for k, j in enumerate(nbrs):
        if status[k] == BondStatus.KINEMATIC:
            if include_correction:
                F_ji = bond_deformation_gradient(
                    state.F[c], state.F[j], X[c], X[j],
                    X[c] + state.u[c], X[j] + state.u[j])
            else:
                F_ji = state.F[j]
            P_ji = linear_elastic_stress(F_ji, material)
        elif status[k] == BondStatus.NATURAL:
            P_ji = np.asarray(prescribed[j])
            if np.any(np.isnan(P_ji)):
                raise ValidationError(
                    f"no prescribed stress for natural-bc bond to node row {j}")
        else:
            P_ji = np.zeros((d, d))
        total += (P_ji - P_I) @ weights.vectors[k]
    return total
