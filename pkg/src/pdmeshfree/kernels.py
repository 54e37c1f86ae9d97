"""Influence functions and the monomial basis used by weight construction.

Two influence (weighting) functions are provided: a cubic B-spline of
the normalized bond length, used by the reproducing-kernel route, and
an inverse-square weight of the physical separation, used by the
moving-least-squares route.  The monomial basis spans all monomials of
total degree 1..n (the constant is excluded) in a fixed graded
lexicographic order; evaluation applies a conditioning scale so moment
matrices remain well conditioned at cubic order.
"""

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .errors import ValidationError

__all__ = [
    "cubic_bspline",
    "inverse_square",
    "MonomialBasis",
    "monomials",
    "grad_selector",
    "unisolvency_min_bonds",
]


def cubic_bspline(xi_hat):
    """Cubic B-spline weight of the normalized bond length ``xi_hat``.

    Piecewise cubic on [0, 1/2] and (1/2, 1], zero beyond 1.  Accepts
    scalars or arrays; negative input is invalid.
    """
    x = np.asarray(xi_hat, dtype=float)
    if np.any(x < 0.0):
        raise ValidationError("normalized bond length must be nonnegative")
    inner = 2.0 / 3.0 - 4.0 * x**2 + 4.0 * x**3
    outer = 4.0 / 3.0 - 4.0 * x + 4.0 * x**2 - (4.0 / 3.0) * x**3
    # the outer branch evaluates to -eps at the support edge; keep it at 0
    out = np.where(x <= 0.5, inner, np.where(x <= 1.0, np.maximum(outer, 0.0), 0.0))
    if np.isscalar(xi_hat):
        return float(out)
    return out


def inverse_square(xi):
    """Inverse-square weight 1/|xi|^2 of a separation vector.

    ``xi`` is a vector of length d or an (m, d) array of separations.
    Zero separation is rejected: families never contain the center
    node, so a zero bond indicates corrupt input.
    """
    v = np.atleast_2d(np.asarray(xi, dtype=float))
    r2 = np.einsum("ij,ij->i", v, v)
    if np.any(r2 == 0.0):
        raise ValidationError("inverse-square weight undefined at zero separation")
    w = 1.0 / r2
    if np.asarray(xi).ndim == 1:
        return float(w[0])
    return w


def _graded_lex_exponents(n: int, d: int) -> np.ndarray:
    """Exponent multi-indices for degrees 1..n, graded lexicographic.

    Within each total degree the first coordinate's exponent decreases,
    e.g. for d=2, n=2: (1,0), (0,1), (2,0), (1,1), (0,2).
    """
    rows = []
    for deg in range(1, n + 1):
        if d == 1:
            rows.append((deg,))
        elif d == 2:
            for p in range(deg, -1, -1):
                rows.append((p, deg - p))
        else:
            for p in range(deg, -1, -1):
                for q in range(deg - p, -1, -1):
                    rows.append((p, q, deg - p - q))
    return np.array(rows, dtype=np.int64)


@dataclass(frozen=True)
class MonomialBasis:
    """Monomial basis of total degree 1..n in d space dimensions.

    ``m`` is the basis size (n+d)!/(n! d!) - 1; ``exponents`` holds one
    multi-index per row in the fixed graded lexicographic order used
    everywhere in the package.
    """

    n: int
    d: int
    exponents: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1 or self.n > 3:
            raise ValidationError(f"polynomial order must be 1..3, got {self.n}")
        if self.d not in (1, 2, 3):
            raise ValidationError(f"dimension must be 1, 2, or 3, got {self.d}")
        object.__setattr__(self, "exponents", _graded_lex_exponents(self.n, self.d))

    @property
    def m(self) -> int:
        return comb(self.n + self.d, self.d) - 1


def monomials(xi, basis: MonomialBasis, scale: float = 1.0) -> np.ndarray:
    """Evaluate the basis monomials at separation ``xi``.

    The argument is conditioned as xi/scale before exponentiation;
    weight builders pass the horizon as the scale so entries stay O(1).
    Accepts a single separation (d,) or a stack (m, d) / (m,) in 1D.
    """
    x = np.asarray(xi, dtype=float) / scale
    single = x.ndim == 0 or (x.ndim == 1 and basis.d > 1)
    x = np.atleast_2d(x)
    if basis.d == 1 and x.shape[0] == 1 and x.shape[1] > 1:
        x = x.T
    if x.shape[1] != basis.d:
        raise ValidationError(
            f"separation dimension {x.shape[1]} does not match basis d={basis.d}"
        )
    # (nsep, m): product over coordinates of x_c^beta_c
    q = np.ones((x.shape[0], basis.m))
    for c in range(basis.d):
        e = basis.exponents[:, c]
        q *= x[:, c : c + 1] ** e[None, :]
    return q[0] if single else q


def grad_selector(j: int, basis: MonomialBasis, scale: float = 1.0) -> np.ndarray:
    """Derivative-extraction vector for direction ``j`` (1-based).

    Zero except at the degree-1 monomial of direction j, where it holds
    the factor 1/scale compensating the conditioning applied in
    :func:`monomials`.
    """
    if not 1 <= j <= basis.d:
        raise ValidationError(f"direction {j} out of range for d={basis.d}")
    target = np.zeros(basis.d, dtype=np.int64)
    target[j - 1] = 1
    sel = np.zeros(basis.m)
    row = np.nonzero((basis.exponents == target).all(axis=1))[0][0]
    sel[row] = 1.0 / scale
    return sel


def unisolvency_min_bonds(n: int, d: int) -> int:
    """Minimum bond count for degree-n polynomial unisolvency in d dimensions."""
    if n < 1:
        raise ValidationError("order must be >= 1")
    if d not in (1, 2, 3):
        raise ValidationError("dimension must be 1, 2, or 3")
    return comb(n + d, d) - 1
