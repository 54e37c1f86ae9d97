"""Influence functions and monomial basis machinery."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from pdmeshfree.errors import ValidationError
from pdmeshfree.kernels import (
    MonomialBasis,
    cubic_bspline,
    grad_selector,
    inverse_square,
    monomials,
    unisolvency_min_bonds,
)


class TestCubicBspline:
    def test_hand_values(self):
        assert cubic_bspline(1.0) == 0.0
        assert cubic_bspline(1.2) == 0.0
        assert_allclose(cubic_bspline(0.5), 1.0 / 6.0, rtol=1e-15)
        assert_allclose(cubic_bspline(1.0 / 3.0), 10.0 / 27.0, rtol=1e-14)
        assert_allclose(cubic_bspline(0.0), 2.0 / 3.0, rtol=1e-15)

    def test_branch_continuity(self):
        eps = 1e-9
        for knot in (0.5, 1.0):
            lo = cubic_bspline(knot - eps)
            hi = cubic_bspline(knot + eps)
            assert abs(lo - hi) < 1e-7  # C1 kernel, slope is O(1)
        # both printed branches meet exactly at the knot
        inner = 2.0 / 3.0 - 4.0 * 0.25 + 4.0 * 0.125
        outer = 4.0 / 3.0 - 2.0 + 1.0 - (4.0 / 3.0) * 0.125
        assert abs(inner - outer) < 1e-14

    def test_nonnegative_on_dense_sample(self):
        x = np.linspace(0.0, 1.5, 3001)
        assert np.all(cubic_bspline(x) >= 0.0)

    def test_negative_argument_rejected(self):
        with pytest.raises(ValidationError):
            cubic_bspline(-0.1)


class TestInverseSquare:
    def test_values(self):
        assert inverse_square(np.array([1.0, 0.0])) == 1.0
        assert inverse_square(np.array([2.0])) == 0.25
        assert_allclose(inverse_square(np.array([[0.0, 2.0], [3.0, 4.0]])),
                        [0.25, 1.0 / 25.0])

    def test_zero_separation_rejected(self):
        with pytest.raises(ValidationError):
            inverse_square(np.zeros(2))


class TestMonomialBasis:
    def test_sizes(self):
        assert MonomialBasis(1, 2).m == 2
        assert MonomialBasis(2, 2).m == 5
        assert MonomialBasis(3, 2).m == 9
        assert MonomialBasis(3, 1).m == 3

    def test_order_is_graded_lexicographic_and_stable(self):
        b = MonomialBasis(2, 2)
        assert b.exponents.tolist() == [[1, 0], [0, 1], [2, 0], [1, 1], [0, 2]]
        b3 = MonomialBasis(3, 2)
        assert b3.exponents.tolist() == [
            [1, 0], [0, 1],
            [2, 0], [1, 1], [0, 2],
            [3, 0], [2, 1], [1, 2], [0, 3],
        ]
        # round-trips through serialization without reordering
        again = np.array(eval(repr(b3.exponents.tolist())))
        assert np.array_equal(again, b3.exponents)

    def test_invalid_orders(self):
        with pytest.raises(ValidationError):
            MonomialBasis(4, 2)
        with pytest.raises(ValidationError):
            MonomialBasis(0, 2)


class TestMonomials:
    def test_linear_2d(self):
        b = MonomialBasis(1, 2)
        assert_allclose(monomials([0.3, -0.7], b), [0.3, -0.7])

    def test_cubic_1d_powers(self):
        b = MonomialBasis(3, 1)
        assert_allclose(monomials(2.0, b), [2.0, 4.0, 8.0])

    def test_quadratic_2d_values(self):
        b = MonomialBasis(2, 2)
        assert_allclose(monomials([2.0, 3.0], b), [2, 3, 4, 6, 9])

    def test_conditioning_scale(self):
        b = MonomialBasis(2, 2)
        q = monomials([2.0, 3.0], b, scale=2.0)
        assert_allclose(q, [1.0, 1.5, 1.0, 1.5, 2.25])

    def test_stacked_evaluation(self):
        b = MonomialBasis(2, 2)
        xs = np.array([[1.0, 0.0], [0.0, 2.0]])
        assert_allclose(monomials(xs, b), [[1, 0, 1, 0, 0], [0, 2, 0, 0, 4]])


class TestGradSelector:
    def test_positions(self):
        b = MonomialBasis(2, 2)
        assert_allclose(grad_selector(1, b), [1, 0, 0, 0, 0])
        assert_allclose(grad_selector(2, b), [0, 1, 0, 0, 0])
        assert_allclose(grad_selector(1, MonomialBasis(1, 1)), [1.0])

    def test_out_of_range(self):
        with pytest.raises(ValidationError):
            grad_selector(3, MonomialBasis(2, 2))

    def test_consistency_with_scaled_monomials(self):
        # selector . Q(xi) recovers the degree-1 monomial of its direction
        rng = np.random.default_rng(3)
        b = MonomialBasis(3, 2)
        for _ in range(20):
            xi = rng.normal(size=2)
            s = rng.uniform(0.5, 3.0)
            q = monomials(xi, b, scale=s)
            for j in (1, 2):
                sel = grad_selector(j, b, scale=s)
                assert_allclose(sel @ q, xi[j - 1] / s**2, rtol=1e-13)


def test_unisolvency_min_bonds():
    assert unisolvency_min_bonds(2, 2) == 5
    assert unisolvency_min_bonds(1, 1) == 1
    assert unisolvency_min_bonds(3, 2) == 9
    assert unisolvency_min_bonds(3, 3) == 19
