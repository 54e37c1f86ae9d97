"""Gradient weight construction: hand oracles, reproduction, minimality."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from pdmeshfree import _backend, _weights_numpy
from pdmeshfree.errors import UnisolvencyError, ValidationError
from pdmeshfree.gradops import (
    InfluenceFunction,
    build_weight_table,
    gmls_weights,
    nonlocal_gradient,
    rk_moment_matrix,
    rk_weights,
    verify_reproduction,
)
from pdmeshfree.kernels import MonomialBasis, cubic_bspline, monomials
from pdmeshfree.pointcloud import (
    Family,
    PointCloud,
    build_families,
    generate_uniform_grid,
    perturb_grid,
    split_families,
)

SQUARE = [(-1.0, 1.0), (-1.0, 1.0)]
DELTA_BY_ORDER = {1: 2.5, 2: 3.5, 3: 4.5}


def _line_cloud(xs, vol=1.0):
    xs = np.asarray(xs, dtype=float)
    return PointCloud(ids=np.arange(xs.size), X=xs, V=np.full(xs.size, vol),
                      kind=np.zeros(xs.size, dtype=np.int8))


def _family_of(cloud, center, delta, metric="physical"):
    fams = build_families(cloud, delta, metric=metric)
    return split_families(fams, cloud)[center]


def _perturbed_cloud(h=0.2, seed=0):
    return perturb_grid(generate_uniform_grid(SQUARE, h), 0.15, seed=seed)


class TestInfluenceFunction:
    def test_inverse_square_variant(self):
        inf = InfluenceFunction("inverse-square")
        sep = np.array([[2.0, 0.0], [0.0, 0.5]])
        assert_allclose(inf.alpha(None, sep), [0.25, 4.0])

    def test_bspline_variant_normalizes_by_delta(self):
        inf = InfluenceFunction("cubic-bspline", delta=2.0)
        assert_allclose(inf.alpha(np.array([1.0])), [cubic_bspline(0.5)])

    def test_unknown_variant(self):
        with pytest.raises(ValidationError):
            InfluenceFunction("gaussian")


class TestMomentMatrix:
    def test_two_neighbor_value(self):
        h, v = 0.25, 0.3
        cloud = _line_cloud([-h, 0.0, h], vol=v)
        fam = _family_of(cloud, 1, h)
        inf = InfluenceFunction("cubic-bspline", delta=2 * h)
        M = rk_moment_matrix(fam, cloud, inf, MonomialBasis(1, 1), scale=1.0)
        alpha = cubic_bspline(0.5)
        assert_allclose(M, [[2.0 * alpha * v * h * h]], rtol=1e-14)

    def test_symmetric(self):
        cloud = _perturbed_cloud()
        fam = _family_of(cloud, 44, 0.7)
        inf = InfluenceFunction("cubic-bspline", delta=0.7)
        M = rk_moment_matrix(fam, cloud, inf, MonomialBasis(2, 2))
        assert_allclose(M, M.T, atol=1e-15 * np.abs(M).max())

    def test_empty_family_zero_matrix(self):
        cloud = _line_cloud([0.0, 10.0])
        fam = Family(center=0, delta=1.0, metric="physical",
                     neighbors=np.empty(0, dtype=np.int64))
        inf = InfluenceFunction("cubic-bspline", delta=1.0)
        M = rk_moment_matrix(fam, cloud, inf, MonomialBasis(2, 1))
        assert np.all(M == 0.0)


class TestRkWeights:
    def test_central_difference_oracle(self):
        # two bonds at +-h and a linear basis solve to +-1/(2h) exactly,
        # independent of the influence normalization
        h = 0.25
        cloud = _line_cloud([-h, 0.0, h])
        fam = _family_of(cloud, 1, h)
        for infl_delta in (2 * h, 4 * h):
            inf = InfluenceFunction("cubic-bspline", delta=infl_delta)
            gw = rk_weights(fam, cloud, inf, MonomialBasis(1, 1))
            assert_allclose(np.sort(gw.vectors.ravel()), [-2.0, 2.0], rtol=1e-13)

    def test_affine_reproduction_any_family(self):
        cloud = _perturbed_cloud(seed=3)
        fam = _family_of(cloud, 37, 0.5)
        inf = InfluenceFunction("cubic-bspline", delta=0.5)
        gw = rk_weights(fam, cloud, inf, MonomialBasis(1, 2))
        u = 0.3 * cloud.X[:, 0] - 1.7 * cloud.X[:, 1]
        assert_allclose(nonlocal_gradient(u, gw), [0.3, -1.7], atol=1e-11)

    def test_collinear_family_fails(self):
        cloud = PointCloud(ids=np.arange(4),
                           X=np.array([[0, 0], [1, 0], [2, 0], [3, 0.0]]),
                           V=np.ones(4), kind=np.zeros(4, dtype=np.int8))
        fam = _family_of(cloud, 0, 3.0)
        inf = InfluenceFunction("cubic-bspline", delta=4.0)
        with pytest.raises(UnisolvencyError):
            rk_weights(fam, cloud, inf, MonomialBasis(1, 2))


class TestGmlsWeights:
    def test_minimum_norm_oracle(self):
        # minimize w+^2 + w-^2 subject to w+ + w- = 1  ->  w = 1/2 each
        cloud = _line_cloud([-1.0, 0.0, 1.0])
        fam = _family_of(cloud, 1, 1.0)
        gw = gmls_weights(fam, cloud, MonomialBasis(1, 1))
        assert_allclose(np.sort(gw.vectors.ravel()), [-0.5, 0.5], rtol=1e-14)

    def test_constraint_residual_on_random_clouds(self):
        for seed in range(5):
            cloud = _perturbed_cloud(seed=seed)
            fam = _family_of(cloud, 51, 0.7)
            gw = gmls_weights(fam, cloud, MonomialBasis(2, 2))
            basis = MonomialBasis(2, 2)
            dx = cloud.X[gw.neighbors] - cloud.X[51]
            Q = monomials(dx, basis)
            resid = Q.T @ gw.vectors  # (m, d), exact rows: identity on degree 1
            want = np.zeros((basis.m, 2))
            want[0, 0] = want[1, 1] = 1.0
            assert np.abs(resid - want).max() < 1e-10

    def test_minimality_orthogonal_to_null_space(self):
        rng = np.random.default_rng(8)
        cloud = _perturbed_cloud(seed=12)
        fam = _family_of(cloud, 64, 0.6)
        basis = MonomialBasis(1, 2)
        gw = gmls_weights(fam, cloud, basis)
        dx = cloud.X[gw.neighbors] - cloud.X[64]
        r2 = np.einsum("ij,ij->i", dx, dx)
        Q = monomials(dx, basis)
        nb = dx.shape[0]
        # constraint matrix over the flattened per-bond weight tensors
        B = np.zeros((basis.m, nb * 2))
        for k in range(nb):
            for c in range(2):
                B[:, 2 * k + c] = Q[k] * dx[k, c] / r2[k]
        for j in range(2):
            omega = np.zeros(nb * 2)
            for k in range(nb):
                omega[2 * k: 2 * k + 2] = gw.vectors[k, j] * dx[k]
            # project random directions onto null(B); optimal omega _|_ null(B)
            z = rng.normal(size=(nb * 2, 6))
            z -= np.linalg.pinv(B) @ (B @ z)
            assert np.abs(omega @ z).max() < 1e-10 * np.linalg.norm(omega)

    def test_rank_deficient_constraints_fail(self):
        cloud = PointCloud(ids=np.arange(3),
                           X=np.array([[0.0, 0], [1, 0], [-1, 0]]),
                           V=np.ones(3), kind=np.zeros(3, dtype=np.int8))
        fam = _family_of(cloud, 0, 1.5)
        with pytest.raises(UnisolvencyError):
            gmls_weights(fam, cloud, MonomialBasis(1, 2))


class TestRoutesAgree:
    def test_square_constraint_system_unique_solution(self):
        # bond count equals basis size: the reproduction system pins gamma
        h = 0.4
        cloud = _line_cloud([-h, 0.0, h])
        fam = _family_of(cloud, 1, h)
        basis = MonomialBasis(2, 1)
        inf = InfluenceFunction("cubic-bspline", delta=3 * h)
        rk = rk_weights(fam, cloud, inf, basis)
        gm = gmls_weights(fam, cloud, basis)
        assert_allclose(rk.vectors, gm.vectors, atol=1e-10 / h)

    def test_square_system_2d(self):
        cloud = PointCloud(ids=np.arange(3),
                           X=np.array([[0.0, 0.0], [0.7, 0.1], [-0.2, 0.8]]),
                           V=np.array([1.0, 2.0, 0.5]),
                           kind=np.zeros(3, dtype=np.int8))
        fam = _family_of(cloud, 0, 2.0)
        basis = MonomialBasis(1, 2)
        inf = InfluenceFunction("cubic-bspline", delta=2.0)
        rk = rk_weights(fam, cloud, inf, basis)
        gm = gmls_weights(fam, cloud, basis)
        assert_allclose(rk.vectors, gm.vectors, atol=1e-12)


class TestReproduction:
    @pytest.mark.parametrize("route", ["rk", "gmls"])
    @pytest.mark.parametrize("order", [1, 2, 3])
    def test_polynomial_reproduction_perturbed(self, route, order):
        delta_h = DELTA_BY_ORDER[order]
        for seed in range(10):
            cloud = _perturbed_cloud(h=0.2, seed=seed)
            delta = delta_h * 0.2
            fams = split_families(build_families(cloud, delta), cloud)
            centers = [44, 55, 62]
            table = build_weight_table(cloud, fams, centers, route=route,
                                       order=order, neighborhood="stress")
            for c in centers:
                err = verify_reproduction(table.weights_for(c), fams[c], cloud, order)
                assert err < 1e-9

    def test_probing_beyond_build_order_fails(self):
        cloud = _perturbed_cloud(seed=2)
        fam = _family_of(cloud, 44, 0.5)
        inf = InfluenceFunction("cubic-bspline", delta=0.5)
        gw = rk_weights(fam, cloud, inf, MonomialBasis(1, 2))
        assert verify_reproduction(gw, fam, cloud, 2) > 1e-6


class TestScaleCovariance:
    @pytest.mark.parametrize("route", ["rk", "gmls"])
    def test_gamma_scales_inversely_with_positions(self, route):
        cloud = _perturbed_cloud(seed=21)
        fams = split_families(build_families(cloud, 0.7), cloud)
        for s in (2.0, 0.5):
            scaled = PointCloud(ids=cloud.ids.copy(), X=cloud.X * s,
                                V=cloud.V * s**2, kind=cloud.kind.copy())
            sfams = split_families(build_families(scaled, 0.7 * s), scaled)
            args = ([44], )
            t1 = build_weight_table(cloud, fams, [44], route=route, order=2,
                                    neighborhood="stress")
            t2 = build_weight_table(scaled, sfams, [44], route=route, order=2,
                                    neighborhood="stress")
            assert np.array_equal(t1.neighbors, t2.neighbors)
            assert_allclose(t2.vectors, t1.vectors / s, rtol=1e-12)


class TestNonlocalGradient:
    def test_constant_field_zero(self):
        cloud = _perturbed_cloud(seed=4)
        fam = _family_of(cloud, 33, 0.6)
        gw = gmls_weights(fam, cloud, MonomialBasis(2, 2))
        assert_allclose(nonlocal_gradient(np.full(len(cloud), 3.7), gw),
                        0.0, atol=1e-12)

    def test_identity_map_gives_identity(self):
        cloud = _perturbed_cloud(seed=4)
        fam = _family_of(cloud, 33, 0.5)
        inf = InfluenceFunction("cubic-bspline", delta=0.5)
        for order in (1, 2):
            gw = rk_weights(fam, cloud, inf, MonomialBasis(order, 2))
            grad = nonlocal_gradient(cloud.X, gw)
            assert_allclose(grad, np.eye(2), atol=1e-11)

    def test_quadratic_gradient_exact(self):
        for seed in range(5):
            cloud = _perturbed_cloud(seed=seed)
            fams = split_families(build_families(cloud, 0.7), cloud)
            c = 57
            t = build_weight_table(cloud, fams, [c], route="gmls", order=2,
                                   neighborhood="stress")
            f = cloud.X[:, 0] ** 2
            got = nonlocal_gradient(f, t.weights_for(c))
            want = np.array([2 * cloud.X[c, 0], 0.0])
            assert np.abs(got - want).max() < 1e-9 * max(1.0, np.abs(want).max())


@pytest.mark.skipif(not _backend.HAVE_NUMBA, reason="numba not installed")
class TestBackendParity:
    def test_tables_match(self):
        from pdmeshfree import _weights_numba
        cloud = _perturbed_cloud(seed=17)
        fams = split_families(build_families(cloud, 0.7), cloud)
        centers = np.arange(len(cloud))
        table = build_weight_table(cloud, fams, centers, route="rk", order=2,
                                   neighborhood="stress")
        bonds = [fams[c].hs for c in centers]
        counts = np.array([b.size for b in bonds])
        offsets = np.zeros(centers.size + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        nbrs = np.concatenate(bonds).astype(np.int64)
        rep = np.repeat(centers, counts)
        dx = cloud.X[nbrs] - cloud.X[rep]
        r = np.sqrt(np.einsum("ij,ij->i", dx, dx))
        scales = np.array([r[offsets[k]:offsets[k + 1]].max()
                           for k in range(centers.size)])
        basis = MonomialBasis(2, 2)
        alpha = cubic_bspline(r / 0.7)
        g_np, bad_np = _weights_numpy.rk_gamma(offsets, dx, alpha, cloud.V[nbrs],
                                               basis.exponents, scales, 1e-12)
        g_nb, bad_nb = _weights_numba.rk_gamma(offsets, dx, alpha, cloud.V[nbrs],
                                               basis.exponents, scales, 1e-12)
        assert np.array_equal(bad_np, bad_nb)
        assert_allclose(g_np, g_nb, rtol=1e-12, atol=1e-14)
        g2_np, _ = _weights_numpy.gmls_gamma(offsets, dx, basis.exponents,
                                             scales, 1e-12)
        g2_nb, _ = _weights_numba.gmls_gamma(offsets, dx, basis.exponents,
                                             scales, 1e-12)
        assert_allclose(g2_np, g2_nb, rtol=1e-12, atol=1e-14)
