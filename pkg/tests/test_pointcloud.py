"""Cloud generation, perturbation, refinement, import, and families."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from pdmeshfree.errors import CloudFormatError, ValidationError
from pdmeshfree.pointcloud import (
    BondStatus,
    NodeKind,
    build_families,
    classify_collar,
    generate_polar_grid,
    generate_uniform_grid,
    import_cloud,
    perturb_grid,
    refine_by_midpoints,
    save_cloud,
    split_families,
)

SQUARE = [(-1.0, 1.0), (-1.0, 1.0)]


class TestUniformGrid:
    def test_square_counts_and_volumes(self):
        cloud = generate_uniform_grid(SQUARE, 0.2)
        assert len(cloud) == 100
        assert_allclose(cloud.V, 0.04)
        assert np.all(cloud.kind == NodeKind.BULK)
        assert_allclose(cloud.h, 0.2)

    def test_fine_square(self):
        cloud = generate_uniform_grid(SQUARE, 0.025)
        assert len(cloud) == 6400

    def test_1d_bar_cell_centers(self):
        cloud = generate_uniform_grid(((-6.0, 6.0),), 1.0)
        assert len(cloud) == 12
        assert_allclose(np.sort(cloud.X[:, 0]), np.arange(-5.5, 6.0, 1.0))

    def test_collar_layers_and_rule(self):
        def rule(x):
            return NodeKind.NATURAL if x[0] > 1.0 else NodeKind.ESSENTIAL

        cloud = generate_uniform_grid(SQUARE, 0.5, collar_layers=2, kind_rule=rule)
        assert len(cloud) == 8 * 8
        bulk = cloud.kind == NodeKind.BULK
        assert bulk.sum() == 16
        right = cloud.X[:, 0] > 1.0
        assert np.all(cloud.kind[right & ~bulk] == NodeKind.NATURAL)
        assert np.all(cloud.kind[~right & ~bulk] == NodeKind.ESSENTIAL)

    def test_bad_spacing(self):
        with pytest.raises(ValidationError):
            generate_uniform_grid(SQUARE, 0.3)
        with pytest.raises(ValidationError):
            generate_uniform_grid(SQUARE, -0.1)

    def test_classify_collar_retags_by_generation_position(self):
        cloud = generate_uniform_grid(SQUARE, 0.5, collar_layers=2)
        assert np.all(cloud.kind[cloud.kind != NodeKind.BULK]
                      == NodeKind.ESSENTIAL)
        retagged = classify_collar(
            cloud, lambda x: NodeKind.NATURAL if x[1] > 1.0
            else NodeKind.ESSENTIAL)
        top = retagged.X[:, 1] > 1.0
        assert np.all(retagged.kind[top] == NodeKind.NATURAL)
        assert (retagged.kind == NodeKind.BULK).sum() == 16
        # classification keys on unperturbed positions: survives perturbation
        bumpy = perturb_grid(cloud, 0.15, 1)
        re2 = classify_collar(
            bumpy, lambda x: NodeKind.NATURAL if x[1] > 1.0
            else NodeKind.ESSENTIAL)
        assert np.array_equal(re2.kind, retagged.kind)
        from pdmeshfree.pointcloud import PointCloud
        bare = PointCloud(ids=cloud.ids.copy(), X=cloud.X.copy(),
                          V=cloud.V.copy(), kind=cloud.kind.copy())
        with pytest.raises(ValidationError):
            classify_collar(bare, lambda x: NodeKind.ESSENTIAL)


class TestPerturb:
    def test_zero_sigma_identity(self):
        cloud = generate_uniform_grid(SQUARE, 0.2)
        same = perturb_grid(cloud, 0.0, seed=1)
        assert np.array_equal(same.X, cloud.X)

    def test_determinism(self):
        cloud = generate_uniform_grid(SQUARE, 0.2, collar_layers=3)
        a = perturb_grid(cloud, 0.15, seed=42)
        b = perturb_grid(cloud, 0.15, seed=42)
        assert np.array_equal(a.X, b.X)
        assert not np.array_equal(a.X, perturb_grid(cloud, 0.15, seed=43).X)

    def test_sigma_is_fraction_of_spacing(self):
        cloud = generate_uniform_grid(SQUARE, 0.2)
        moved = perturb_grid(cloud, 0.15, seed=0)
        offsets = (moved.X - cloud.X).ravel()
        # std of 200 draws at sigma = 0.03
        assert abs(offsets.std() - 0.03) < 0.005
        assert np.array_equal(moved.V, cloud.V)
        assert np.array_equal(moved.kind, cloud.kind)

    def test_negative_sigma(self):
        cloud = generate_uniform_grid(SQUARE, 0.2)
        with pytest.raises(ValidationError):
            perturb_grid(cloud, -0.1, seed=0)


class TestRefine:
    def test_1d_midpoints(self):
        cloud = generate_uniform_grid(((-0.5, 1.5),), 1.0)
        assert_allclose(np.sort(cloud.X[:, 0]), [0.0, 1.0])
        fine = refine_by_midpoints(cloud)
        assert_allclose(np.sort(fine.X[:, 0]), [0.0, 0.5, 1.0])
        assert_allclose(fine.V.sum(), cloud.V.sum(), rtol=1e-14)

    def test_volume_conservation_perturbed_2d(self):
        cloud = generate_uniform_grid(SQUARE, 0.2, collar_layers=2)
        bumpy = perturb_grid(cloud, 0.15, seed=5)
        total = bumpy.V.sum()
        for _ in range(2):
            bumpy = refine_by_midpoints(bumpy)
            assert_allclose(bumpy.V.sum(), total, rtol=1e-12)

    def test_three_refinements_reach_finest_level(self):
        cloud = generate_uniform_grid(SQUARE, 0.2)
        for _ in range(3):
            cloud = refine_by_midpoints(cloud)
        # spacing follows the kept-nodes-plus-midpoints lattice: 2/73 ~ 0.027
        assert_allclose(cloud.h, 2.0 / 73.0, rtol=1e-12)
        assert abs(cloud.h - 0.025) / 0.025 < 0.12

    def test_midpoints_of_perturbed_parents(self):
        cloud = perturb_grid(generate_uniform_grid(SQUARE, 0.5), 0.15, seed=9)
        fine = refine_by_midpoints(cloud)

        def at(c, idx):
            return c.X[np.all(c.lattice.index == np.array(idx), axis=1)][0]

        # edge child: midpoint of its two lattice-adjacent perturbed parents
        assert_allclose(at(fine, (1, 0)),
                        0.5 * (at(cloud, (0, 0)) + at(cloud, (1, 0))), atol=1e-14)
        # cell-center child: centroid of its four perturbed parents
        corners = [at(cloud, (i, j)) for i in (0, 1) for j in (0, 1)]
        assert_allclose(at(fine, (1, 1)), np.mean(corners, axis=0), atol=1e-14)

    def test_imported_cloud_cannot_refine(self, tmp_path):
        cloud = generate_uniform_grid(SQUARE, 0.5)
        path = tmp_path / "c.cloud"
        save_cloud(cloud, path)
        loaded = import_cloud(path)
        with pytest.raises(ValidationError):
            refine_by_midpoints(loaded)


class TestPolarGrid:
    def test_geometry_split(self):
        cloud = generate_polar_grid(1.0, 5.0, 10, 12, delta=2.75)
        r = np.linalg.norm(cloud.X, axis=1)
        bulk = cloud.kind == NodeKind.BULK
        hole = cloud.kind == NodeKind.FREE_SURFACE
        assert np.all(r[bulk] >= 1.0)
        assert np.all(r[hole] < 1.0)
        assert np.any(cloud.kind == NodeKind.NATURAL)
        assert np.any(cloud.kind == NodeKind.ESSENTIAL)

    def test_parametric_neighbors_differ_by_one(self):
        cloud = generate_polar_grid(1.0, 5.0, 8, 10, delta=1.75)
        xi = cloud.xi
        # nearest parametric neighbors of an interior node are at distance 1
        i = np.argmin(np.abs(xi[:, 0] - 4.5) + np.abs(xi[:, 1] - 5.5))
        d = np.linalg.norm(xi - xi[i], axis=1)
        d[i] = np.inf
        assert_allclose(np.sort(d)[:4], 1.0)

    def test_material_volume_tiles_the_plate_minus_hole(self):
        a, L = 1.0, 5.0
        target_h = 0.1
        n_r = round((L - a) / target_h)
        n_t = round(0.5 * math.pi * 0.5 * (a + L) / target_h)
        cloud = generate_polar_grid(a, L, n_r, n_t, delta=2.75)
        area = cloud.V[cloud.kind == NodeKind.BULK].sum()
        # modeled quarter-plate area minus the quarter-disc hole
        exact = math.pi * (L * L - a * a) / 4.0
        assert abs(area - exact) / exact < 0.02

    def test_ties_reflect_mirror_positions(self):
        cloud = generate_polar_grid(1.0, 5.0, 8, 10, delta=1.75)
        assert cloud.ties
        for ghost, (mirror, signs) in cloud.ties.items():
            assert cloud.kind[ghost] == NodeKind.ESSENTIAL
            assert cloud.kind[mirror] == NodeKind.BULK
            assert_allclose(cloud.X[ghost], cloud.X[mirror] * signs, atol=1e-14)

    def test_invalid_geometry(self):
        with pytest.raises(ValidationError):
            generate_polar_grid(5.0, 1.0, 8, 8)
        with pytest.raises(ValidationError):
            generate_polar_grid(1.0, 5.0, 1, 8)


class TestImport:
    def test_round_trip(self, tmp_path):
        cloud = generate_polar_grid(1.0, 5.0, 6, 8, delta=1.75)
        path = tmp_path / "polar.cloud"
        save_cloud(cloud, path)
        loaded = import_cloud(path)
        assert len(loaded) == len(cloud)
        assert_allclose(loaded.X, cloud.X)
        assert_allclose(loaded.V, cloud.V)
        assert np.array_equal(loaded.kind, cloud.kind)
        assert_allclose(loaded.xi, cloud.xi)

    def test_h_from_volumes(self, tmp_path):
        path = tmp_path / "four.cloud"
        path.write_text(
            "# four unit squares\n"
            "0 0.0 0.0 1.0 bulk\n"
            "1 1.0 0.0 1.0 bulk\n"
            "2 0.0 1.0 1.0 bulk\n"
            "3 1.0 1.0 1.0 bulk\n")
        cloud = import_cloud(path)
        assert_allclose(cloud.h, 1.0)

    @pytest.mark.parametrize("line", [
        "0 0.0 0.0 -1.0 bulk",          # nonpositive volume
        "0 0.0 0.0 1.0 wall",           # unknown kind
        "0 0.0 1.0 bulk extra junk x",  # wrong field count
        "zero 0.0 0.0 1.0 bulk",        # unparsable id
    ])
    def test_malformed_records(self, tmp_path, line):
        path = tmp_path / "bad.cloud"
        path.write_text(line + "\n")
        with pytest.raises(CloudFormatError):
            import_cloud(path)

    def test_duplicate_ids(self, tmp_path):
        path = tmp_path / "dup.cloud"
        path.write_text("7 0.0 0.0 1.0 bulk\n7 1.0 0.0 1.0 bulk\n")
        with pytest.raises(CloudFormatError):
            import_cloud(path)


class TestFamilies:
    def test_1d_six_neighbors(self):
        cloud = generate_uniform_grid(((-6.5, 6.5),), 1.0)
        fams = build_families(cloud, delta=3.0)
        center = int(np.argmin(np.abs(cloud.X[:, 0])))
        assert fams[center].neighbors.size == 6

    def test_inclusive_radius(self):
        cloud = generate_uniform_grid(((-6.5, 6.5),), 1.0)
        fams = build_families(cloud, delta=3.0)
        center = int(np.argmin(np.abs(cloud.X[:, 0])))
        dist = np.abs(cloud.X[fams[center].neighbors, 0] - cloud.X[center, 0])
        assert dist.max() == 3.0

    def test_symmetry_on_perturbed_cloud(self):
        cloud = perturb_grid(generate_uniform_grid(SQUARE, 0.2), 0.15, seed=11)
        fams = build_families(cloud, delta=0.55)
        sets = [set(f.neighbors.tolist()) for f in fams]
        for i, f in enumerate(fams):
            for j in f.neighbors:
                assert i in sets[j]

    def test_tiny_horizon_gives_empty_families(self):
        cloud = generate_uniform_grid(SQUARE, 0.2)
        fams = build_families(cloud, delta=0.05)
        assert all(f.neighbors.size == 0 for f in fams)

    def test_parametric_uniform_neighbor_count(self):
        cloud = generate_polar_grid(1.0, 5.0, 10, 12, delta=2.75)
        fams = build_families(cloud, delta=2.75, metric="parametric")
        xi = cloud.xi
        interior = [f for f in fams
                    if cloud.kind[f.center] == NodeKind.BULK
                    and 3 < xi[f.center, 0] < 6 and 3 < xi[f.center, 1] < 9]
        counts = {f.neighbors.size for f in interior}
        assert len(counts) == 1

    def test_parametric_requires_coordinates(self):
        cloud = generate_uniform_grid(SQUARE, 0.2)
        with pytest.raises(ValidationError):
            build_families(cloud, delta=0.5, metric="parametric")


class TestSplit:
    @staticmethod
    def _mixed_cloud():
        def rule(x):
            return NodeKind.NATURAL if x[1] > 1.0 else NodeKind.ESSENTIAL

        return generate_uniform_grid(SQUARE, 0.2, collar_layers=2, kind_rule=rule)

    def test_interior_bulk_full_overlap(self):
        cloud = self._mixed_cloud()
        fams = split_families(build_families(cloud, delta=0.45), cloud)
        center = int(np.argmin(np.linalg.norm(cloud.X, axis=1)))
        f = fams[center]
        assert np.array_equal(f.hk, f.hs)
        assert np.all(f.hs_status == BondStatus.KINEMATIC)

    def test_natural_neighbors_only_in_stress_set(self):
        cloud = self._mixed_cloud()
        fams = split_families(build_families(cloud, delta=0.45), cloud)
        top = int(np.argmax(cloud.X[:, 1] * (cloud.kind == NodeKind.BULK)))
        f = fams[top]
        nat = f.hs[f.hs_status == BondStatus.NATURAL]
        assert nat.size > 0
        assert np.all(cloud.kind[nat] == NodeKind.NATURAL)
        assert not np.any(np.isin(nat, f.hk))

    def test_broken_bonds(self):
        cloud = self._mixed_cloud()
        fams = build_families(cloud, delta=0.45)
        center = int(np.argmin(np.linalg.norm(cloud.X, axis=1)))
        victim = int(fams[center].neighbors[0])
        fams = split_families(fams, cloud, broken=[(center, victim)])
        f = fams[center]
        k = int(np.nonzero(f.hs == victim)[0][0])
        assert f.hs_status[k] == BondStatus.BROKEN
        assert victim not in f.hk
        # symmetric on the other end
        g = fams[victim]
        k2 = int(np.nonzero(g.hs == center)[0][0])
        assert g.hs_status[k2] == BondStatus.BROKEN
