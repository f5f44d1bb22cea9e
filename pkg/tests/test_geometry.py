import numpy as np
import pytest
from scipy.spatial import cKDTree

from textileplate.errors import ParameterError
from textileplate.geometry import (
    WeaveParams,
    build_cell_mesh,
    build_solid_cell_mesh,
    build_textile_mesh,
    check_cell_mesh,
    middle_line,
    profile,
    profile_slope,
    yarn_map,
)


@pytest.fixture(scope="module")
def params():
    return WeaveParams(kappa=0.1, epsilon=0.1, L=0.2, n_periods=1, resolution=(8, 2, 2))


@pytest.fixture(scope="module")
def cell(params):
    return build_cell_mesh(params)


class TestProfile:
    def test_flat_bottom(self):
        assert profile(0.05, 0.1) == pytest.approx(-0.1, abs=1e-15)

    def test_odd_midpoint(self):
        assert profile(0.5, 0.1) == pytest.approx(0.0, abs=1e-15)

    def test_flat_top(self):
        assert profile(0.9, 0.1) == pytest.approx(0.1, abs=1e-15)

    def test_mirror(self):
        assert profile(1.5, 0.1) == pytest.approx(0.0, abs=1e-15)
        z = np.linspace(0, 1, 101)
        assert np.allclose(profile(2 - z, 0.1), profile(z, 0.1), atol=1e-14)

    def test_periodic_extension(self):
        z = np.linspace(0, 2, 57)
        assert np.allclose(profile(z + 2, 0.1), profile(z, 0.1), atol=1e-14)

    def test_range(self):
        z = np.linspace(0, 2, 1001)
        v = profile(z, 0.12)
        assert v.min() >= -0.12 - 1e-15 and v.max() <= 0.12 + 1e-15

    def test_kappa_domain(self):
        with pytest.raises(ParameterError):
            profile(0.1, 0.3)
        with pytest.raises(ParameterError):
            profile(0.1, 0.0)

    def test_c1_under_refinement(self):
        # the one-sided difference quotients of the slope must agree at the
        # piece joints, with the mismatch vanishing under grid refinement
        kappa = 0.1
        jumps = []
        for n in (10**3, 10**4):
            h = 1.0 / n
            worst = 0.0
            for z0 in (kappa, 1 - kappa, 1.0):
                left = (profile(z0, kappa) - profile(z0 - h, kappa)) / h
                right = (profile(z0 + h, kappa) - profile(z0, kappa)) / h
                worst = max(worst, abs(right - left))
            jumps.append(worst)
        assert jumps[1] < jumps[0] / 5
        assert jumps[1] < 1e-2

    def test_slope_matches_fd(self):
        z = np.linspace(0.01, 1.99, 313)
        h = 1e-7
        fd = (profile(z + h, 0.1) - profile(z - h, 0.1)) / (2 * h)
        assert np.allclose(profile_slope(z, 0.1), fd, atol=1e-6)


class TestMiddleLine:
    def test_direction1_origin(self, params):
        p = middle_line(1, 0, 0.0, params)
        assert np.allclose(p, [0.0, 0.0, 0.01], atol=1e-15)

    def test_direction2_origin(self, params):
        p = middle_line(2, 0, 0.0, params)
        assert np.allclose(p, [0.0, 0.0, -0.01], atol=1e-15)

    def test_periodicity(self, params):
        s = np.linspace(0, params.L, 17)
        a = middle_line(1, 1, s + 2 * params.epsilon, params)
        b = middle_line(1, 1, s, params)
        assert np.allclose(a - b, [2 * params.epsilon, 0, 0], atol=1e-14)

    def test_bad_direction(self, params):
        with pytest.raises(ParameterError):
            middle_line(3, 0, 0.0, params)
        with pytest.raises(ParameterError):
            middle_line(1, 99, 0.0, params)


class TestYarnMap:
    def test_zero_offset_is_midline(self, params):
        s = np.linspace(0, params.L, 11)
        z = np.column_stack([s, np.zeros_like(s), np.zeros_like(s)])
        assert np.allclose(yarn_map(1, 0, z, params), middle_line(1, 0, s, params))

    def test_flat_segment_normal(self, params):
        # on the flats the normal is e3
        ke = params.kappa * params.epsilon
        s = 0.5 * params.kappa * params.epsilon  # inside the first flat
        p = yarn_map(1, 0, np.array([s, 0.0, ke]), params)
        m = middle_line(1, 0, s, params)
        assert np.allclose(p, m + [0, 0, ke], atol=1e-15)

    def test_outside_section_rejected(self, params):
        ke = params.kappa * params.epsilon
        with pytest.raises(ParameterError):
            yarn_map(1, 0, np.array([0.0, 2 * ke, 0.0]), params)

    def test_fd_jacobian_positive(self, params):
        rng = np.random.default_rng(3)
        ke = params.kappa * params.epsilon
        h = 1e-7
        for _ in range(200):
            z = np.array(
                [
                    rng.uniform(0, params.L),
                    rng.uniform(-0.9 * ke, 0.9 * ke),
                    rng.uniform(-0.9 * ke, 0.9 * ke),
                ]
            )
            cols = []
            for j in range(3):
                dz = np.zeros(3)
                dz[j] = h
                cols.append(
                    (yarn_map(1, 0, z + dz, params) - yarn_map(1, 0, z - dz, params))
                    / (2 * h)
                )
            assert np.linalg.det(np.column_stack(cols)) > 0

    def test_injectivity_sampling(self, params):
        # distinct parameters never map within 1e-12*eps of each other
        ke = params.kappa * params.epsilon
        s = np.linspace(0, params.L, 80)
        w = np.linspace(-ke, ke, 5)
        t = np.linspace(-ke, ke, 5)
        S, Wc, T = np.meshgrid(s, w, t, indexing="ij")
        z = np.column_stack([S.ravel(), Wc.ravel(), T.ravel()])
        pts = yarn_map(1, 0, z, params)
        tree = cKDTree(pts)
        pairs = tree.query_pairs(1e-12 * params.epsilon, output_type="ndarray")
        for a, b in pairs:
            assert np.allclose(z[a], z[b])


class TestCellMesh:
    def test_invariants(self, cell):
        report = check_cell_mesh(cell)
        for name, (ok, val) in report.items():
            assert ok, f"{name} failed with {val}"

    def test_node_count_oracle(self, params, cell):
        n_ax, n_c, n_t = params.resolution
        n_f = n_c // 2
        per_yarn_axial_nodes = 2 * (n_ax + 2 * n_f) + 1
        block_sum = 2 * per_yarn_axial_nodes * (n_t + 1) * (4 * n_f + 3)
        duplicates = (
            (2 * n_f + 1) ** 2
            + 4 * (n_f + 1) * (2 * n_f + 1)
            + 4 * (n_f + 1) ** 2
        )
        assert cell.n_nodes == block_sum - duplicates

    def test_contact_faces_on_plane(self, cell):
        assert len(cell.contact_faces) == 4  # one group per crossing
        for _, idx in cell.contact_faces:
            assert np.abs(cell.nodes[idx, 2]).max() < 1e-12

    def test_periodic_offsets_exact(self, cell):
        for s, m, axis in cell.periodic_pairs:
            delta = cell.nodes[s] - cell.nodes[m]
            expect = np.zeros(3)
            expect[axis] = 2.0
            assert np.abs(delta - expect).max() < 1e-10

    def test_material_tags_per_yarn(self, cell):
        assert set(np.unique(cell.material_tag)) == {0, 1, 2, 3}

    def test_solid_variant_has_more_elements(self, params, cell):
        solid = build_solid_cell_mesh(params)
        assert solid.n_hexes > cell.n_hexes

    def test_too_large_kappa_rejected(self):
        with pytest.raises(ParameterError):
            WeaveParams(kappa=0.3)

    def test_odd_cross_resolution_rejected(self):
        with pytest.raises(ParameterError):
            WeaveParams(kappa=0.1, resolution=(8, 3, 2))


class TestSolidCell:
    def test_counts_and_volume(self, params):
        solid = build_solid_cell_mesh(params, grid=(8, 8, 4))
        assert solid.n_hexes == 256
        assert solid.quad_data().volume == pytest.approx(1.6, rel=1e-12)

    def test_periodic_pair_count(self, params):
        solid = build_solid_cell_mesh(params, grid=(8, 8, 4))
        assert len(solid.periodic_pairs) == 2 * 9 * 5

    def test_invariants(self, params):
        report = check_cell_mesh(build_solid_cell_mesh(params, grid=(6, 6, 4)))
        for name, (ok, val) in report.items():
            assert ok, f"{name} failed with {val}"


class TestTextileMesh:
    def test_single_period_matches_cell(self, params, cell):
        tex = build_textile_mesh(params)
        assert tex.n_hexes == cell.n_hexes
        assert tex.n_nodes == cell.n_nodes
        assert np.allclose(tex.nodes, cell.nodes * params.epsilon, atol=1e-14)

    def test_element_count_scales_quadratically(self, cell):
        p2 = WeaveParams(kappa=0.1, epsilon=0.1, L=0.4, n_periods=2, resolution=(8, 2, 2))
        tex = build_textile_mesh(p2)
        assert tex.n_hexes == 4 * cell.n_hexes

    def test_no_duplicate_nodes(self):
        p2 = WeaveParams(kappa=0.1, epsilon=0.1, L=0.4, n_periods=2, resolution=(8, 2, 2))
        tex = build_textile_mesh(p2)
        tree = cKDTree(tex.nodes)
        assert len(tree.query_pairs(1e-8 * p2.epsilon)) == 0

    def test_gamma_nodes_tagged(self):
        p2 = WeaveParams(kappa=0.1, epsilon=0.1, L=0.4, n_periods=2, resolution=(8, 2, 2))
        tex = build_textile_mesh(p2)
        assert len(tex.gamma_nodes) > 0
        assert np.abs(tex.nodes[tex.gamma_nodes, 1]).max() < 1e-12

    def test_inconsistent_length_rejected(self):
        with pytest.raises(ParameterError):
            build_textile_mesh(
                WeaveParams(kappa=0.1, epsilon=0.1, L=1.0, n_periods=2, resolution=(8, 2, 2))
            )
