import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfsphere.limits import PureStateSpec, sample_pure_state, sample_tilted_mixture
from rfsphere.measure import (
    EmpiricalLaw1D,
    WindowFingerprint,
    approximate_by_atoms,
    aw_density_cells,
    bl_distance_1d,
    cell_histogram,
    coupling_weight_constant,
    eq_partition,
    fingerprint_state,
    product_bl_upper_bound,
    tv_distance,
)
from rfsphere.model import CriticalConstants, ModelParams

RNG = np.random.default_rng(99)
TWO_PI = 2 * math.pi


class TestPartitions:
    def test_circle_four_arcs(self):
        part = eq_partition(1, 4)
        widths = part.bounds[:, 1] - part.bounds[:, 0]
        assert np.allclose(widths, math.pi / 2, atol=1e-15)

    def test_sphere_ten_cells(self):
        part = eq_partition(2, 10)
        assert part.num_cells == 10
        assert np.allclose(part.areas(), 4 * math.pi / 10, atol=1e-10)

    @pytest.mark.parametrize("dim", [1, 2])
    @pytest.mark.parametrize("cells", [8, 32, 128, 200])
    def test_equal_areas_and_cover(self, dim, cells):
        part = eq_partition(dim, cells)
        assert np.max(np.abs(part.areas() - part.cell_area)) <= 1e-10
        assert part.areas().sum() == pytest.approx(part.sphere_area, abs=1e-9)

    @pytest.mark.parametrize("dim", [1, 2])
    def test_diameter_scaling(self, dim):
        scales = []
        for cells in (8, 32, 128):
            part = eq_partition(dim, cells)
            scales.append(part.cell_diameters().max() * cells ** (1.0 / dim))
        assert max(scales) <= 1.1 * scales[0]

    def test_representatives_interior(self):
        part = eq_partition(2, 33)
        reps = part.representatives()
        assert np.allclose(np.linalg.norm(reps, axis=1), 1.0, atol=1e-12)
        assert np.array_equal(part.assign(reps), np.arange(33))

    def test_minimum_cells(self):
        with pytest.raises(ValueError):
            eq_partition(1, 1)


class TestHistogram:
    def test_point_mass_in_first_cell(self):
        part = eq_partition(2, 6)
        rep = part.representatives()[0]
        hist = cell_histogram(np.tile(rep, (50, 1)), part)
        assert hist.counts[0] == 50 and hist.counts[1:].sum() == 0

    def test_uniform_concentration(self):
        part = eq_partition(2, 16)
        pts = RNG.standard_normal((1_000_000, 3))
        pts /= np.linalg.norm(pts, axis=1)[:, None]
        hist = cell_histogram(pts, part)
        assert np.max(np.abs(hist.fractions - 1.0 / 16)) <= 0.003

    def test_boundary_tie_lowest_index(self):
        part = eq_partition(1, 4)
        boundary = np.array([[math.cos(math.pi / 2), math.sin(math.pi / 2)]])
        assert part.assign(boundary)[0] == 0
        # colatitude boundary on the 2-sphere: tie goes to the band above
        part2 = eq_partition(2, 8)
        z = part2.cos_band_bounds[0]
        point = np.array([[math.sqrt(1 - z * z), 0.0, z]])
        assert part2.assign(point)[0] == 0

    def test_rejects_off_sphere_and_zero(self):
        part = eq_partition(1, 4)
        with pytest.raises(ValueError):
            cell_histogram(np.array([[0.0, 0.0]]), part)
        with pytest.raises(ValueError):
            cell_histogram(np.array([[1.5, 0.0]]), part)


class TestEmpiricalLaw:
    def test_sorted_and_support(self):
        law = EmpiricalLaw1D.from_samples([3.0, 1.0, 2.0], support=(0, 5))
        assert np.array_equal(law.values, [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            EmpiricalLaw1D.from_samples([7.0], support=(0, 5))
        with pytest.raises(ValueError):
            EmpiricalLaw1D.from_samples([])


class TestBLDistance:
    def test_identical_is_zero(self):
        law = EmpiricalLaw1D.from_samples(RNG.normal(size=100))
        assert bl_distance_1d(law, law) == 0.0

    def test_point_masses(self):
        a = EmpiricalLaw1D.from_samples([0.0])
        b = EmpiricalLaw1D.from_samples([0.5])
        assert bl_distance_1d(a, b) == pytest.approx(0.5, abs=1e-15)

    def test_translation_of_uniform(self):
        u = RNG.uniform(0, 1, size=100_000)
        v = RNG.uniform(0, 1, size=100_000) + 0.1
        d = bl_distance_1d(EmpiricalLaw1D.from_samples(u), EmpiricalLaw1D.from_samples(v))
        assert d == pytest.approx(0.1, abs=0.005)

    def test_cap_at_two(self):
        a = EmpiricalLaw1D.from_samples([0.0])
        b = EmpiricalLaw1D.from_samples([100.0])
        assert bl_distance_1d(a, b) == 2.0

    def test_metric_axioms(self):
        laws = [EmpiricalLaw1D.from_samples(RNG.uniform(-1, 1, size=50))
                for _ in range(30)]
        for _ in range(100):
            i, j, k = RNG.integers(0, len(laws), size=3)
            d_ij = bl_distance_1d(laws[i], laws[j])
            d_ji = bl_distance_1d(laws[j], laws[i])
            assert d_ij == pytest.approx(d_ji, abs=1e-12)
            if i == j:
                assert d_ij == 0.0
            d_ik = bl_distance_1d(laws[i], laws[k])
            d_kj = bl_distance_1d(laws[k], laws[j])
            assert d_ij <= d_ik + d_kj + 1e-12

    def test_unequal_sample_sizes(self):
        a = EmpiricalLaw1D.from_samples([0.0, 1.0])
        b = EmpiricalLaw1D.from_samples([0.0, 0.0, 1.0])
        # W1 between {0: 1/2, 1: 1/2} and {0: 2/3, 1: 1/3} is 1/6
        assert bl_distance_1d(a, b) == pytest.approx(1 / 6, abs=1e-12)


def make_fp(means, stdevs):
    means = np.asarray(means, dtype=float)
    stdevs = np.asarray(stdevs, dtype=float)
    return WindowFingerprint(
        sites=np.arange(means.shape[0]), means=means, stdevs=stdevs,
        direction=np.eye(means.shape[1])[0], tilt_magnitude=None,
    )


class TestCouplingBound:
    def test_weight_constant(self):
        assert coupling_weight_constant(2) == pytest.approx(0.75, abs=1e-15)
        assert coupling_weight_constant(1) == pytest.approx(0.5, abs=1e-15)

    def test_identical_fingerprints_tail_only(self):
        fp = make_fp(RNG.normal(size=(5, 2)), RNG.uniform(0.1, 1, size=(5, 2)))
        assert product_bl_upper_bound(fp, fp, 3) == pytest.approx(0.25, abs=1e-12)

    def test_monotone_in_window(self):
        fa = make_fp(RNG.normal(size=(8, 2)), RNG.uniform(0.1, 1, size=(8, 2)))
        fb = make_fp(RNG.normal(size=(8, 2)), RNG.uniform(0.1, 1, size=(8, 2)))
        values = [product_bl_upper_bound(fa, fb, k) for k in range(1, 9)]
        assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))

    def test_bounds_actual_distance_for_gaussians(self):
        # the truncated coupling cost should dominate a Monte Carlo estimate
        fa = make_fp([[0.0]], [[1.0]])
        fb = make_fp([[0.4]], [[1.3]])
        bound = product_bl_upper_bound(fa, fb, 1)
        z = RNG.standard_normal(200_000)
        direct = np.mean(np.minimum(np.abs(0.4 + 0.3 * z), 1.0))
        weighted = direct * 0.25 / coupling_weight_constant(1) + 1.0  # tail k=1
        assert bound == pytest.approx(weighted, abs=0.01)

    def test_mismatched_windows_raise(self):
        fa = make_fp(np.zeros((3, 2)), np.ones((3, 2)))
        fb = make_fp(np.zeros((4, 2)), np.ones((4, 2)))
        with pytest.raises(ValueError):
            product_bl_upper_bound(fa, fb, 3)


class TestAWDensity:
    def test_isotropic_uniform(self):
        part = eq_partition(1, 8)
        masses = aw_density_cells(0.2 * np.eye(2), part)
        assert np.allclose(masses, 0.125, atol=1e-10)

    def test_masses_sum_to_one(self):
        part = eq_partition(1, 64)
        masses = aw_density_cells(np.diag([0.1, 0.4]), part)
        assert masses.sum() == pytest.approx(1.0, abs=1e-8)

    def test_closed_form_arc_integrals(self):
        # for d = 2 the unnormalized mass of [lo, hi] has an arctan closed form
        a, b = 0.1, 0.4
        sigma = np.diag([a, b])
        part = eq_partition(1, 16)
        masses = aw_density_cells(sigma, part)

        def antiderivative(t):  # integral of 1 / (cos^2/a + sin^2/b)
            return math.sqrt(a * b) * math.atan(math.sqrt(a / b) * math.tan(t))

        def arc(lo, hi):
            # split at multiples of pi/2; the one-sided limits at the tangent
            # singularities then account for the antiderivative's branch jumps
            total = 0.0
            grid = [lo]
            k = math.floor(lo / (math.pi / 2)) + 1
            while k * math.pi / 2 < hi:
                grid.append(k * math.pi / 2)
                k += 1
            grid.append(hi)
            for s, t in zip(grid, grid[1:]):
                total += antiderivative(t - 1e-12) - antiderivative(s + 1e-12)
            return total

        closed = np.array([arc(lo, hi) for lo, hi in part.bounds])
        closed /= closed.sum()
        assert np.allclose(masses, closed, atol=1e-7)

    def test_density_ratio_four(self):
        part = eq_partition(1, 256)
        masses = aw_density_cells(np.diag([0.1, 0.4]), part)
        top = masses[part.assign(np.array([[0.0, 1.0]]))[0]]
        side = masses[part.assign(np.array([[1.0, 0.0]]))[0]]
        assert top / side == pytest.approx(4.0, rel=0.01)

    def test_scale_invariance(self):
        part = eq_partition(2, 20)
        m1 = aw_density_cells(np.diag([0.1, 0.2, 0.4]), part)
        m2 = aw_density_cells(7.3 * np.diag([0.1, 0.2, 0.4]), part)
        assert np.max(np.abs(m1 - m2)) <= 1e-10

    def test_singular_covariance_rejected(self):
        with pytest.raises(ValueError):
            aw_density_cells(np.diag([1.0, 0.0]), eq_partition(1, 4))


class TestFingerprint:
    def setup_method(self):
        self.params = ModelParams(2, 8.0)
        self.constants = CriticalConstants(
            r_star=0.5, y_star=np.array([math.sqrt(0.1), math.sqrt(0.4)]),
            s_norm_sq=0.5,
        )

    def test_recovers_pure_state_direction(self):
        omega = np.array([math.cos(0.7), math.sin(0.7)])
        spec = PureStateSpec(omega=omega, constants=self.constants, beta=8.0)
        field = RNG.normal(0, 0.3, size=(16, 2))
        draws = sample_pure_state(spec, field, 1000, RNG)
        fp = fingerprint_state(draws, field, self.constants, self.params)
        assert float(fp.direction @ omega) >= 0.95
        assert np.abs(fp.stdevs - 1 / math.sqrt(8)).max() <= 3 * 0.02

    def test_directions_cover_circle_at_zero_tilt(self):
        part = eq_partition(1, 8)
        seen = set()
        field = RNG.normal(0, 0.3, size=(8, 2))
        for run in range(100):
            rng = np.random.default_rng(run)
            draws = sample_tilted_mixture(
                np.zeros(2), self.constants, field, self.params, 120, rng
            )
            fp = fingerprint_state(draws, field, self.constants, self.params)
            seen.add(int(part.assign(fp.direction[None, :])[0]))
        assert seen == set(range(8))

    def test_paramagnetic_flagged(self):
        consts = CriticalConstants(r_star=0.0, y_star=np.zeros(2), s_norm_sq=0.5)
        draws = RNG.normal(size=(200, 4, 2))
        with pytest.raises(ValueError):
            fingerprint_state(draws, np.zeros((4, 2)), consts, self.params)

    def test_requires_hundred_draws(self):
        with pytest.raises(ValueError):
            fingerprint_state(
                RNG.normal(size=(50, 4, 2)), np.zeros((4, 2)), self.constants,
                self.params,
            )


class TestAtoms:
    def test_single_cell(self):
        part = eq_partition(1, 4)
        atoms = approximate_by_atoms(np.array([1.0, 0, 0, 0]), part)
        assert np.allclose(atoms.points[0], part.representatives()[0])

    def test_masses_must_normalize(self):
        part = eq_partition(1, 4)
        with pytest.raises(ValueError):
            approximate_by_atoms(np.array([0.5, 0, 0, 0]), part)

    @pytest.mark.parametrize("cells", [8, 32, 128])
    def test_pushforward_within_cell_diameter(self, cells):
        part = eq_partition(2, cells)
        atoms = approximate_by_atoms(np.full(cells, 1.0 / cells), part)
        rng = np.random.default_rng(5)
        uniform = rng.standard_normal((60_000, 3))
        uniform /= np.linalg.norm(uniform, axis=1)[:, None]
        atom_pts = atoms.sample(60_000, rng)
        push_a = EmpiricalLaw1D.from_samples(uniform[:, 0])
        push_b = EmpiricalLaw1D.from_samples(atom_pts[:, 0])
        assert bl_distance_1d(push_a, push_b) <= part.cell_diameters().max()

    def test_refinement_shrinks_distance(self):
        rng = np.random.default_rng(6)
        uniform = rng.standard_normal((60_000, 3))
        uniform /= np.linalg.norm(uniform, axis=1)[:, None]
        push = EmpiricalLaw1D.from_samples(uniform[:, 0])
        dists = []
        for cells in (8, 128):
            part = eq_partition(2, cells)
            atoms = approximate_by_atoms(np.full(cells, 1.0 / cells), part)
            pts = atoms.sample(60_000, rng)
            dists.append(bl_distance_1d(push, EmpiricalLaw1D.from_samples(pts[:, 0])))
        assert dists[1] < dists[0]


@given(st.lists(st.floats(-1, 1), min_size=2, max_size=40))
@settings(max_examples=60, deadline=None)
def test_tv_distance_properties(values):
    p = np.abs(np.asarray(values)) + 1e-9
    p /= p.sum()
    q = np.roll(p, 1)
    assert 0.0 <= tv_distance(p, q) <= 1.0 + 1e-12
    assert tv_distance(p, p) == 0.0
