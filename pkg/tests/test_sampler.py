import math

import numpy as np
import pytest
from scipy import stats as sps

from rfsphere.basis import build_basis
from rfsphere.model import (
    DisorderSample,
    DomainError,
    FieldScaling,
    ModelParams,
    SampleStats,
    classify_regime,
    compute_sample_stats,
    limiting_tilt,
)
from rfsphere.sampler import (
    ChainConfig,
    MixtureCoordinate,
    QuadratureResolutionError,
    SpinConfiguration,
    chain_mean_se,
    limit_marginal_params,
    log_mixture_density,
    mixture_quadrature_oracle,
    run_latent_chains,
    sample_gibbs,
    sample_microcanonical,
    sample_mixture,
)
from rfsphere.walks import FieldDistributionSpec, generate_disorder
from oracles import scalar_log_mixture_density, sphere_metropolis_mean_profile

RNG = np.random.default_rng(31337)


def two_point_field(d, strength_sq, n, seed):
    a = math.sqrt(strength_sq / d)
    spec = FieldDistributionSpec("two_point", d=d, two_point_a=np.full(d, a))
    return generate_disorder(spec, n, seed)


class TestMixtureDensity:
    def test_zero_at_origin(self):
        stats = SampleStats(np.array([0.2]), np.array([0.5]), np.array([2.0]))
        value = log_mixture_density(
            (np.zeros(1), np.zeros(1)), stats, ModelParams(1, 4.0), 10
        )
        assert value == 0.0

    def test_hand_value_vs_scalar_oracle(self):
        stats = SampleStats(np.array([0.0]), np.array([0.5]), np.array([0.0]))
        got = log_mixture_density(
            (np.array([0.5]), np.array([0.5])), stats, ModelParams(1, 4.0), 10
        )
        want = scalar_log_mixture_density([0.5], [0.5], [0.0], [0.5], 4.0, 1, 10)
        assert got == pytest.approx(want, abs=1e-12)
        assert got == pytest.approx(12.9206, abs=2e-4)

    def test_rotation_invariance(self):
        params = ModelParams(2, 8.0)
        theta = 0.77
        rot = np.array([[math.cos(theta), -math.sin(theta)],
                        [math.sin(theta), math.cos(theta)]])
        m = np.array([0.15, -0.08])
        s = np.array([0.4, 0.4])  # isotropic so the y-term is rotation friendly
        x = np.array([0.3, 0.2])
        y = np.array([0.1, 0.25])
        a = log_mixture_density((x, y), SampleStats(m, s, m), params, 20)
        b = log_mixture_density((rot @ x, y), SampleStats(rot @ m, s, rot @ m),
                                params, 20)
        assert a == pytest.approx(b, abs=1e-12)

    def test_domain_error(self):
        stats = SampleStats(np.zeros(1), np.full(1, 0.5), np.zeros(1))
        with pytest.raises(DomainError):
            log_mixture_density((np.array([0.9]), np.array([0.5])), stats,
                                ModelParams(1, 1.0), 5)

    def test_coordinate_validation(self):
        with pytest.raises(DomainError):
            MixtureCoordinate(x=np.array([0.8]), y=np.array([0.7]))
        c = MixtureCoordinate(x=np.array([0.3]), y=np.array([0.4]))
        assert c.squared_radius == pytest.approx(0.25)


class TestQuadratureOracle:
    def test_normalization_and_error_estimate(self):
        h = two_point_field(1, 0.25, 40, 1)
        table = mixture_quadrature_oracle(compute_sample_stats(h), ModelParams(1, 4.0),
                                          40, 160)
        assert table.weights.sum() == pytest.approx(1.0, abs=1e-10)
        assert table.error_estimate <= 1e-4

    def test_resolution_cap_and_coarse_error(self):
        h = two_point_field(1, 0.25, 40, 1)
        stats = compute_sample_stats(h)
        with pytest.raises(ValueError):
            mixture_quadrature_oracle(stats, ModelParams(1, 4.0), 40, 300)
        with pytest.raises(QuadratureResolutionError):
            mixture_quadrature_oracle(stats, ModelParams(1, 4.0), 400, 32)

    def test_concentration_sharpens_with_volume(self):
        params = ModelParams(1, 4.0)
        masses = {}
        for n in (40, 80):
            h = two_point_field(1, 0.25, n, 5)
            stats = compute_sample_stats(h)
            table = mixture_quadrature_oracle(stats, params, n, 256)
            s_lim = np.array([0.5])
            peak = max(
                limiting_tilt(p[:1], p[1:], np.zeros(1), s_lim, params)
                for p in table.points[table.weights > 1e-12]
            )
            values = np.array([
                limiting_tilt(p[:1], p[1:], np.zeros(1), s_lim, params)
                if p[0] ** 2 + p[1] ** 2 < 1 else -np.inf
                for p in table.points
            ])
            masses[n] = table.mass_where(values < peak - 0.05)
        assert masses[80] < masses[40]


class TestLatentChains:
    @pytest.mark.parametrize("n", [20, 40, 80])
    def test_d1_matches_quadrature(self, n):
        params = ModelParams(1, 4.0)
        h = two_point_field(1, 0.25, n, 11)
        stats = compute_sample_stats(h)
        table = mixture_quadrature_oracle(stats, params, n, 256)
        cfg = ChainConfig(burn_in=2000, thinning=4, chain_count=24, seed=5)
        kept, diag = run_latent_chains(
            stats.mean[None, :], stats.stdev[None, :], params, n, cfg, 300
        )
        assert diag.split_chain_ratio <= 1.1
        for key, series in [
            ("x_par", kept[:, :, 0]),
            ("x_par_sq", kept[:, :, 0] ** 2),
            ("y_par", kept[:, :, 1]),
            ("y_par_sq", kept[:, :, 1] ** 2),
        ]:
            mean, se = chain_mean_se(series)
            combined = math.hypot(se, table.error_estimate)
            assert abs(mean - table.moments[key]) <= 3 * combined

    def test_d2_matches_quadrature(self):
        n = 20
        params = ModelParams(2, 8.0)
        h = two_point_field(2, 0.25, n, 21)
        stats = compute_sample_stats(h)
        table = mixture_quadrature_oracle(stats, params, n, 128)
        cfg = ChainConfig(burn_in=2500, thinning=4, chain_count=24, seed=5)
        kept, diag = run_latent_chains(
            stats.mean[None, :], stats.stdev[None, :], params, n, cfg, 300
        )
        m_dir, s_dir = table.mean_direction, table.stdev_direction
        x, y = kept[:, :, :2], kept[:, :, 2:]
        x_par = np.einsum("scd,d->sc", x, m_dir)
        y_par = np.einsum("scd,d->sc", y, s_dir)
        checks = {
            "x_par": x_par,
            "x_par_sq": x_par**2,
            "x_perp_sq": np.einsum("scd,scd->sc", x, x) - x_par**2,
            "y_par": y_par,
            "y_par_sq": y_par**2,
            "y_perp_sq": np.einsum("scd,scd->sc", y, y) - y_par**2,
        }
        for key, series in checks.items():
            mean, se = chain_mean_se(series)
            combined = math.hypot(se, table.error_estimate)
            assert abs(mean - table.moments[key]) <= 3 * combined, key

    def test_symmetric_target_centered(self):
        # nearly flat inverse temperature: the latent law is radially symmetric
        params = ModelParams(1, 1e-6)
        stats = SampleStats(np.zeros(1), np.full(1, 0.5), np.zeros(1))
        cfg = ChainConfig(burn_in=500, thinning=2, chain_count=16, seed=9)
        kept, _ = run_latent_chains(stats.mean[None, :], stats.stdev[None, :],
                                    params, 10, cfg, 400)
        mean, se = chain_mean_se(kept[:, :, 0])
        assert abs(mean) <= 3 * se + 1e-3

    def test_bimodal_symmetric_fixture(self):
        # alternating field rows force S_n = 0 exactly
        values = np.tile([[0.5], [-0.5]], (20, 1))
        h = DisorderSample(values=values)
        stats = compute_sample_stats(h)
        assert np.array_equal(stats.walk_sum, [0.0])
        params = ModelParams(1, 4.0)
        cfg = ChainConfig(burn_in=2000, thinning=4, chain_count=24, seed=13)
        kept, _ = run_latent_chains(stats.mean[None, :], stats.stdev[None, :],
                                    params, 40, cfg, 300)
        x = kept[:, :, 0]
        mean, se = chain_mean_se(x)
        assert abs(mean) <= 3 * se
        # bimodality: both signs visited, little mass near the origin
        assert np.mean(x > 0.3) > 0.2 and np.mean(x < -0.3) > 0.2
        assert np.mean(np.abs(x) < 0.2) < 0.05

    def test_ferromagnetic_concentration_d2(self):
        n = 200
        params = ModelParams(2, 8.0)
        h = two_point_field(2, 0.25, n, 23)
        stats = compute_sample_stats(h)
        latents, diag = sample_mixture(stats, params, n,
                                       ChainConfig(burn_in=2500, seed=3), 400)
        x, y = latents[:, :2], latents[:, 2:]
        assert abs(np.linalg.norm(x, axis=1).mean() - math.sqrt(0.5)) <= 0.05
        assert np.max(np.abs(y.mean(axis=0) - stats.stdev)) <= 0.05

    def test_determinism(self):
        params = ModelParams(2, 8.0)
        h = two_point_field(2, 0.25, 50, 29)
        stats = compute_sample_stats(h)
        cfg = ChainConfig(burn_in=200, thinning=2, chain_count=4, seed=77)
        a, _ = sample_mixture(stats, params, 50, cfg, 40)
        b, _ = sample_mixture(stats, params, 50, cfg, 40)
        assert np.array_equal(a, b)


class TestMicrocanonical:
    def setup_method(self):
        self.h = two_point_field(2, 0.25, 1000, 41)
        self.basis = build_basis(self.h)

    def test_constraint_exact(self):
        c = MixtureCoordinate(x=np.array([0.4, 0.1]), y=np.array([0.2, 0.3]))
        configs = sample_microcanonical(c, self.basis, 64, RNG)
        constraint = np.einsum("knd,knd->k", configs, configs) / 1000
        assert np.max(np.abs(constraint - 1.0)) <= 1e-9

    def test_origin_second_moment(self):
        c = MixtureCoordinate(x=np.zeros(2), y=np.zeros(2))
        configs = sample_microcanonical(c, self.basis, 500, RNG)
        per_coord = float(np.mean(configs**2))
        assert abs(per_coord - 0.5) <= 0.02

    def test_single_site_marginal_mean(self):
        stats = compute_sample_stats(self.h)
        c = MixtureCoordinate(x=np.array([0.3, 0.2]), y=np.array([0.25, 0.1]))
        configs = sample_microcanonical(c, self.basis, 4000, RNG)
        sites = [0, 17, 500]
        for i in sites:
            for j in range(2):
                expected = c.x[j] + c.y[j] * (
                    self.h.values[i, j] - stats.mean[j]
                ) / stats.stdev[j]
                got = configs[:, i, j].mean()
                sd = configs[:, i, j].std() / math.sqrt(4000)
                assert abs(got - expected) <= 3.5 * sd

    def test_magnetization_equals_latent(self):
        c = MixtureCoordinate(x=np.array([0.3, -0.2]), y=np.array([0.1, 0.1]))
        configs = sample_microcanonical(c, self.basis, 8, RNG)
        mags = configs.sum(axis=1) / 1000
        assert np.max(np.abs(mags - c.x[None, :])) <= 1e-12

    def test_small_volume_rejected(self):
        basis = build_basis(two_point_field(1, 0.25, 2, 1))
        with pytest.raises(ValueError):
            sample_microcanonical(
                MixtureCoordinate(x=np.zeros(1), y=np.zeros(1)), basis, 1, RNG
            )

    def test_spin_configuration_type_checks(self):
        c = MixtureCoordinate(x=np.array([0.4, 0.1]), y=np.array([0.2, 0.3]))
        configs = sample_microcanonical(c, self.basis, 1, RNG)
        SpinConfiguration(phi=configs[0])  # should not raise
        with pytest.raises(ValueError):
            SpinConfiguration(phi=2.0 * configs[0])


class TestGibbs:
    def test_constraint_on_all_outputs(self):
        h = two_point_field(2, 0.25, 300, 47)
        draws = sample_gibbs(h, ModelParams(2, 8.0), ChainConfig(seed=5, burn_in=800),
                             50)
        constraint = np.einsum("knd,knd->k", draws.configurations,
                               draws.configurations) / 300
        assert np.max(np.abs(constraint - 1.0)) <= 1e-9

    def test_magnetization_aligns_with_walk(self):
        # latent x equals the magnetization density exactly, so alignment can
        # be read off the latent ensemble
        n, runs = 500, 200
        params = ModelParams(2, 8.0)
        spec = FieldDistributionSpec("two_point", d=2,
                                     two_point_a=np.full(2, math.sqrt(0.125)))
        aligned = 0
        h_list = [generate_disorder(spec, n, 100 + r) for r in range(runs)]
        means = np.stack([compute_sample_stats(h).mean for h in h_list])
        stdevs = np.stack([compute_sample_stats(h).stdev for h in h_list])
        cfg = ChainConfig(burn_in=3000, thinning=4, chain_count=1, seed=55)
        kept, _ = run_latent_chains(means, stdevs, params, n, cfg, 1)
        for r in range(runs):
            x = kept[0, r, :2]
            walk_dir = means[r] / np.linalg.norm(means[r])
            aligned += int(float(x / np.linalg.norm(x) @ walk_dir) > 0.9)
        assert aligned / runs >= 0.95

    def test_paramagnetic_magnetization_small(self):
        n, runs = 1000, 100
        params = ModelParams(2, 1.0)
        spec = FieldDistributionSpec("two_point", d=2,
                                     two_point_a=np.full(2, math.sqrt(0.125)))
        h_list = [generate_disorder(spec, n, 300 + r) for r in range(runs)]
        means = np.stack([compute_sample_stats(h).mean for h in h_list])
        stdevs = np.stack([compute_sample_stats(h).stdev for h in h_list])
        cfg = ChainConfig(burn_in=1200, thinning=4, chain_count=1, seed=56)
        kept, _ = run_latent_chains(means, stdevs, params, n, cfg, 1)
        small = np.mean(np.linalg.norm(kept[0, :, :2], axis=1) <= 0.1)
        assert small >= 0.95

    def test_gibbs_matches_direct_sphere_oracle(self):
        # cross-check the full pipeline against a Metropolis sampler that works
        # directly on the constraint sphere and never sees the latent split
        n = 48
        params = ModelParams(2, 3.0)
        h = two_point_field(2, 0.25, n, 61)
        draws = sample_gibbs(h, params, ChainConfig(burn_in=3000, thinning=6, seed=7,
                                                    chain_count=8), 600)
        profile_pkg = draws.configurations.mean(axis=0)
        profile_direct = sphere_metropolis_mean_profile(h.values, 3.0, 300_000, 3)
        # compare site-profile inner products (the overlap-relevant statistic)
        stat_pkg = float(np.sum(profile_pkg**2)) / n
        stat_direct = float(np.sum(profile_pkg * profile_direct)) / n
        assert stat_direct == pytest.approx(stat_pkg, abs=0.03)


class TestLimitMarginals:
    def test_maximizer_marginal(self):
        params = ModelParams(2, 8.0)
        moments = np.array([0.125, 0.125])
        _, consts = classify_regime(params, moments)
        omega = np.array([1.0, 0.0])
        field = RNG.normal(0, 0.3, size=(5, 2))
        c = MixtureCoordinate(x=consts.r_star * omega, y=consts.y_star)
        means, stdev = limit_marginal_params(c, field, np.zeros(2), np.sqrt(moments), 2)
        expected = consts.r_star * omega[None, :] + field
        assert np.allclose(means, expected, atol=1e-12)
        assert stdev == pytest.approx(1.0 / math.sqrt(8.0), abs=1e-12)
        assert stdev == pytest.approx(0.35355, abs=5e-6)

    def test_origin_marginal(self):
        c = MixtureCoordinate(x=np.zeros(2), y=np.zeros(2))
        means, stdev = limit_marginal_params(c, np.zeros((3, 2)), np.zeros(2),
                                             np.full(2, 0.5), 2)
        assert np.allclose(means, 0.0)
        assert stdev == pytest.approx(1.0 / math.sqrt(2.0))

    def test_sampled_marginals_pass_ks(self):
        n = 1000
        h = two_point_field(2, 0.25, n, 71)
        stats = compute_sample_stats(h)
        basis = build_basis(h)
        c = MixtureCoordinate(x=np.array([0.5, 0.2]), y=np.array([0.3, 0.2]))
        configs = sample_microcanonical(c, basis, 10_000, RNG)
        # the finite-n shift uses the sample statistics
        stdev = math.sqrt((1.0 - c.squared_radius) / 2)
        for i, j in [(0, 0), (3, 1), (999, 0)]:
            mean = c.x[j] + c.y[j] * (h.values[i, j] - stats.mean[j]) / stats.stdev[j]
            ks = sps.kstest(configs[:, i, j], sps.norm(loc=mean, scale=stdev).cdf)
            assert ks.statistic <= 0.05


class TestConcentrationIdentity:
    def test_conditional_identity_on_fixtures(self):
        n = 40
        params = ModelParams(1, 4.0)
        h = two_point_field(1, 0.25, n, 83)
        stats = compute_sample_stats(h)
        latents, _ = sample_mixture(stats, params, n,
                                    ChainConfig(burn_in=1500, chain_count=16, seed=3),
                                    20_000)
        x, y = latents[:, 0], latents[:, 1]
        f = np.tanh(x + y)  # bounded by 1
        fixtures = [x > 0.5, np.abs(y) < 0.3, x + y > 0.8, x**2 + y**2 < 0.5, y > 0]
        for region in fixtures:
            p = region.mean()
            if p in (0.0, 1.0):
                continue
            lhs = abs(f.mean() - f[region].mean())
            rhs = 2.0 * 1.0 / (1.0 + p / (1.0 - p))
            mc_slack = 4.0 * f.std() / math.sqrt(max(region.sum(), 1))
            assert lhs <= rhs + mc_slack
