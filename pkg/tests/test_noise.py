import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from torus_spde.errors import ConfigError, GridMismatchError
from torus_spde.grid import GridSpec
from torus_spde.noise import (
    NoiseIncrement,
    NoiseSpec,
    aggregate_increments,
    realization_seed,
    sample_increment,
    site_std,
    spectral_increment,
    splitmix64,
    truncate_noise,
)


class TestSeeding:
    def test_splitmix_reference_values(self):
        # first outputs of the reference splitmix64 generator seeded with 0
        assert splitmix64(0) == 0xE220A8397B1DCDAF
        assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4

    def test_realization_seeds_distinct(self):
        seeds = {realization_seed(7, r) for r in range(10_000)}
        assert len(seeds) == 10_000
        assert realization_seed(7, 0) != realization_seed(8, 0)

    @given(st.integers(0, 2**63), st.integers(0, 10**6), st.integers(0, 10**6))
    def test_increment_is_pure_function(self, master, idx, step):
        g = GridSpec(2, 4)
        spec = NoiseSpec(1.0, master, idx)
        a = sample_increment(g, spec, 0.1, step)
        b = sample_increment(g, spec, 0.1, step)
        assert np.array_equal(a.field.values, b.field.values)

    def test_steps_differ(self):
        g = GridSpec(2, 8)
        spec = NoiseSpec(1.0, 1, 0)
        a = sample_increment(g, spec, 0.1, 0).field.values
        b = sample_increment(g, spec, 0.1, 1).field.values
        assert not np.array_equal(a, b)

    def test_invalid_spec(self):
        with pytest.raises(ConfigError):
            NoiseSpec(-1.0)
        with pytest.raises(ConfigError):
            NoiseSpec(float("nan"))
        with pytest.raises(ConfigError):
            NoiseSpec(1.0, -1)


class TestStatistics:
    @pytest.mark.parametrize("d,N", [(1, 4096), (2, 64)])
    def test_site_variance(self, d, N):
        g = GridSpec(d, N)
        sigma, dt = 0.7, 1e-3
        spec = NoiseSpec(sigma, 3, 0)
        samples = np.concatenate([sample_increment(g, spec, dt, m).field.values.ravel() for m in range(20)])
        target = sigma**2 * dt * g.rho ** (d / 2)
        n = samples.size
        # chi-square interval for the sample variance at 5 sigma
        assert abs(np.mean(samples**2) / target - 1) < 5 * math.sqrt(2 / n)
        assert abs(np.mean(samples)) < 5 * math.sqrt(target / n)
        assert site_std(g, sigma, dt) ** 2 == pytest.approx(target)

    def test_gaussian_marginals(self):
        g = GridSpec(2, 64)
        x = sample_increment(g, NoiseSpec(1.0, 11, 0), 1.0, 0).field.values.ravel()
        assert stats.kstest(x / site_std(g, 1.0, 1.0), "norm").pvalue > 1e-4

    def test_spectral_variance_flat(self):
        g = GridSpec(2, 32)
        sigma, dt = 1.3, 0.01
        spec = NoiseSpec(sigma, 5, 2)
        E = np.mean([spectral_increment(sample_increment(g, spec, dt, m)).energy() for m in range(200)], axis=0)
        target = sigma**2 * dt * g.rho
        assert abs(E.mean() / target - 1) < 5 * math.sqrt(1 / (200 * 32 * 32))
        # no mode carries more than chance fluctuation around the flat level
        assert np.all(np.abs(E / target - 1) < 0.6)

    def test_spectral_increment_hermitian(self):
        g = GridSpec(2, 16)
        F = spectral_increment(sample_increment(g, NoiseSpec(2.0, 9), 0.5, 3))
        assert F.hermitian_defect() < 1e-12

    def test_independence_across_steps_and_realizations(self):
        g = GridSpec(2, 64)
        a = sample_increment(g, NoiseSpec(1.0, 1, 0), 1.0, 0).field.values.ravel()
        b = sample_increment(g, NoiseSpec(1.0, 1, 0), 1.0, 1).field.values.ravel()
        c = sample_increment(g, NoiseSpec(1.0, 1, 1), 1.0, 0).field.values.ravel()
        n = a.size
        for u, v in [(a, b), (a, c), (b, c)]:
            assert abs(np.corrcoef(u, v)[0, 1]) < 5 / math.sqrt(n)

    def test_no_spatial_correlation(self):
        g = GridSpec(2, 128)
        u = sample_increment(g, NoiseSpec(1.0, 4), 1.0, 0).field.values
        for shift in (1, 2, 7):
            r = np.corrcoef(u.ravel(), np.roll(u, shift, axis=0).ravel())[0, 1]
            assert abs(r) < 5 / 128


class TestEdgeCases:
    def test_zero_sigma(self):
        inc = sample_increment(GridSpec(2, 8), NoiseSpec(0.0), 0.1, 0)
        assert np.all(inc.field.values == 0)

    @pytest.mark.parametrize("dt", [0.0, -0.1])
    def test_nonpositive_dt(self, dt):
        with pytest.raises(ConfigError):
            sample_increment(GridSpec(2, 8), NoiseSpec(1.0), dt, 0)

    def test_negative_step(self):
        with pytest.raises(ConfigError):
            sample_increment(GridSpec(2, 8), NoiseSpec(1.0), 0.1, -1)


class TestTruncation:
    def test_disc(self):
        g = GridSpec(2, 16)
        F = spectral_increment(sample_increment(g, NoiseSpec(1.0), 1.0, 0))
        T = truncate_noise(F, 3)
        inside = g.k_squared() <= 9
        assert np.array_equal(T.coeffs[inside], F.coeffs[inside])
        assert np.all(T.coeffs[~inside] == 0)
        assert T.hermitian_defect() < 1e-12

    def test_negative_cutoff(self):
        g = GridSpec(2, 8)
        with pytest.raises(ConfigError):
            truncate_noise(spectral_increment(sample_increment(g, NoiseSpec(1.0), 1.0, 0)), -1)


class TestAggregation:
    def test_sum_and_variance(self):
        g = GridSpec(2, 64)
        spec = NoiseSpec(1.0, 2)
        fine = [sample_increment(g, spec, 0.25, m) for m in range(4)]
        agg = aggregate_increments(fine)
        assert agg.dt == pytest.approx(1.0)
        assert np.allclose(agg.field.values, sum(f.field.values for f in fine))
        target = g.rho * 1.0
        assert abs(np.mean(agg.field.values**2) / target - 1) < 5 * math.sqrt(2 / g.N**2)

    def test_grid_mismatch(self):
        a = sample_increment(GridSpec(2, 8), NoiseSpec(1.0), 0.1, 0)
        b = sample_increment(GridSpec(2, 16), NoiseSpec(1.0), 0.1, 0)
        with pytest.raises(GridMismatchError):
            aggregate_increments([a, b])

    def test_empty(self):
        with pytest.raises(ConfigError):
            aggregate_increments([])

    def test_increment_grid(self):
        inc = NoiseIncrement(GridSpec(1, 8).zeros(), 0.1)
        assert inc.grid == GridSpec(1, 8)
