import math

import numpy as np
import pytest

from torus_spde.errors import AxisMismatchError, ConfigError, DomainError, EnsembleError
from torus_spde.ensemble import (
    PRESETS,
    ExperimentConfig,
    aggregate,
    export_ensemble,
    fit_loglog_slope,
    fit_power_law,
    mean_and_stderr,
    overlay_prediction,
    preset,
    replay_realization,
    resolution_seed,
    run_ensemble,
    run_realization,
    trend_slope,
)
from torus_spde.io import SpectrumTable, read_intervals, read_manifest, read_spectra, verify_manifest, write_snapshot
from torus_spde.renorm import PredictionCurve
from torus_spde.solvers import InitialCondition, SchemeConfig


def small_config(**kw):
    base = dict(
        scheme=SchemeConfig("heat", alpha=0.5, g=1.0, sigma=math.pi / 50, T=0.1, M=20),
        Ns=(8, 16),
        realizations=3,
        master_seed=5,
    )
    base.update(kw)
    return ExperimentConfig(**base)


def synthetic(energy):
    energy = np.asarray(energy, dtype=float)
    k = np.arange(1, energy.size + 1)
    return {64: SpectrumTable(k, energy, np.zeros_like(energy), np.ones_like(k))}


class TestConfig:
    def test_rejects_bad_values(self):
        with pytest.raises(ConfigError):
            small_config(realizations=0)
        with pytest.raises(ConfigError):
            small_config(Ns=(7,))
        with pytest.raises(ConfigError):
            small_config(Ns=())
        with pytest.raises(ConfigError):
            small_config(measures=("bogus",))
        with pytest.raises(ConfigError):
            small_config(measures=("intervals",), Ns=(6,))
        with pytest.raises(ConfigError):
            small_config(d=1)

    def test_resolution_seeds_distinct(self):
        seeds = {resolution_seed(0, 2**n) for n in range(2, 13)}
        assert len(seeds) == 11
        assert all(0 <= s < 2**63 for s in seeds)


class TestStatistics:
    def test_mean_and_stderr(self):
        x = np.array([[1.0, 2.0], [3.0, 2.0], [5.0, 2.0]])
        m, e = mean_and_stderr(x)
        assert np.array_equal(m, [3.0, 2.0])
        assert e[0] == pytest.approx(2.0 / math.sqrt(3))
        assert e[1] == 0.0

    def test_single_realization_zero_noise(self):
        cfg = small_config(realizations=1, scheme=SchemeConfig("heat", sigma=0.0, T=0.1, M=10), ic=InitialCondition.sin2x())
        stats = run_ensemble(cfg)
        for N in cfg.Ns:
            assert np.all(stats.spectra[N].stderr == 0)
            assert stats.norm_sq[N].stderr == 0
            assert stats.largest_stderr(N) == 0

    def test_stderr_matches_samples(self):
        cfg = small_config()
        stats = run_ensemble(cfg)
        norms = []
        for r in range(cfg.realizations):
            u = run_realization(cfg, 8, r)
            norms.append(float(np.sum(u.values**2)) * u.grid.cell_volume)
        assert stats.norm_sq[8].mean == pytest.approx(np.mean(norms), rel=1e-12)
        assert stats.norm_sq[8].stderr == pytest.approx(np.std(norms, ddof=1) / math.sqrt(3), rel=1e-10)

    def test_cardinalities_cover_grid(self):
        stats = run_ensemble(small_config())
        for N in (8, 16):
            assert stats.spectra[N].cardinality.sum() == N * N

    def test_worker_invariance(self):
        cfg = small_config()
        a = run_ensemble(cfg, workers=1)
        b = run_ensemble(cfg, workers=2)
        for N in cfg.Ns:
            assert np.array_equal(a.spectra[N].mean_energy, b.spectra[N].mean_energy)
            assert np.array_equal(a.spectra[N].stderr, b.spectra[N].stderr)
            assert a.norm_sq[N] == b.norm_sq[N]
        assert a.seeds == b.seeds

    def test_order_independent_aggregation(self):
        from torus_spde.ensemble import _measure

        cfg = small_config()
        results = [_measure(cfg, N, r) for N in cfg.Ns for r in range(cfg.realizations)]
        a = aggregate(cfg, results)
        b = aggregate(cfg, results[::-1])
        for N in cfg.Ns:
            assert np.array_equal(a.spectra[N].mean_energy, b.spectra[N].mean_energy)

    def test_failure_aborts(self):
        blow = SchemeConfig("allen_cahn", alpha=1e-3, g=50.0, sigma=30.0, T=1.0, M=20, dealias=False)
        with pytest.raises(EnsembleError) as info:
            run_ensemble(small_config(scheme=blow, Ns=(16,), realizations=2))
        assert len(info.value.failures) == 2

    def test_bad_workers(self):
        with pytest.raises(ConfigError):
            run_ensemble(small_config(), workers=0)


class TestFits:
    def test_exact_power_law(self):
        k = np.arange(1, 33)
        fit = fit_loglog_slope(synthetic(k**-2.0), 64, (8, 16))
        assert fit.slope == pytest.approx(-2.0, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
        assert fit.n_points == 9

    def test_flat(self):
        fit = fit_loglog_slope(synthetic(np.full(32, 3.0)), 64, (1, 32))
        assert fit.slope == pytest.approx(0.0, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(3.0))

    def test_too_few_points(self):
        with pytest.raises(DomainError):
            fit_loglog_slope(synthetic(np.ones(32)), 64, (8, 9))

    def test_nonpositive(self):
        e = np.ones(32)
        e[10] = 0.0
        with pytest.raises(DomainError):
            fit_loglog_slope(synthetic(e), 64, (8, 16))
        with pytest.raises(DomainError):
            fit_power_law([1, 2, 3], [1.0, -1.0, 1.0])

    def test_unknown_resolution(self):
        with pytest.raises(ConfigError):
            fit_loglog_slope(synthetic(np.ones(32)), 128, (1, 8))

    def test_trend_slope(self):
        Ns = (32, 64, 128)
        spectra = {N: SpectrumTable(np.arange(1, 4), np.full(3, 5.0 - 2.0 * math.log(N)), np.zeros(3), np.ones(3)) for N in Ns}
        assert trend_slope(spectra, 2) == pytest.approx(-2.0)
        with pytest.raises(DomainError):
            trend_slope({32: spectra[32]}, 1)


class TestOverlay:
    def test_identical_curves(self):
        k = np.arange(1, 33)
        e = 1.0 / (1.0 + k**2.0)
        rows = overlay_prediction(synthetic(e), PredictionCurve(k, e, "x"), N=64)
        assert len(rows) == 32
        assert all(r.ratio == 1.0 for r in rows)

    def test_zero_prediction_undefined(self):
        k = np.arange(1, 5)
        rows = overlay_prediction(synthetic(np.ones(4)), PredictionCurve(k, np.array([1.0, 0.0, 2.0, 0.0]), "x"), N=64)
        assert [r.defined for r in rows] == [True, False, True, False]
        assert rows[1].ratio is None
        assert rows[2].ratio == 0.5

    def test_axis_mismatch(self):
        with pytest.raises(AxisMismatchError):
            overlay_prediction(synthetic(np.ones(4)), PredictionCurve([100.0, 200.0], [1.0, 1.0], "x"), N=64)
        with pytest.raises(AxisMismatchError):
            overlay_prediction(synthetic(np.ones(4)), PredictionCurve([1.0], [1.0], "x"), N=32)
        with pytest.raises(AxisMismatchError):
            overlay_prediction(synthetic(np.ones(4)), PredictionCurve([64.0], [1.0], "x"))

    def test_n_axis(self):
        stats = run_ensemble(small_config(realizations=2))
        curve = PredictionCurve([8.0, 16.0, 32.0], [1.0, 2.0, 3.0], "x")
        rows = overlay_prediction(stats, curve)
        assert [r.x for r in rows] == [8.0, 16.0]
        assert rows[1].ratio == pytest.approx(stats.norm_sq[16].mean / 2.0)


class TestPresets:
    def test_preset_values(self):
        assert preset("fig1").scheme.sigma == math.pi / 50
        assert preset("fig1").scheme.alpha == 0.5
        assert preset("fig1").scheme.M == 2000
        assert preset("fig2").scheme.g == 0.1
        assert preset("fig2").scheme.T == 2.0
        assert preset("fig3").scheme.alpha == 6.4e-3
        assert preset("fig3").scheme.sigma == 2 * math.pi / 5
        assert preset("fig4").ic.label == "sin2x"
        assert preset("fig4").scheme.sigma == math.pi / 8
        assert preset("fig4f").realizations == 120
        h = preset("heat1d_validation")
        assert (h.d, h.Ns, h.scheme.sigma, h.scheme.g, h.scheme.alpha) == (1, (64,), 0.5, 1.0, 1.0)

    def test_desk_cap(self):
        assert preset("fig1").Ns == (32, 64, 128, 256)
        assert preset("fig4f").Ns == (8, 32, 128)
        assert preset("fig1", full=True).Ns[-1] == 2048
        assert preset("fig1", max_n=64).Ns == (32, 64)
        assert preset("fig1", realizations=2).realizations == 2

    def test_all_names_build(self):
        for name in PRESETS:
            assert preset(name).preset == name

    def test_unknown(self):
        with pytest.raises(ConfigError):
            preset("fig9")


class TestExportReplay:
    def test_files_and_round_trip(self, tmp_path):
        cfg = small_config(measures=("spectrum", "intervals", "moments"))
        stats = run_ensemble(cfg)
        manifest = export_ensemble(stats, tmp_path)
        assert manifest.name == "manifest.json"
        assert all(verify_manifest(manifest).values())
        spectra = read_spectra(tmp_path / "spectra.csv")
        for N in cfg.Ns:
            assert np.array_equal(spectra[N].mean_energy, stats.spectra[N].mean_energy)
            assert np.array_equal(read_intervals(tmp_path / "intervals.csv")[N].mean, stats.intervals[N].mean)
        doc = read_manifest(manifest)
        assert doc["realization_seeds"]["8"] == stats.seeds[8]
        assert doc["master_seed"] == 5

    def test_replay_bit_exact(self, tmp_path):
        cfg = small_config()
        manifest = export_ensemble(run_ensemble(cfg), tmp_path)
        for N, r in [(8, 0), (16, 2)]:
            assert np.array_equal(replay_realization(manifest, N, r).values, run_realization(cfg, N, r).values)
        with pytest.raises(ConfigError):
            replay_realization(manifest, 32, 0)

    def test_replay_with_file_ic(self, tmp_path):
        ic_field = run_realization(small_config(), 8, 0)
        write_snapshot(tmp_path / "ic.tspd", ic_field)
        cfg = small_config(Ns=(8,), ic=InitialCondition.from_field(ic_field, label=f"file:{tmp_path / 'ic.tspd'}"))
        manifest = export_ensemble(run_ensemble(cfg), tmp_path / "out")
        assert np.array_equal(replay_realization(manifest, 8, 1).values, run_realization(cfg, 8, 1).values)

    def test_moments_only_export(self, tmp_path):
        cfg = ExperimentConfig(SchemeConfig("heat", sigma=0.5, T=0.1, M=10), Ns=(16,), realizations=2, d=1, measures=("moments",))
        manifest = export_ensemble(run_ensemble(cfg), tmp_path)
        assert read_manifest(manifest)["artifacts"] == {}
