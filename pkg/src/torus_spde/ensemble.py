"""
Seeded Monte Carlo ensembles, aggregation with standard errors, figure
presets, slope fitting, prediction overlays and replayable exports.

Each (N, realization) pair is an independent task.  Its noise seed is a
pure function of the master seed, N and the realization index, so results
do not depend on the number of workers or on completion order; aggregation
always runs over realizations in index order.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .errors import AxisMismatchError, ConfigError, DomainError, EnsembleError, TorusSPDEError
from .grid import (
    GridSpec,
    RealField,
    forward_dft,
    interval_averages,
    radial_bin_index,
    radial_energy_density,
    sobolev_norm_sq,
)
from .io import (
    IntervalTable,
    SpectrumTable,
    read_manifest,
    read_snapshot,
    write_intervals,
    write_manifest,
    write_spectra,
)
from .noise import NoiseSpec, splitmix64
from .renorm import PredictionCurve
from .solvers import InitialCondition, SchemeConfig, integrate

MEASURES = ("spectrum", "intervals", "moments")


@dataclass(frozen=True)
class ExperimentConfig:
    """Scheme, resolutions and sampling plan of one ensemble."""

    scheme: SchemeConfig
    Ns: tuple[int, ...]
    realizations: int
    d: int = 2
    master_seed: int = 0
    ic: InitialCondition = field(default_factory=InitialCondition.zero)
    preset: str = "custom"
    measures: tuple[str, ...] = ("spectrum", "moments")
    n_intervals: int = 4
    out_dir: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "Ns", tuple(int(n) for n in self.Ns))
        object.__setattr__(self, "measures", tuple(self.measures))
        if self.realizations < 1:
            raise ConfigError("realization count must be >= 1")
        if not self.Ns:
            raise ConfigError("need at least one resolution N")
        for n in self.Ns:
            GridSpec(self.d, n)
        if self.master_seed < 0:
            raise ConfigError("master seed must be non-negative")
        unknown = set(self.measures) - set(MEASURES)
        if unknown:
            raise ConfigError(f"unknown measures {sorted(unknown)}")
        if "spectrum" in self.measures and self.d != 2:
            raise ConfigError("radial spectra need d=2")
        if "intervals" in self.measures:
            if self.d != 2:
                raise ConfigError("interval averages need d=2")
            bad = [n for n in self.Ns if n % self.n_intervals]
            if bad:
                raise ConfigError(f"N values {bad} are not divisible by {self.n_intervals}")

    def grid(self, N: int) -> GridSpec:
        return GridSpec(self.d, N)

    def noise_spec(self, N: int, realization: int) -> NoiseSpec:
        return NoiseSpec(self.scheme.sigma, resolution_seed(self.master_seed, N), realization)

    def to_dict(self) -> dict:
        ic = {"kind": self.ic.kind, "label": self.ic.label}
        return {
            "scheme": asdict(self.scheme),
            "Ns": list(self.Ns),
            "realizations": self.realizations,
            "d": self.d,
            "master_seed": self.master_seed,
            "ic": ic,
            "preset": self.preset,
            "measures": list(self.measures),
            "n_intervals": self.n_intervals,
        }


def resolution_seed(master_seed: int, N: int) -> int:
    """Master seed of the realizations at resolution ``N``."""
    return splitmix64((master_seed ^ (N << 40)) & ((1 << 64) - 1)) >> 1


def ic_from_label(label: str, base_dir: Path | None = None) -> InitialCondition:
    """Inverse of the ``--ic`` spelling: ``zero``, ``sin2x`` or ``file:<path>``."""
    if label == "zero":
        return InitialCondition.zero()
    if label == "sin2x":
        return InitialCondition.sin2x()
    if label.startswith("file:"):
        path = Path(label[5:])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return InitialCondition.from_field(read_snapshot(path), label=f"file:{path}")
    raise ConfigError(f"unknown initial condition {label!r}")


def config_from_dict(doc: dict, base_dir: Path | None = None) -> ExperimentConfig:
    return ExperimentConfig(
        scheme=SchemeConfig(**doc["scheme"]),
        Ns=tuple(doc["Ns"]),
        realizations=int(doc["realizations"]),
        d=int(doc["d"]),
        master_seed=int(doc["master_seed"]),
        ic=ic_from_label(doc["ic"]["label"], base_dir),
        preset=doc.get("preset", "custom"),
        measures=tuple(doc["measures"]),
        n_intervals=int(doc.get("n_intervals", 4)),
    )


# ---------------------------------------------------------------------------
# single realizations


@dataclass(frozen=True, eq=False)
class RealizationResult:
    N: int
    index: int
    seed: int
    energy: np.ndarray | None = None
    intervals: np.ndarray | None = None
    norm_sq: float = math.nan
    second_moment: float = math.nan
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def run_realization(config: ExperimentConfig, N: int, index: int) -> RealField:
    """Final field of one realization; the replay entry point."""
    grid = config.grid(N)
    return integrate(config.scheme, config.ic, config.noise_spec(N, index), grid)


def _measure(config: ExperimentConfig, N: int, index: int) -> RealizationResult:
    spec = config.noise_spec(N, index)
    try:
        u = run_realization(config, N, index)
    except (TorusSPDEError, FloatingPointError) as exc:
        return RealizationResult(N, index, spec.seed, error=f"{type(exc).__name__}: {exc}")
    energy = intervals = None
    if "spectrum" in config.measures:
        energy = radial_energy_density(forward_dft(u)).energy
    if "intervals" in config.measures:
        intervals = interval_averages(u, config.n_intervals)
    return RealizationResult(
        N,
        index,
        spec.seed,
        energy=energy,
        intervals=intervals,
        norm_sq=sobolev_norm_sq(u, 0.0),
        second_moment=float(np.mean(u.values**2)),
    )


def _measure_task(task: tuple[ExperimentConfig, int, int]) -> RealizationResult:
    return _measure(*task)


# ---------------------------------------------------------------------------
# aggregation


def mean_and_stderr(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean over axis 0 and ``std(ddof=1)/sqrt(n)`` (zero for one sample)."""
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    mean = samples.mean(axis=0)
    if n < 2:
        return mean, np.zeros_like(mean)
    return mean, samples.std(axis=0, ddof=1) / math.sqrt(n)


@dataclass(frozen=True)
class ScalarStat:
    mean: float
    stderr: float
    n: int


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    """Per-resolution ensemble means with standard errors."""

    config: ExperimentConfig
    spectra: dict[int, SpectrumTable]
    intervals: dict[int, IntervalTable]
    norm_sq: dict[int, ScalarStat]
    second_moment: dict[int, ScalarStat]
    seeds: dict[int, list[int]]
    wall_clock: float = 0.0

    @property
    def Ns(self) -> tuple[int, ...]:
        return tuple(sorted(self.seeds))

    def largest_stderr(self, N: int, kappa_max: int | None = None) -> float:
        t = self.spectra[N]
        err = t.stderr if kappa_max is None else t.stderr[t.kappa <= kappa_max]
        return float(err.max()) if err.size else 0.0


def aggregate(config: ExperimentConfig, results: Sequence[RealizationResult], wall_clock: float = 0.0) -> EnsembleStats:
    """Ordered reduction of realization results into :class:`EnsembleStats`."""
    failures = [r for r in results if not r.ok]
    if failures:
        detail = "; ".join(f"N={r.N} #{r.index}: {r.error}" for r in failures[:5])
        raise EnsembleError(f"{len(failures)} realization(s) failed: {detail}", failures)
    by_n: dict[int, list[RealizationResult]] = {}
    for r in results:
        by_n.setdefault(r.N, []).append(r)
    spectra, intervals, norms, moments, seeds = {}, {}, {}, {}, {}
    for N in sorted(by_n):
        rs = sorted(by_n[N], key=lambda r: r.index)
        n = len(rs)
        seeds[N] = [r.seed for r in rs]
        if "spectrum" in config.measures:
            mean, err = mean_and_stderr(np.stack([r.energy for r in rs]))
            k = np.arange(1, mean.size + 1)
            card = np.bincount(_bin_of(config.grid(N)), minlength=mean.size + 1)[1:]
            spectra[N] = SpectrumTable(k, mean, err, card)
        if "intervals" in config.measures:
            mean, err = mean_and_stderr(np.stack([r.intervals for r in rs]))
            intervals[N] = IntervalTable(mean, err)
        m, e = mean_and_stderr(np.array([r.norm_sq for r in rs]))
        norms[N] = ScalarStat(float(m), float(e), n)
        m, e = mean_and_stderr(np.array([r.second_moment for r in rs]))
        moments[N] = ScalarStat(float(m), float(e), n)
    return EnsembleStats(config, spectra, intervals, norms, moments, seeds, wall_clock)


def _bin_of(grid: GridSpec) -> np.ndarray:
    return radial_bin_index(grid.k_squared()).ravel()


def run_ensemble(config: ExperimentConfig, workers: int = 1) -> EnsembleStats:
    """Integrate every (N, realization) task and aggregate.

    ``workers > 1`` distributes tasks over processes; the result is
    bit-identical to the serial run.  Failed realizations are collected and
    reported together in an :class:`EnsembleError`.
    """
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    tasks = [(config, N, r) for N in config.Ns for r in range(config.realizations)]
    start = time.perf_counter()
    if workers == 1:
        results = [_measure_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_measure_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    return aggregate(config, results, time.perf_counter() - start)


# ---------------------------------------------------------------------------
# analysis


@dataclass(frozen=True)
class LogLogFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int


def fit_power_law(x, y) -> LogLogFit:
    """Least-squares line through ``(log x, log y)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise DomainError(f"need at least 3 points for a slope fit, got {x.size}")
    if np.any(y <= 0) or np.any(x <= 0):
        raise DomainError("log-log fit needs positive values")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return LogLogFit(float(slope), float(intercept), r2, int(x.size))


def fit_loglog_slope(stats: EnsembleStats | dict[int, SpectrumTable], N: int, kappa_range: tuple[float, float]) -> LogLogFit:
    """Power-law fit of the mean spectrum at resolution ``N`` over ``kmin <= kappa <= kmax``."""
    spectra = stats.spectra if isinstance(stats, EnsembleStats) else stats
    if N not in spectra:
        raise ConfigError(f"no spectrum for N={N}")
    t = spectra[N].restrict(*kappa_range)
    return fit_power_law(t.kappa, t.mean_energy)


def trend_slope(stats: EnsembleStats | dict[int, SpectrumTable], kappa: int) -> float:
    """Slope of a linear fit of mean ``E_N(kappa)`` against ``log N``."""
    spectra = stats.spectra if isinstance(stats, EnsembleStats) else stats
    Ns = sorted(spectra)
    if len(Ns) < 2:
        raise DomainError("need at least two resolutions for a trend")
    logs = np.log(np.array(Ns, dtype=float))
    vals = np.array([spectra[n].at(kappa)[0] for n in Ns])
    return float(np.polyfit(logs, vals, 1)[0])


@dataclass(frozen=True)
class OverlayRow:
    x: float
    measured: float
    predicted: float
    ratio: float | None

    @property
    def defined(self) -> bool:
        return self.ratio is not None


def overlay_prediction(stats: EnsembleStats | dict[int, SpectrumTable], curve: PredictionCurve, N: int | None = None) -> list[OverlayRow]:
    """Join measurements and predictions on their shared abscissae.

    With ``N`` given the axis is kappa and the measurement is the mean
    spectrum at that resolution; otherwise the axis is N and the measurement
    is the mean squared L2 norm.  The ratio is measured / predicted, or
    ``None`` where the prediction vanishes.
    """
    if N is not None:
        spectra = stats.spectra if isinstance(stats, EnsembleStats) else stats
        if N not in spectra:
            raise AxisMismatchError(f"no spectrum for N={N}")
        t = spectra[N]
        measured = dict(zip(t.kappa.astype(float), t.mean_energy))
    else:
        if not isinstance(stats, EnsembleStats):
            raise AxisMismatchError("an N axis needs full ensemble statistics")
        measured = {float(n): s.mean for n, s in stats.norm_sq.items()}
    rows = []
    for x, p in zip(curve.x, curve.values):
        if float(x) not in measured:
            continue
        m = float(measured[float(x)])
        rows.append(OverlayRow(float(x), m, float(p), None if p == 0 else m / float(p)))
    if not rows:
        raise AxisMismatchError("prediction shares no abscissa with the measurements")
    return rows


# ---------------------------------------------------------------------------
# presets

_FIG3 = dict(alpha=6.4e-3, g=0.5)


def preset(name: str, full: bool = False, max_n: int = 256, realizations: int | None = None, master_seed: int = 0) -> ExperimentConfig:
    """Named experiment configurations; ``full`` lifts the desk-scale cap on N."""
    pow2 = tuple(2**n for n in range(5, 12))
    if name == "fig1":
        scheme = SchemeConfig("heat", alpha=0.5, g=1.0, sigma=math.pi / 50, T=1.0, M=2000)
        kw = dict(Ns=pow2, realizations=40, measures=("spectrum", "moments"))
    elif name == "fig2":
        scheme = SchemeConfig("decoupled_ac", g=0.1, sigma=math.pi / 5, T=2.0, M=4000)
        kw = dict(Ns=pow2, realizations=40, measures=("spectrum", "moments"))
    elif name == "fig3":
        scheme = SchemeConfig("allen_cahn", sigma=2 * math.pi / 5, T=1.0, M=2000, **_FIG3)
        kw = dict(Ns=pow2, realizations=40, measures=("spectrum", "moments"))
    elif name in ("fig4", "fig4f"):
        scheme = SchemeConfig("allen_cahn", sigma=math.pi / 8, T=1.0, M=1000, **_FIG3)
        kw = dict(
            Ns=(8, 32, 128, 512),
            realizations=1 if name == "fig4" else 120,
            ic=InitialCondition.sin2x(),
            measures=("spectrum", "intervals", "moments"),
        )
    elif name == "heat1d_validation":
        scheme = SchemeConfig("heat", alpha=1.0, g=1.0, sigma=0.5, T=1.0, M=1000)
        kw = dict(Ns=(64,), realizations=400, d=1, measures=("moments",))
    else:
        raise ConfigError(f"unknown preset {name!r}")
    if not full:
        kw["Ns"] = tuple(n for n in kw["Ns"] if n <= max_n)
    if realizations is not None:
        kw["realizations"] = realizations
    return ExperimentConfig(scheme=scheme, preset=name, master_seed=master_seed, **kw)


PRESETS = ("fig1", "fig2", "fig3", "fig4", "fig4f", "heat1d_validation")


# ---------------------------------------------------------------------------
# export and replay


def export_ensemble(stats: EnsembleStats, out_dir) -> Path:
    """Write spectra/intervals CSVs and, last, ``manifest.json``; returns the manifest path."""
    out = Path(out_dir)
    artifacts = []
    if stats.config.d == 2 and "spectrum" in stats.config.measures:
        artifacts.append(write_spectra(out / "spectra.csv", stats.spectra))
    if "intervals" in stats.config.measures:
        artifacts.append(write_intervals(out / "intervals.csv", stats.intervals))
    manifest = {
        "software": f"torus_spde {__version__}",
        "config": stats.config.to_dict(),
        "master_seed": stats.config.master_seed,
        "realization_seeds": {str(n): s for n, s in stats.seeds.items()},
        "summary": {
            str(n): {
                "norm_sq": [stats.norm_sq[n].mean, stats.norm_sq[n].stderr],
                "second_moment": [stats.second_moment[n].mean, stats.second_moment[n].stderr],
                "realizations": stats.norm_sq[n].n,
                **({"largest_stderr": stats.largest_stderr(n, n // 2)} if n in stats.spectra else {}),
            }
            for n in stats.Ns
        },
        "wall_clock_seconds": stats.wall_clock,
    }
    return write_manifest(out / "manifest.json", manifest, artifacts)


def replay_realization(manifest_path, N: int, index: int) -> RealField:
    """Recompute one realization's final field from a run manifest."""
    manifest_path = Path(manifest_path)
    doc = read_manifest(manifest_path)
    config = config_from_dict(doc["config"], manifest_path.parent)
    if N not in config.Ns or not 0 <= index < config.realizations:
        raise ConfigError(f"manifest has no realization N={N} #{index}")
    recorded = doc.get("realization_seeds", {}).get(str(N))
    if recorded is not None and recorded[index] != config.noise_spec(N, index).seed:
        raise ConfigError("recorded seed does not match the seed derivation")
    return run_realization(config, N, index)


__all__ = [
    "ExperimentConfig",
    "EnsembleStats",
    "RealizationResult",
    "ScalarStat",
    "LogLogFit",
    "OverlayRow",
    "PRESETS",
    "aggregate",
    "config_from_dict",
    "export_ensemble",
    "fit_loglog_slope",
    "fit_power_law",
    "ic_from_label",
    "mean_and_stderr",
    "overlay_prediction",
    "preset",
    "replay_realization",
    "resolution_seed",
    "run_ensemble",
    "run_realization",
    "trend_slope",
]
