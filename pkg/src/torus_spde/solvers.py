"""
IMEX time stepping for the stochastic heat, decoupled Allen-Cahn and
Allen-Cahn equations on the torus.

All three schemes treat the linear part with the trapezoidal rule and the
cubic and the noise with an explicit Euler-Maruyama step::

    heat:          du = (alpha Lap u - g u) dt + sigma dW           (Fourier space)
    decoupled_ac:  du = g (u - u^3) dt + sigma dW                  (direct space)
    allen_cahn:    du = (alpha Lap u + g (u - u^3)) dt + sigma dW  (pseudospectral)

Spectral states are kept internally as the orthonormal half spectrum
``scipy.fft.rfftn(values, norm="ortho")`` of the direct-space array.  This
differs from :func:`torus_spde.grid.forward_dft` only by a fixed unimodular
factor per mode, which commutes with every diagonal factor of the schemes,
so the update is the same one written in the symmetric convention.  Use
:meth:`SolverState.spectral_field` to get coefficients in that convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Iterable, Iterator

import numpy as np
import scipy.fft as sfft

from .errors import ConfigError, GridMismatchError, NumericalError, SingularFactorError
from .grid import GridSpec, RealField, SpectralField, forward_dft, sobolev_norm
from .noise import (
    NoiseIncrement,
    NoiseSpec,
    aggregate_increments,
    sample_increment,
    site_std,
    standard_normals,
)

EQUATIONS = ("heat", "decoupled_ac", "allen_cahn")
EQUATION_ALIASES = {"dac": "decoupled_ac", "ac": "allen_cahn"}

# Factors with smaller magnitude are treated as singular.
SINGULAR_TOL = 1e-12
# Steps between finiteness checks during integration.
FINITE_CHECK_EVERY = 100


@dataclass(frozen=True)
class SchemeConfig:
    """Equation selector, rates and time discretization.

    ``dealias`` defaults to on for ``allen_cahn`` and off otherwise; it only
    affects the cubic term of the pseudospectral scheme.
    """

    equation: str
    alpha: float = 1.0
    g: float = 1.0
    sigma: float = 0.0
    T: float = 1.0
    M: int = 1000
    dealias: bool | None = None

    def __post_init__(self) -> None:
        eq = EQUATION_ALIASES.get(self.equation, self.equation)
        if eq not in EQUATIONS:
            raise ConfigError(f"unknown equation {self.equation!r}; expected one of {EQUATIONS}")
        object.__setattr__(self, "equation", eq)
        for name in ("alpha", "g", "sigma"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConfigError(f"{name} must be finite and >= 0, got {value}")
        if not (math.isfinite(self.T) and self.T > 0):
            raise ConfigError(f"T must be positive, got {self.T}")
        if int(self.M) != self.M or self.M < 0:
            raise ConfigError(f"M must be a non-negative integer, got {self.M}")
        object.__setattr__(self, "M", int(self.M))
        if self.dealias is None:
            object.__setattr__(self, "dealias", eq == "allen_cahn")

    @property
    def dt(self) -> float:
        return self.T / self.M if self.M else 0.0

    def with_steps(self, M: int) -> "SchemeConfig":
        return replace(self, M=M)

    @property
    def spectral(self) -> bool:
        return self.equation != "decoupled_ac"


def sin2x(*x: np.ndarray) -> np.ndarray:
    return np.sin(2.0 * x[0])


def sin_x1(*x: np.ndarray) -> np.ndarray:
    return np.sin(x[0])


@dataclass(frozen=True, eq=False)
class InitialCondition:
    """Deterministic initial data, sampled on the solver grid on demand."""

    kind: str = "zero"
    func: Callable[..., np.ndarray] | None = None
    values: RealField | None = None
    label: str = "zero"

    def __post_init__(self) -> None:
        if self.kind not in ("zero", "function", "snapshot"):
            raise ConfigError(f"unknown initial-condition kind {self.kind!r}")
        if self.kind == "function" and self.func is None:
            raise ConfigError("function initial condition needs func")
        if self.kind == "snapshot" and self.values is None:
            raise ConfigError("snapshot initial condition needs values")

    @classmethod
    def zero(cls) -> "InitialCondition":
        return cls()

    @classmethod
    def from_function(cls, func: Callable[..., np.ndarray], label: str | None = None) -> "InitialCondition":
        return cls("function", func=func, label=label or getattr(func, "__name__", "function"))

    @classmethod
    def sin2x(cls) -> "InitialCondition":
        return cls.from_function(sin2x, "sin2x")

    @classmethod
    def from_field(cls, f: RealField, label: str = "snapshot") -> "InitialCondition":
        return cls("snapshot", values=f, label=label)

    def sample(self, grid: GridSpec) -> RealField:
        if self.kind == "zero":
            return grid.zeros()
        if self.kind == "function":
            return grid.sample(self.func)
        if self.values.grid != grid:
            raise GridMismatchError(f"snapshot grid {self.values.grid} does not match solver grid {grid}")
        return self.values


class _Stepper:
    """Per-(config, grid) precomputed factors and the raw update kernels."""

    def __init__(self, config: SchemeConfig, grid: GridSpec):
        self.config = config
        self.grid = grid
        dt = config.dt
        self.noise_std = site_std(grid, config.sigma, dt) if dt > 0 else 0.0
        eq = config.equation
        if eq == "decoupled_ac":
            h = 0.5 * config.g * dt
            if abs(1.0 - h) < SINGULAR_TOL:
                raise SingularFactorError(f"g*dt = 2 makes the implicit factor vanish (g={config.g}, dt={dt})")
            self.keep = 1.0 + h
            self.cubic = config.g * dt
            self.inv_den = 1.0 / (1.0 - h)
            return

        ksq = _half_k_squared(grid)
        if eq == "heat":
            rate = config.g + config.alpha * ksq
            den = 1.0 + 0.5 * dt * rate
            num = 1.0 - 0.5 * dt * rate
        else:
            lam = config.g - config.alpha * ksq
            den = 1.0 - 0.5 * dt * lam
            num = 1.0 + 0.5 * dt * lam
        if np.any(np.abs(den) < SINGULAR_TOL):
            bad = np.argwhere(np.abs(den) < SINGULAR_TOL)[0]
            raise SingularFactorError(f"implicit factor vanishes at half-spectrum index {tuple(bad)}")
        self.amplify = num / den
        self.noise_gain = 1.0 / den
        self.cubic_gain = config.g * dt / den
        self.mask = _half_dealias_mask(grid) if (eq == "allen_cahn" and config.dealias) else None

    def to_internal(self, u: RealField) -> np.ndarray:
        if self.config.spectral:
            return sfft.rfftn(u.values, norm="ortho")
        return u.values.copy()

    def to_values(self, data: np.ndarray) -> np.ndarray:
        if self.config.spectral:
            return sfft.irfftn(data, s=self.grid.shape, norm="ortho")
        return data

    def cubic_term(self, data: np.ndarray) -> np.ndarray:
        """Half spectrum of ``u^3``, masked on input and output when dealiasing."""
        src = data * self.mask if self.mask is not None else data
        u = sfft.irfftn(src, s=self.grid.shape, norm="ortho")
        out = sfft.rfftn(u * u * u, norm="ortho")
        if self.mask is not None:
            out *= self.mask
        return out

    def step(self, data: np.ndarray, noise: np.ndarray | None) -> np.ndarray:
        eq = self.config.equation
        if eq == "decoupled_ac":
            new = data * self.keep - self.cubic * (data * data * data)
            if noise is not None:
                new += noise
            new *= self.inv_den
            return new
        new = self.amplify * data
        if eq == "allen_cahn":
            new -= self.cubic_gain * self.cubic_term(data)
        if noise is not None:
            new += self.noise_gain * sfft.rfftn(noise, norm="ortho")
        return new


def _half_k_squared(grid: GridSpec) -> np.ndarray:
    k = np.fft.fftfreq(grid.N, 1.0 / grid.N)
    kr = np.abs(np.fft.rfftfreq(grid.N, 1.0 / grid.N))
    axes = [k] * (grid.d - 1) + [kr]
    return sum(a * a for a in np.meshgrid(*axes, indexing="ij"))


def _half_dealias_mask(grid: GridSpec) -> np.ndarray:
    k = np.abs(np.fft.fftfreq(grid.N, 1.0 / grid.N))
    kr = np.abs(np.fft.rfftfreq(grid.N, 1.0 / grid.N))
    axes = [k] * (grid.d - 1) + [kr]
    kmax = np.max(np.stack(np.meshgrid(*axes, indexing="ij")), axis=0)
    return (3 * kmax < grid.N).astype(float)


@lru_cache(maxsize=64)
def _stepper(config: SchemeConfig, grid: GridSpec) -> _Stepper:
    return _Stepper(config, grid)


def make_stepper(config: SchemeConfig, grid: GridSpec) -> _Stepper:
    """Validate ``config`` on ``grid`` eagerly (raises on singular factors)."""
    return _stepper(config, grid)


@dataclass(frozen=True, eq=False)
class SolverState:
    """Time index plus the current field in the scheme's working space."""

    config: SchemeConfig
    grid: GridSpec
    m: int
    data: np.ndarray = field(repr=False)

    @classmethod
    def initial(cls, config: SchemeConfig, grid: GridSpec, u0: RealField | InitialCondition) -> "SolverState":
        if isinstance(u0, InitialCondition):
            u0 = u0.sample(grid)
        if u0.grid != grid:
            raise GridMismatchError(f"initial field grid {u0.grid} does not match {grid}")
        return cls(config, grid, 0, make_stepper(config, grid).to_internal(u0))

    @property
    def time(self) -> float:
        return self.m * self.config.dt

    def real_field(self) -> RealField:
        values = _stepper(self.config, self.grid).to_values(self.data)
        if not np.all(np.isfinite(values)):
            raise NumericalError(f"non-finite field at step {self.m}")
        return RealField(self.grid, np.array(values))

    def spectral_field(self) -> SpectralField:
        return forward_dft(self.real_field())


def _advance(state: SolverState, noise: NoiseIncrement, equation: str) -> SolverState:
    cfg = state.config
    if cfg.equation != equation:
        raise ConfigError(f"state is configured for {cfg.equation!r}, not {equation!r}")
    if noise.grid != state.grid:
        raise GridMismatchError(f"noise grid {noise.grid} does not match state grid {state.grid}")
    if not math.isclose(noise.dt, cfg.dt, rel_tol=1e-12):
        raise ConfigError(f"noise increment dt={noise.dt} does not match scheme dt={cfg.dt}")
    data = _stepper(cfg, state.grid).step(state.data, noise.field.values)
    return SolverState(cfg, state.grid, state.m + 1, data)


def heat_step(state: SolverState, noise: NoiseIncrement) -> SolverState:
    """One trapezoidal/Euler-Maruyama step of the heat equation, per mode."""
    return _advance(state, noise, "heat")


def decoupled_step(state: SolverState, noise: NoiseIncrement) -> SolverState:
    """One step of the site-wise double-well equation."""
    return _advance(state, noise, "decoupled_ac")


def allen_cahn_step(state: SolverState, noise: NoiseIncrement) -> SolverState:
    """One pseudospectral step; the cubic is taken fully explicitly at step m."""
    return _advance(state, noise, "allen_cahn")


STEP_FUNCTIONS = {"heat": heat_step, "decoupled_ac": decoupled_step, "allen_cahn": allen_cahn_step}


def _check_sigma(config: SchemeConfig, spec: NoiseSpec) -> None:
    if spec.sigma != config.sigma:
        raise ConfigError(f"noise sigma {spec.sigma} differs from scheme sigma {config.sigma}")


def _run(
    config: SchemeConfig,
    ic: InitialCondition | RealField,
    spec: NoiseSpec,
    grid: GridSpec,
    snapshot_steps: Iterable[int] = (),
) -> tuple[RealField, dict[int, RealField]]:
    _check_sigma(config, spec)
    stepper = make_stepper(config, grid)
    state = SolverState.initial(config, grid, ic)
    wanted = set(int(m) for m in snapshot_steps)
    snaps: dict[int, RealField] = {}
    if 0 in wanted:
        snaps[0] = state.real_field()
    data = state.data
    seed = spec.seed
    buf = np.empty(grid.shape)
    noisy = config.sigma > 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for m in range(config.M):
            noise = None
            if noisy:
                standard_normals(grid, seed, m, out=buf)
                buf *= stepper.noise_std
                noise = buf
            data = stepper.step(data, noise)
            if (m + 1) % FINITE_CHECK_EVERY == 0 and not np.all(np.isfinite(data)):
                raise NumericalError(f"{config.equation} blew up before step {m + 1}")
            if m + 1 in wanted:
                snaps[m + 1] = SolverState(config, grid, m + 1, data).real_field()
    if not np.all(np.isfinite(data)):
        raise NumericalError(f"{config.equation} blew up within {config.M} steps")
    final = SolverState(config, grid, config.M, data).real_field()
    return final, snaps


def integrate(
    config: SchemeConfig,
    ic: InitialCondition | RealField,
    spec: NoiseSpec,
    grid: GridSpec,
) -> RealField:
    """Apply ``config.M`` steps, consuming increments ``0..M-1`` of ``spec``."""
    return _run(config, ic, spec, grid)[0]


def integrate_trajectory(
    config: SchemeConfig,
    ic: InitialCondition | RealField,
    spec: NoiseSpec,
    grid: GridSpec,
    snapshot_steps: Iterable[int],
) -> tuple[RealField, dict[int, RealField]]:
    """Like :func:`integrate` but also returns fields at the given step indices."""
    return _run(config, ic, spec, grid, snapshot_steps)


def integrate_with_increments(
    config: SchemeConfig,
    ic: InitialCondition | RealField,
    grid: GridSpec,
    increments: Iterable[NoiseIncrement],
) -> RealField:
    """Integrate on a caller-supplied noise path (one increment per step)."""
    state = SolverState.initial(config, grid, ic)
    step = STEP_FUNCTIONS[config.equation]
    it = iter(increments)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(config.M):
            state = step(state, next(it))
    return state.real_field()


def free_energy(u: RealField, alpha: float, g: float) -> float:
    """``int alpha/2 |grad u|^2 + g (u^2 - 1)^2 / 4``, with the gradient taken spectrally.

    The deterministic Allen-Cahn flow is the L2 gradient flow of this functional.
    """
    grid = u.grid
    grad = 0.5 * alpha * grid.cell_volume * float(np.sum(grid.k_squared() * forward_dft(u).energy()))
    well = g * grid.cell_volume * float(np.sum(0.25 * (u.values**2 - 1.0) ** 2))
    return grad + well


@dataclass(frozen=True)
class ConvergenceResult:
    diff_coarse: float
    diff_fine: float

    @property
    def ratio(self) -> float:
        if self.diff_fine == 0.0:
            return math.nan
        return self.diff_coarse / self.diff_fine

    def __iter__(self) -> Iterator[float]:
        return iter((self.diff_coarse, self.diff_fine, self.ratio))


def self_convergence_check(
    config: SchemeConfig,
    ic: InitialCondition | RealField,
    spec: NoiseSpec,
    grid: GridSpec,
) -> ConvergenceResult:
    """Compare solutions with steps ``2 dt``, ``dt`` and ``dt/2`` on one Wiener path.

    The finest path uses increments of ``spec`` at step ``dt/2``; the coarser
    runs consume sums of consecutive fine increments.  Returns the L2 norms
    ``|u_2dt - u_dt|`` and ``|u_dt - u_dt/2|`` (iterable as a 3-tuple with
    their ratio).
    """
    _check_sigma(config, spec)
    M = config.M
    if M < 2 or M % 2:
        raise ConfigError(f"self-convergence needs an even M >= 2, got {M}")
    configs = [config.with_steps(M // 2), config, config.with_steps(2 * M)]
    states = [SolverState.initial(c, grid, ic) for c in configs]
    step = STEP_FUNCTIONS[config.equation]
    dt_fine = configs[2].dt
    pending: list[list[NoiseIncrement]] = [[], []]
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(2 * M):
            inc = sample_increment(grid, spec, dt_fine, i)
            states[2] = step(states[2], inc)
            pending[1].append(inc)
            if len(pending[1]) == 2:
                mid = aggregate_increments(pending[1])
                pending[1] = []
                states[1] = step(states[1], mid)
                pending[0].append(mid)
                if len(pending[0]) == 2:
                    states[0] = step(states[0], aggregate_increments(pending[0]))
                    pending[0] = []
    coarse, middle, fine = (s.real_field() for s in states)
    return ConvergenceResult(sobolev_norm(coarse - middle, 0.0), sobolev_norm(middle - fine, 0.0))


__all__ = [
    "EQUATIONS",
    "SchemeConfig",
    "InitialCondition",
    "SolverState",
    "ConvergenceResult",
    "make_stepper",
    "heat_step",
    "decoupled_step",
    "allen_cahn_step",
    "integrate",
    "integrate_trajectory",
    "integrate_with_increments",
    "self_convergence_check",
    "free_energy",
    "sin2x",
    "sin_x1",
]
