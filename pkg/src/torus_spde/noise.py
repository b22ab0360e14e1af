"""
Discrete space-time white noise on the torus.

An increment over a step ``dt`` is sampled in direct space with i.i.d.
per-site values ``sigma * sqrt(dt) * rho^{d/4} * N(0, 1)``; its DFT then has
``E|u_hat(k)|^2 = sigma^2 dt rho^{d/2}`` on every mode and is exactly
Hermitian.

Every increment is a pure function of ``(master_seed, realization_index,
step_index)``: the realization seed is a splitmix64 hash of the first two and
the step selects a child stream through ``numpy.random.SeedSequence``.  No
generator state is shared between steps or realizations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ConfigError, GridMismatchError
from .grid import GridSpec, RealField, SpectralField, forward_dft

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One round of the splitmix64 output function."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def realization_seed(master_seed: int, realization_index: int) -> int:
    """64-bit seed of one realization; recorded in run manifests for replay."""
    return splitmix64(splitmix64(master_seed & _MASK64) ^ (realization_index & _MASK64))


def step_generator(seed: int, step_index: int) -> np.random.Generator:
    """Independent generator for one time step of one realization."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(step_index,))))


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float
    master_seed: int = 0
    realization_index: int = 0

    def __post_init__(self) -> None:
        if not math.isfinite(self.sigma) or self.sigma < 0:
            raise ConfigError(f"sigma must be finite and >= 0, got {self.sigma}")
        if self.master_seed < 0 or self.realization_index < 0:
            raise ConfigError("seeds and realization indices must be non-negative")

    @property
    def seed(self) -> int:
        return realization_seed(self.master_seed, self.realization_index)


@dataclass(frozen=True, eq=False)
class NoiseIncrement:
    field: RealField
    dt: float

    @property
    def grid(self) -> GridSpec:
        return self.field.grid


def site_std(grid: GridSpec, sigma: float, dt: float) -> float:
    """Per-site standard deviation ``sigma sqrt(dt) rho^{d/4}``."""
    return sigma * math.sqrt(dt) * grid.rho ** (grid.d / 4.0)


def standard_normals(grid: GridSpec, seed: int, step_index: int, out: np.ndarray | None = None) -> np.ndarray:
    """Unit normals for one step, in grid shape; ``out`` avoids an allocation."""
    gen = step_generator(seed, step_index)
    if out is None:
        return gen.standard_normal(grid.shape)
    gen.standard_normal(out=out)
    return out


def sample_increment(grid: GridSpec, spec: NoiseSpec, dt: float, step_index: int) -> NoiseIncrement:
    """Direct-space noise increment for step ``step_index`` of size ``dt``."""
    if not dt > 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    if step_index < 0:
        raise ConfigError("step_index must be non-negative")
    if spec.sigma == 0.0:
        return NoiseIncrement(grid.zeros(), dt)
    values = standard_normals(grid, spec.seed, step_index)
    values *= site_std(grid, spec.sigma, dt)
    return NoiseIncrement(RealField(grid, values), dt)


def spectral_increment(inc: NoiseIncrement) -> SpectralField:
    return forward_dft(inc.field)


def truncate_noise(F: SpectralField, cutoff: int) -> SpectralField:
    """Keep only modes inside the disc ``|k| <= cutoff``."""
    if cutoff < 0:
        raise ConfigError("cutoff must be non-negative")
    keep = F.grid.k_squared() <= cutoff * cutoff
    return SpectralField(F.grid, np.where(keep, F.coeffs, 0.0))


def aggregate_increments(fine: Iterable[NoiseIncrement]) -> NoiseIncrement:
    """Sum consecutive increments into one coarse increment of the same path."""
    fine = list(fine)
    if not fine:
        raise ConfigError("need at least one increment to aggregate")
    grid = fine[0].grid
    total = np.zeros(grid.shape)
    dt = 0.0
    for inc in fine:
        if inc.grid != grid:
            raise GridMismatchError(f"grid mismatch: {inc.grid} vs {grid}")
        total += inc.field.values
        dt += inc.dt
    return NoiseIncrement(RealField(grid, total), dt)


__all__ = [
    "NoiseSpec",
    "NoiseIncrement",
    "sample_increment",
    "spectral_increment",
    "truncate_noise",
    "aggregate_increments",
    "realization_seed",
    "site_std",
    "splitmix64",
    "standard_normals",
    "step_generator",
]
