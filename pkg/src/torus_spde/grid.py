"""
Torus grids, the symmetric DFT pair, discrete Sobolev norms and radial spectra.

Conventions
-----------
The torus is ``[-pi, pi)^d`` sampled at ``x_j = (2 pi / N) j`` with
``j_i = -N/2, ..., N/2 - 1``.  A :class:`RealField` stores ``u(x_j)`` at array
index ``j + N/2`` along every axis (axis ``i`` is the coordinate ``x_{i+1}``).

The transform pair is

    u_hat(k) = N^{-d/2} sum_j u(x_j) exp(+2 pi i k.j / N)
    u(x_j)   = N^{-d/2} sum_k u_hat(k) exp(-2 pi i k.j / N)

with ``k_i = -N/2, ..., N/2 - 1``.  A :class:`SpectralField` stores
``u_hat(k)`` at array index ``k mod N`` (the usual FFT ordering), so
``np.fft.fftfreq(N, 1/N)`` gives the wave numbers along each axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    ConfigError,
    GridMismatchError,
    SymmetryError,
    UnsupportedDimensionError,
)

TWO_PI = 2.0 * math.pi

# Relative tolerance for the Hermitian check in inverse_dft.
HERMITIAN_RTOL = 1e-9


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on the d-torus with ``N`` points per axis."""

    d: int
    N: int

    def __post_init__(self) -> None:
        if self.d not in (1, 2):
            raise UnsupportedDimensionError(f"only d in (1, 2) is supported, got d={self.d}")
        if not isinstance(self.N, (int, np.integer)) or self.N < 2 or self.N % 2:
            raise ConfigError(f"N must be an even integer >= 2, got {self.N!r}")

    @property
    def dx(self) -> float:
        return TWO_PI / self.N

    @property
    def rho(self) -> float:
        """Grid density, ``dx**-2``."""
        return (self.N / TWO_PI) ** 2

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def cell_volume(self) -> float:
        """``rho^{-d/2}``, the volume of one grid cell."""
        return self.dx**self.d

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Meshgrid of grid-point coordinates, one array per axis."""
        x = self.dx * np.arange(-self.N // 2, self.N // 2)
        return tuple(np.meshgrid(*([x] * self.d), indexing="ij"))

    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Meshgrid of integer wave vectors in FFT storage order."""
        k = np.fft.fftfreq(self.N, 1.0 / self.N).astype(np.int64)
        return tuple(np.meshgrid(*([k] * self.d), indexing="ij"))

    def k_squared(self) -> np.ndarray:
        """``|k|^2`` in FFT storage order (integers)."""
        return sum(ki * ki for ki in self.wavenumbers())

    def zeros(self) -> "RealField":
        return RealField(self, np.zeros(self.shape))

    def sample(self, func: Callable[..., np.ndarray]) -> "RealField":
        """Evaluate ``func(x1, ..., xd)`` at the grid points."""
        values = np.broadcast_to(np.asarray(func(*self.coordinates()), dtype=float), self.shape)
        return RealField(self, np.array(values))


@dataclass(frozen=True, eq=False)
class RealField:
    """Real scalar field sampled on a :class:`GridSpec`."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ConfigError(f"field shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ConfigError("field contains non-finite values")
        object.__setattr__(self, "values", values)

    def __add__(self, other: "RealField") -> "RealField":
        _check_same_grid(self.grid, other.grid)
        return RealField(self.grid, self.values + other.values)

    def __sub__(self, other: "RealField") -> "RealField":
        _check_same_grid(self.grid, other.grid)
        return RealField(self.grid, self.values - other.values)

    def __neg__(self) -> "RealField":
        return RealField(self.grid, -self.values)

    def scaled(self, factor: float) -> "RealField":
        return RealField(self.grid, factor * self.values)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """DFT coefficients of a field, stored in FFT order."""

    grid: GridSpec
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        coeffs = np.asarray(self.coeffs, dtype=complex)
        if coeffs.shape != self.grid.shape:
            raise ConfigError(f"coefficient shape {coeffs.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "coeffs", coeffs)

    def at(self, *k: int) -> complex:
        """Coefficient of wave vector ``k``, each ``k_i`` in ``[-N/2, N/2)``."""
        if len(k) != self.grid.d:
            raise ConfigError(f"expected {self.grid.d} wave-vector components")
        half = self.grid.N // 2
        if any(not -half <= ki < half for ki in k):
            raise ConfigError(f"wave vector {k} is not on the grid")
        return complex(self.coeffs[tuple(ki % self.grid.N for ki in k)])

    def hermitian_defect(self) -> float:
        """``max |u_hat(k) - conj(u_hat(-k))|`` with ``-k`` taken mod N."""
        mirrored = self.coeffs
        for axis in range(self.grid.d):
            mirrored = np.roll(np.flip(mirrored, axis=axis), 1, axis=axis)
        return float(np.max(np.abs(self.coeffs - np.conj(mirrored)), initial=0.0))

    def energy(self) -> np.ndarray:
        return np.abs(self.coeffs) ** 2


@dataclass(frozen=True)
class RadialBin:
    kappa: int
    energy: float
    cardinality: int
    stderr: float | None = None


@dataclass(frozen=True, eq=False)
class RadialSpectrum:
    """Radial energy density ``E_N(kappa)`` with annulus cardinalities."""

    grid: GridSpec
    kappa: np.ndarray
    energy: np.ndarray
    cardinality: np.ndarray
    stderr: np.ndarray | None = None

    @property
    def bins(self) -> list[RadialBin]:
        err = self.stderr if self.stderr is not None else [None] * len(self.kappa)
        return [
            RadialBin(int(k), float(e), int(c), None if s is None else float(s))
            for k, e, c, s in zip(self.kappa, self.energy, self.cardinality, err)
        ]

    def truncated(self, kappa_max: int) -> "RadialSpectrum":
        """Bins with ``kappa <= kappa_max`` (the figure range uses N/2 - 1)."""
        keep = self.kappa <= kappa_max
        return RadialSpectrum(
            self.grid,
            self.kappa[keep],
            self.energy[keep],
            self.cardinality[keep],
            None if self.stderr is None else self.stderr[keep],
        )


def _check_same_grid(a: GridSpec, b: GridSpec) -> None:
    if a != b:
        raise GridMismatchError(f"grid mismatch: {a} vs {b}")


def _phase(grid: GridSpec) -> np.ndarray:
    # (-1)^{k_1 + ... + k_d}: the grid starts at j = -N/2, not 0.
    return np.where(sum(grid.wavenumbers()) % 2 == 0, 1.0, -1.0)


def forward_dft(f: RealField) -> SpectralField:
    """Symmetric DFT with the ``exp(+2 pi i k.j/N)`` kernel and ``N^{-d/2}`` scaling."""
    grid = f.grid
    coeffs = np.fft.ifftn(f.values, norm="ortho") * _phase(grid)
    return SpectralField(grid, coeffs)


def inverse_dft(F: SpectralField) -> RealField:
    """Inverse of :func:`forward_dft`; rejects data that is not Hermitian.

    Raises
    ------
    SymmetryError
        If ``F`` does not satisfy ``u_hat(-k) = conj(u_hat(k))``.
    """
    scale = float(np.max(np.abs(F.coeffs), initial=0.0))
    defect = F.hermitian_defect()
    if defect > HERMITIAN_RTOL * max(scale, 1e-300) and defect > 0.0:
        raise SymmetryError(f"spectral field is not Hermitian (defect {defect:.3e}, scale {scale:.3e})")
    values = np.fft.fftn(F.coeffs * _phase(F.grid), norm="ortho")
    return RealField(F.grid, values.real)


def sobolev_weights(grid: GridSpec, s: float) -> np.ndarray:
    return (1.0 + grid.k_squared()) ** float(s)


def sobolev_norm_sq(f: RealField, s: float = 0.0) -> float:
    """Squared discrete ``H^s`` norm, ``rho^{-d/2} sum_k (1+|k|^2)^s |u_hat(k)|^2``."""
    F = forward_dft(f)
    return f.grid.cell_volume * float(np.sum(sobolev_weights(f.grid, s) * F.energy()))


def sobolev_norm(f: RealField, s: float = 0.0) -> float:
    """Discrete ``H^s`` norm (square root of :func:`sobolev_norm_sq`)."""
    return math.sqrt(sobolev_norm_sq(f, s))


def radial_bin_index(k_squared: np.ndarray) -> np.ndarray:
    """Annulus index ``max(1, ceil(|k|))`` computed exactly from integer ``|k|^2``."""
    ksq = np.asarray(k_squared, dtype=np.int64)
    r = np.floor(np.sqrt(ksq)).astype(np.int64)
    # float sqrt can be off by one near perfect squares
    r = np.where((r + 1) * (r + 1) <= ksq, r + 1, r)
    r = np.where(r * r > ksq, r - 1, r)
    kappa = np.where(r * r == ksq, r, r + 1)
    return np.maximum(kappa, 1)


@dataclass(frozen=True)
class _Binning:
    index: np.ndarray
    kappa: np.ndarray
    cardinality: np.ndarray


_BINNING_CACHE: dict[GridSpec, _Binning] = {}


def _binning(grid: GridSpec) -> _Binning:
    cached = _BINNING_CACHE.get(grid)
    if cached is None:
        index = radial_bin_index(grid.k_squared()).ravel()
        kappa_max = int(index.max())
        counts = np.bincount(index, minlength=kappa_max + 1)[1:]
        cached = _Binning(index, np.arange(1, kappa_max + 1), counts)
        _BINNING_CACHE[grid] = cached
    return cached


def radial_energy_density(F: SpectralField) -> RadialSpectrum:
    """Bin ``|u_hat|^2`` into annuli and average, scaled by ``1/rho``.

    Every lattice mode is assigned to exactly one bin ``max(1, ceil(|k|))``,
    so the DC mode joins bin 1 and the corner modes of the square grid land in
    bins up to ``ceil(N / sqrt 2)``.
    """
    grid = F.grid
    if grid.d != 2:
        raise UnsupportedDimensionError("radial energy density is defined for d=2 only")
    b = _binning(grid)
    sums = np.bincount(b.index, weights=F.energy().ravel(), minlength=len(b.kappa) + 1)[1:]
    energy = sums / b.cardinality / grid.rho
    return RadialSpectrum(grid, b.kappa.copy(), energy, b.cardinality.copy())


def binned_sobolev_norm(R: RadialSpectrum, s: float = 0.0) -> float:
    """``sum_kappa kappa E(kappa) (1+kappa^2)^s`` over the bins of ``R``.

    Equivalent to :func:`sobolev_norm_sq` only up to kappa-independent
    constants; it is not equal to it.
    """
    k = np.asarray(R.kappa, dtype=float)
    return float(np.sum(k * R.energy * (1.0 + k * k) ** float(s)))


def dealias_mask(grid: GridSpec) -> np.ndarray:
    """Boolean mask keeping modes with ``max_i |k_i| < N/3``."""
    kmax = np.max(np.abs(np.stack(grid.wavenumbers())), axis=0)
    return 3 * kmax < grid.N


def two_thirds_dealias(F: SpectralField) -> SpectralField:
    """Zero every coefficient with ``max_i |k_i| >= N/3``."""
    return SpectralField(F.grid, np.where(dealias_mask(F.grid), F.coeffs, 0.0))


def pair_with_test_function(f: RealField, phi: RealField) -> float:
    """Grid Riemann sum ``rho^{-d/2} sum_j f(x_j) phi(x_j)``."""
    _check_same_grid(f.grid, phi.grid)
    return f.grid.cell_volume * float(np.sum(f.values * phi.values))


def interval_averages(f: RealField, n_intervals: int) -> np.ndarray:
    """Integrals of ``f`` over the strips ``I_k x [-pi, pi)``.

    The ``x1`` axis is split into ``n_intervals`` equal intervals starting at
    ``-pi``; entry ``i`` is the Riemann sum over strip ``i``.
    """
    grid = f.grid
    if grid.d != 2:
        raise UnsupportedDimensionError("interval averages are defined for d=2 only")
    if n_intervals < 1 or grid.N % n_intervals:
        raise ConfigError(f"N={grid.N} is not divisible by n_intervals={n_intervals}")
    strips = f.values.reshape(n_intervals, grid.N // n_intervals, grid.N)
    return grid.cell_volume * strips.sum(axis=(1, 2))


__all__ = [
    "GridSpec",
    "RealField",
    "SpectralField",
    "RadialSpectrum",
    "RadialBin",
    "forward_dft",
    "inverse_dft",
    "sobolev_norm",
    "sobolev_norm_sq",
    "sobolev_weights",
    "radial_bin_index",
    "radial_energy_density",
    "binned_sobolev_norm",
    "dealias_mask",
    "two_thirds_dealias",
    "pair_with_test_function",
    "interval_averages",
]
