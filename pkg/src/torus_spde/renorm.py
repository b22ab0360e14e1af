"""
Closed-form predictions: Ornstein-Uhlenbeck covariances, heat-equation norm
series, the Wick constant ``C_N`` and its asymptotics, stationary
double-well moments and the resulting norm scalings.

Lattice sums over the disc ``|k| <= N`` are exact (grouped by the value of
``|k|^2``) up to radius :data:`EXACT_RADIUS`; beyond it, in two dimensions,
the exact core is completed with the continuum integral over the remaining
annulus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, optimize, special

from .errors import DomainError, NumericalError, UnsupportedDimensionError

EXACT_RADIUS = 2048
CN_TOL = 1e-10
CN_MAX_ITER = 200
# exp(-690.8) ~ 1e-300: the double-well integrands are negligible beyond this.
_LOG_TINY = 690.8


# ---------------------------------------------------------------------------
# lattice sums


@lru_cache(maxsize=16)
def _shell_counts(radius: int, d: int) -> np.ndarray:
    """``counts[n]`` = number of ``k in Z^d`` with ``|k|^2 = n``, for ``n <= radius^2``."""
    r2 = radius * radius
    counts = np.zeros(r2 + 1, dtype=np.int64)
    if d == 1:
        k = np.arange(radius + 1)
        counts[k * k] = 2
        counts[0] = 1
    elif d == 2:
        for k1 in range(radius + 1):
            m = math.isqrt(r2 - k1 * k1)
            k2 = np.arange(m + 1)
            w = np.where(k2 == 0, 1, 2) * (1 if k1 == 0 else 2)
            np.add.at(counts, k1 * k1 + k2 * k2, w)
    elif d == 3:
        plane = _shell_counts(radius, 2)
        for k3 in range(-radius, radius + 1):
            off = k3 * k3
            counts[off:] += plane[: r2 + 1 - off]
    else:
        raise UnsupportedDimensionError(f"lattice sums support d in (1, 2, 3), got {d}")
    counts.flags.writeable = False
    return counts


def lattice_shells(radius: int, d: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Distinct values ``n = |k|^2 <= radius^2`` on ``Z^d`` and their multiplicities."""
    radius = int(radius)
    if radius < 0:
        raise DomainError("radius must be non-negative")
    if d == 1:
        k = np.arange(radius + 1, dtype=float)
        return k * k, np.where(k == 0, 1.0, 2.0)
    counts = _shell_counts(radius, d)
    n = np.nonzero(counts)[0]
    return n.astype(float), counts[n].astype(float)


def disc_sum(f: Callable[[np.ndarray], np.ndarray], radius: float, d: int = 2) -> float:
    """``sum_{k in Z^d, |k| <= radius} f(|k|^2)`` for vectorized ``f``."""
    radius = int(math.floor(radius))
    if radius <= EXACT_RADIUS or d == 1:
        n, mult = lattice_shells(radius, d)
        return float(np.sum(mult * f(n)))
    if d != 2:
        raise UnsupportedDimensionError("large-radius lattice sums are implemented for d=2 only")
    n, mult = lattice_shells(EXACT_RADIUS, 2)
    core = float(np.sum(mult * f(n)))
    tail, _ = integrate.quad(
        lambda r: 2.0 * math.pi * r * float(f(np.array([r * r]))[0]),
        EXACT_RADIUS,
        radius,
        epsabs=0.0,
        epsrel=1e-12,
        limit=200,
    )
    return core + tail


# ---------------------------------------------------------------------------
# linear theory


def ou_covariance(mu: float, sigma: float, t: float, lag: float = 0.0) -> float:
    """``E u(t) u(t+lag)`` for ``du = -mu u dt + sigma dB``, ``u(0) = 0``."""
    if mu <= 0:
        raise DomainError("mu must be positive")
    if t < 0 or lag < 0:
        raise DomainError("t and lag must be non-negative")
    growth = 1.0 if math.isinf(t) else -math.expm1(-2.0 * mu * t)
    return sigma * sigma / (2.0 * mu) * math.exp(-mu * lag) * growth


@dataclass(frozen=True)
class SeriesResult:
    partial_sum: float
    classification: str  # "convergent" | "divergent"


def heat_norm_series(d: int, sigma: float, t: float, s: float, K: int) -> SeriesResult:
    """Partial sum over ``|k| <= K`` of ``E ||u(t)||_s^2`` for the heat equation.

    The classification is the analytic one: the full series converges iff
    ``s < 1 - d/2``.
    """
    if K < 1:
        raise DomainError("truncation K must be >= 1")
    if t < 0:
        raise DomainError("t must be non-negative")

    def term(n: np.ndarray) -> np.ndarray:
        mu = 1.0 + n
        growth = 1.0 if math.isinf(t) else -np.expm1(-2.0 * mu * t)
        return (1.0 + n) ** s * sigma * sigma / (2.0 * mu) * growth

    total = disc_sum(term, K, d)
    return SeriesResult(total, "convergent" if s < 1.0 - d / 2.0 else "divergent")


# ---------------------------------------------------------------------------
# Wick constant


@dataclass(frozen=True)
class RenormResult:
    C_N: float
    N: int
    sigma: float
    residual: float
    iterations: int
    excess: float  # C_N - 1 without the cancellation of forming it from C_N


def _cn_prefactor(sigma: float) -> float:
    return 3.0 * sigma * sigma / (8.0 * math.pi**2)


def cn_map(C: float, sigma: float, N: int) -> float:
    """Right-hand side ``(3 sigma^2 / 8 pi^2) sum_{|k|<=N} 1/(C - 1 + |k|^2)``."""
    return _cn_prefactor(sigma) * disc_sum(lambda n: 1.0 / (C - 1.0 + n), N, 2)


def solve_CN(sigma: float, N: int, tol: float = CN_TOL) -> RenormResult:
    """Unique fixed point ``C > 1`` of :func:`cn_map`, by bisection.

    Bisection runs on ``x = C - 1`` and tests ``a > x (1 + x - a S(x))`` with
    ``S`` the sum over nonzero modes; this is equivalent to ``F(C) > C`` but
    keeps full relative precision when ``sigma`` is tiny and ``x ~ a``.
    """
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    if N < 2:
        raise DomainError(f"N must be >= 2, got {N}")
    a = _cn_prefactor(sigma)
    S = lambda x: disc_sum(lambda n: np.where(n > 0, 1.0 / (x + np.maximum(n, 1.0)), 0.0), N, 2)  # noqa: E731
    n_modes = math.pi * (N + 1) ** 2 + 1.0
    lo, hi = 0.0, a * n_modes
    iterations = 0
    while iterations < CN_MAX_ITER:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        iterations += 1
        if a > mid * (1.0 + mid - a * S(mid)):
            lo = mid
        else:
            hi = mid
    x = hi
    C = 1.0 + x
    residual = abs(C - a * (1.0 / x + S(x)))
    if residual >= tol:
        raise NumericalError(f"C_N bisection stalled with residual {residual:.3e}")
    return RenormResult(C, int(N), float(sigma), residual, iterations, x)


def leading_CN(sigma: float, N: float) -> float:
    """Leading logarithmic growth ``(3 sigma^2 / 4 pi) log N``."""
    return 3.0 * sigma * sigma / (4.0 * math.pi) * math.log(N)


def asymptotic_CN(sigma: float, N: float) -> float:
    """Refined estimate solving ``C = (3 sigma^2/4 pi)(log N - log(C)/2)``."""
    if N < 2:
        raise DomainError("N must be >= 2")
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    a = 3.0 * sigma * sigma / (4.0 * math.pi)
    logn = math.log(N)
    # h is strictly increasing from -inf to +inf
    h = lambda C: C - a * (logn - 0.5 * math.log(C))  # noqa: E731
    hi = max(1.0, 2.0 * a * logn + 1.0)
    return optimize.brentq(h, 1e-300, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def predicted_mode_energy(k_sq: float, N: int, sigma: float) -> float:
    """Large-time ``E|u_hat_N(k)|^2 ~ sigma^2 / (2 (C_N - 1 + |k|^2))``, zero beyond the cutoff."""
    if k_sq > N * N:
        return 0.0
    m = solve_CN(sigma, N).excess
    return sigma * sigma / (2.0 * (m + k_sq))


@dataclass(frozen=True)
class NormPrediction:
    value: float
    limit: str  # "zero" | "finite" | "infinite"


def predicted_norm(s: float, N: int, sigma: float) -> NormPrediction:
    """``sum_{|k|<=N} (1+|k|^2)^s sigma^2 / (2 (C_N - 1 + |k|^2))`` and its conjectured limit."""
    m = solve_CN(sigma, N).excess
    value = disc_sum(lambda n: (1.0 + n) ** s * sigma * sigma / (2.0 * (m + n)), N, 2)
    return NormPrediction(value, "infinite" if s >= 0 else "zero")


# ---------------------------------------------------------------------------
# stationary double well


def stationary_c(sigma: float, N: int, d: int, g: float = 1.0) -> float:
    """Exponent ``c`` of the stationary site density ``exp(-c (x^2 - 1)^2)``.

    For ``du = g (u - u^3) dt + sigma rho^{d/4} dB`` this is
    ``g / (2 sigma^2 rho^{d/2}) = g (2 pi)^d / (2 sigma^2 N^d)``.
    """
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    return g * (2.0 * math.pi) ** d / (2.0 * sigma * sigma * float(N) ** d)


def moment_scale(sigma: float, N: int, d: int) -> float:
    """``sqrt(2) sigma rho^{d/4}``, the factor relating the two moment ratios."""
    rho = (N / (2.0 * math.pi)) ** 2
    return math.sqrt(2.0) * sigma * rho ** (d / 4.0)


def _check_c(c: float) -> None:
    if not (c > 0 and math.isfinite(c)):
        raise DomainError(f"c must be positive and finite, got {c}")


def stationary_moment_quadrature(c: float) -> float:
    """``R(c) = int x^2 e^{-c(x^2-1)^2} dx / int e^{-c(x^2-1)^2} dx`` over ``x > 0``.

    Adaptive Gauss-Kronrod on ``[0, x_max]`` with a breakpoint at the well,
    where ``x_max`` is the point past which the integrand is below 1e-300.
    """
    _check_c(c)
    x_max = math.sqrt(1.0 + math.sqrt(_LOG_TINY / c))
    opts = dict(points=[1.0], epsabs=1e-12, epsrel=1e-12, limit=500)
    num, _ = integrate.quad(lambda x: x * x * math.exp(-c * (x * x - 1.0) ** 2), 0.0, x_max, **opts)
    den, _ = integrate.quad(lambda x: math.exp(-c * (x * x - 1.0) ** 2), 0.0, x_max, **opts)
    return num / den


def stationary_moment_bessel_ratio(c: float) -> float:
    """``R(c)`` in closed form via modified Bessel functions of the first kind.

    With ``y = c/2`` and ``I_nu`` evaluated at ``y``::

        R(c) = (I_{-3/4} + I_{-1/4} + I_{1/4} + I_{3/4}) / (2 (I_{-1/4} + I_{1/4}))

    Exponentially scaled evaluation (``ive``) keeps the ratio finite for large c.
    """
    _check_c(c)
    y = 0.5 * c
    lower = special.ive(-0.25, y) + special.ive(0.25, y)
    upper = special.ive(-0.75, y) + special.ive(0.75, y)
    return 0.5 * (upper + lower) / lower


def stationary_moment_bessel(c: float) -> float:
    """``P(c) = int z^{1/2} e^{-(z - sqrt c)^2} dz / int z^{-1/2} e^{-(z - sqrt c)^2} dz``.

    Equal to ``sqrt(c) R(c)``; evaluated through :func:`stationary_moment_bessel_ratio`.
    ``P`` tends to ``Gamma(3/4)/Gamma(1/4)`` as ``c -> 0`` and grows like
    ``sqrt(c)`` for large ``c``.
    """
    _check_c(c)
    return math.sqrt(c) * stationary_moment_bessel_ratio(c)


def single_well_moment_bessel(c: float) -> float:
    """``sqrt(c) K_{3/4}(c/2)/(2 K_{1/4}(c/2)) - sqrt(c)/2``.

    This is the ``K``-Bessel expression sometimes quoted for ``P(c)``.  It
    equals the analogous ratio with ``(z + sqrt c)^2`` in the exponent, i.e.
    the single-well density ``exp(-c (x^2 + 1)^2)``, not the double well.
    """
    _check_c(c)
    y = 0.5 * c
    return math.sqrt(c) / 2.0 * (special.kve(0.75, y) / special.kve(0.25, y) - 1.0)


def p_limit_at_zero() -> float:
    return special.gamma(0.75) / special.gamma(0.25)


def grid_weight_sum(s: float, d: int, N: int) -> float:
    """``sum_k (1+|k|^2)^s`` over the square grid ``k_i in [-N/2, N/2)``."""
    k = np.arange(-N // 2, N // 2, dtype=float) ** 2
    if d == 1:
        return float(np.sum((1.0 + k) ** s))
    if d == 2:
        total = 0.0
        for row in np.array_split(k, max(1, N // 256)):
            total += float(np.sum((1.0 + row[:, None] + k[None, :]) ** s))
        return total
    if d == 3:
        ksq = k[:, None, None] + k[None, :, None] + k[None, None, :]
        return float(np.sum((1.0 + ksq) ** s))
    raise UnsupportedDimensionError(f"grid sums support d in (1, 2, 3), got {d}")


def decoupled_norm_scaling(s: float, d: int, N: int, sigma: float) -> NormPrediction:
    """Stationary ``E ||u_N||_s^2`` of the decoupled equation and its ``N -> inf`` limit.

    Sites are i.i.d. with mean zero, so every DFT mode carries the site
    second moment ``R(c)`` and the expectation is exactly
    ``rho^{-d/2} R(c) sum_k (1+|k|^2)^s``.  For ``s > -d/2`` it scales like
    ``N^{2s+d/2}``; for ``s < -d/2`` the weight sum converges and only the
    cell volume ``N^{-d}`` times ``R(c) ~ N^{d/2}`` remains.  The limit is
    zero, finite or infinite as ``s`` is below, at or above ``-d/4``.
    """
    if N < 2:
        raise DomainError("N must be >= 2")
    c = stationary_c(sigma, N, d)
    cell = (2.0 * math.pi / N) ** d
    value = cell * stationary_moment_bessel_ratio(c) * grid_weight_sum(s, d, N)
    critical = -d / 4.0
    if math.isclose(s, critical, rel_tol=0.0, abs_tol=1e-12):
        limit = "finite"
    else:
        limit = "zero" if s < critical else "infinite"
    return NormPrediction(value, limit)


# ---------------------------------------------------------------------------
# prediction curves


@dataclass(frozen=True, eq=False)
class PredictionCurve:
    x: np.ndarray
    values: np.ndarray
    source: str

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if x.shape != v.shape:
            raise DomainError("x and values must have the same length")
        if np.any(v < 0):
            raise DomainError("predicted values must be non-negative")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "values", v)


def mode_energy_curve(kappas, N: int, sigma: float) -> PredictionCurve:
    m = solve_CN(sigma, N).excess
    k = np.asarray(kappas, dtype=float)
    v = np.where(k * k <= N * N, sigma * sigma / (2.0 * (m + k * k)), 0.0)
    return PredictionCurve(k, v, "mode_energy_stationary_ou")


def cn_curve(sigma: float, Ns) -> PredictionCurve:
    Ns = list(Ns)
    return PredictionCurve(np.array(Ns, float), np.array([solve_CN(sigma, n).C_N for n in Ns]), "wick_constant_fixed_point")


def norm_curve(s: float, sigma: float, Ns) -> PredictionCurve:
    Ns = list(Ns)
    return PredictionCurve(np.array(Ns, float), np.array([predicted_norm(s, n, sigma).value for n in Ns]), f"renormalized_norm_s={s:g}")


def heat_series_curve(d: int, sigma: float, t: float, s: float, Ks) -> PredictionCurve:
    Ks = list(Ks)
    vals = [heat_norm_series(d, sigma, t, s, k).partial_sum for k in Ks]
    return PredictionCurve(np.array(Ks, float), np.array(vals), f"heat_norm_series_d={d}_s={s:g}")


theorem2_scaling = decoupled_norm_scaling


__all__ = [
    "EXACT_RADIUS",
    "lattice_shells",
    "disc_sum",
    "ou_covariance",
    "heat_norm_series",
    "SeriesResult",
    "RenormResult",
    "cn_map",
    "solve_CN",
    "leading_CN",
    "asymptotic_CN",
    "predicted_mode_energy",
    "predicted_norm",
    "NormPrediction",
    "stationary_c",
    "moment_scale",
    "stationary_moment_quadrature",
    "stationary_moment_bessel",
    "stationary_moment_bessel_ratio",
    "single_well_moment_bessel",
    "p_limit_at_zero",
    "grid_weight_sum",
    "decoupled_norm_scaling",
    "theorem2_scaling",
    "PredictionCurve",
    "mode_energy_curve",
    "cn_curve",
    "norm_curve",
    "heat_series_curve",
]
