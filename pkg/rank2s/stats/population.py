"""Population value D = integral (F - G)^2 d(tau F + (1 - tau) G)."""
from __future__ import annotations

from typing import Callable

import numpy as np

from rank2s.errors import InvalidParameters, NonMonotoneCdf

CdfFn = Callable[[np.ndarray], np.ndarray]

TAIL_MASS = 1e-8
_BISECTION_STEPS = 200
_MONOTONE_TOL = 1e-12


def _mixture(f_cdf: CdfFn, g_cdf: CdfFn, tau: float) -> CdfFn:
    def _h(x: np.ndarray) -> np.ndarray:
        return tau * np.asarray(f_cdf(x), dtype=float) + (1.0 - tau) * np.asarray(g_cdf(x), dtype=float)

    return _h


def _working_interval(h_cdf: CdfFn) -> tuple[float, float]:
    lo, hi = -1.0, 1.0
    for _ in range(2048):
        if float(h_cdf(np.array([lo]))[0]) <= TAIL_MASS:
            break
        lo *= 2.0
    else:
        raise NonMonotoneCdf("mixture cdf never drops below the lower tail mass")
    for _ in range(2048):
        if float(h_cdf(np.array([hi]))[0]) >= 1.0 - TAIL_MASS:
            break
        hi *= 2.0
    else:
        raise NonMonotoneCdf("mixture cdf never reaches the upper tail mass")
    return lo, hi


def _check_cdf(name: str, cdf: CdfFn, grid: np.ndarray) -> None:
    values = np.asarray(cdf(grid), dtype=float)
    if values.shape != grid.shape or not np.all(np.isfinite(values)):
        raise NonMonotoneCdf(f"{name} must map arrays to finite arrays of the same shape")
    if np.any(values < -_MONOTONE_TOL) or np.any(values > 1.0 + _MONOTONE_TOL):
        raise NonMonotoneCdf(f"{name} leaves [0, 1] on the working interval")
    if np.any(np.diff(values) < -_MONOTONE_TOL):
        raise NonMonotoneCdf(f"{name} is decreasing somewhere on the working interval")


def mixture_quantiles(h_cdf: CdfFn, probs: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Vectorized bisection for inf{x: H(x) >= p} inside [lo, hi]."""
    left = np.full(probs.shape, lo, dtype=float)
    right = np.full(probs.shape, hi, dtype=float)
    for _ in range(_BISECTION_STEPS):
        mid = 0.5 * (left + right)
        below = np.asarray(h_cdf(mid), dtype=float) < probs
        left = np.where(below, mid, left)
        right = np.where(below, right, mid)
        if np.all(right - left <= 1e-15 * np.maximum(1.0, np.abs(right))):
            break
    return right


def population_D(
    f_cdf: CdfFn,
    g_cdf: CdfFn,
    tau: float = 0.5,
    grid_size: int = 10_000,
) -> float:
    """Midpoint rule on the tau-mixture quantile grid.

    With u = H(x) the integral becomes integral_0^1 (F - G)^2(H^{-1}(u)) du, so
    unbounded supports need no truncation beyond the 1e-8 tail quantiles.
    """
    if not 0.0 <= tau <= 1.0:
        raise InvalidParameters(f"tau must lie in [0, 1], got {tau}")
    if grid_size < 100:
        raise InvalidParameters(f"grid_size must be >= 100, got {grid_size}")

    h_cdf = _mixture(f_cdf, g_cdf, tau)
    lo, hi = _working_interval(h_cdf)
    check_grid = np.linspace(lo, hi, 4097)
    _check_cdf("f_cdf", f_cdf, check_grid)
    _check_cdf("g_cdf", g_cdf, check_grid)

    probs = (np.arange(grid_size) + 0.5) / grid_size
    x = mixture_quantiles(h_cdf, probs, lo, hi)
    gap = np.asarray(f_cdf(x), dtype=float) - np.asarray(g_cdf(x), dtype=float)
    return float(max(0.0, np.mean(gap * gap)))
