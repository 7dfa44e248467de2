"""Univariate two-sample statistics on a :class:`RankedPool`.

All rank-distance statistics use the standardized ranks R_i/N. Within-group
averages run over all m^2 (n^2) ordered pairs, zero diagonal included.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import kstwobign, norm

from rank2s.data.ranking import RankedPool
from rank2s.data.schema import PointSample, Sample, StatisticKind, require_same_dimension
from rank2s.errors import UnbalancedSamples, UnsupportedStatistic


def _abs_diff_sum(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(a[:, None] - b[None, :]).sum())


def _self_abs_diff_sum(values: np.ndarray) -> float:
    # sum_{i,j} |v_i - v_j| from the sorted order: 2 * sum_k (2k - n - 1) v_(k)
    ordered = np.sort(values)
    n = ordered.size
    weights = 2.0 * np.arange(1, n + 1) - n - 1
    return float(2.0 * np.dot(weights, ordered))


def _combine(m: int, n: int, s_xy: float, s_xx: float, s_yy: float) -> float:
    N = m + n
    return (m * n / N) * (s_xy / (m * n) - s_xx / (2.0 * m * m) - s_yy / (2.0 * n * n))


def statistic_T_pairwise(pool: RankedPool) -> float:
    """Direct O(mn + m^2 + n^2) evaluation of the rank statistic T."""
    rx, ry = pool.x_standardized, pool.y_standardized
    return _combine(
        pool.m,
        pool.n,
        _abs_diff_sum(rx, ry),
        _abs_diff_sum(rx, rx),
        _abs_diff_sum(ry, ry),
    )


def statistic_T(pool: RankedPool) -> float:
    """Between-group minus within-group mean standardized rank distance, scaled by mn/N.

    Evaluated in O(N log N) through sorted-order pair sums; agrees with
    :func:`statistic_T_pairwise` up to floating point rounding.
    """
    rx, ry = pool.x_standardized, pool.y_standardized
    s_xx = _self_abs_diff_sum(rx)
    s_yy = _self_abs_diff_sum(ry)
    s_all = _self_abs_diff_sum(pool.standardized_ranks)
    s_xy = 0.5 * (s_all - s_xx - s_yy)
    return _combine(pool.m, pool.n, s_xy, s_xx, s_yy)


def statistic_Tprime(pool: RankedPool) -> float:
    """Mean between-group standardized rank distance; balanced designs only."""
    if pool.m != pool.n:
        raise UnbalancedSamples(f"T' needs m == n, got m={pool.m}, n={pool.n}")
    return _abs_diff_sum(pool.x_standardized, pool.y_standardized) / (pool.m * pool.n)


def tprime_to_T(tprime: float, n: int) -> float:
    return n * tprime - (4.0 * n * n - 1.0) / (12.0 * n)


def statistic_dhat(pool: RankedPool) -> float:
    return pool.N / (pool.m * pool.n) * statistic_T(pool)


def _ecdf_gap(pool: RankedPool) -> np.ndarray:
    """F_m - G_n evaluated (right-continuously) at every pooled observation."""
    x_sorted = np.sort(pool.values[pool.is_x])
    y_sorted = np.sort(pool.values[~pool.is_x])
    f_m = np.searchsorted(x_sorted, pool.values, side="right") / pool.m
    g_n = np.searchsorted(y_sorted, pool.values, side="right") / pool.n
    return f_m - g_n


def statistic_cvm(pool: RankedPool) -> float:
    """Classical two-sample Cramer-von Mises criterion (mn/N) * integral (F_m - G_n)^2 dH_N."""
    gap = _ecdf_gap(pool)
    return (pool.m * pool.n / pool.N) * float(np.sum(gap * gap)) / pool.N


def statistic_ks(pool: RankedPool) -> float:
    return float(np.max(np.abs(_ecdf_gap(pool))))


def statistic_wilcoxon(pool: RankedPool) -> float:
    """Sum of the natural ranks of the X group."""
    return float(np.sum(pool.x_ranks))


def wilcoxon_null_moments(m: int, n: int) -> tuple[float, float]:
    N = m + n
    return m * (N + 1) / 2.0, m * n * (N + 1) / 12.0


def standardized_wilcoxon(pool: RankedPool) -> float:
    mean, var = wilcoxon_null_moments(pool.m, pool.n)
    return (statistic_wilcoxon(pool) - mean) / np.sqrt(var)


def statistic_mood(pool: RankedPool) -> float:
    centre = (pool.N + 1) / 2.0
    return float(np.sum((pool.x_ranks - centre) ** 2))


def mood_null_moments(m: int, n: int) -> tuple[float, float]:
    N = m + n
    return m * (N * N - 1) / 12.0, m * n * (N + 1) * (N * N - 4) / 180.0


def standardized_mood(pool: RankedPool) -> float:
    mean, var = mood_null_moments(pool.m, pool.n)
    return (statistic_mood(pool) - mean) / np.sqrt(var)


def statistic_energy(
    x_points: PointSample | Sample | Sequence[Sequence[float]] | np.ndarray,
    y_points: PointSample | Sample | Sequence[Sequence[float]] | np.ndarray,
) -> float:
    """Energy statistic on raw observations with Euclidean distances."""
    x = PointSample.of(x_points)
    y = PointSample.of(y_points)
    require_same_dimension(x, y)
    return _combine(
        len(x),
        len(y),
        float(cdist(x.points, y.points).sum()),
        float(cdist(x.points, x.points).sum()),
        float(cdist(y.points, y.points).sum()),
    )


def normal_two_sided_pvalue(z: float) -> float:
    p = 2.0 * norm.sf(abs(z))
    return float(min(1.0, max(p, np.finfo(float).tiny)))


def ks_asymptotic_pvalue(d_stat: float, m: int, n: int) -> float:
    """Limiting Kolmogorov distribution of sqrt(mn/N) * D."""
    scaled = np.sqrt(m * n / (m + n)) * d_stat
    return float(min(1.0, max(kstwobign.sf(scaled), np.finfo(float).tiny)))


RANK_STATISTICS: dict[StatisticKind, Callable[[RankedPool], float]] = {
    StatisticKind.T: statistic_T,
    StatisticKind.TPRIME: statistic_Tprime,
    StatisticKind.DHAT: statistic_dhat,
    StatisticKind.CVM: statistic_cvm,
    StatisticKind.KS: statistic_ks,
    StatisticKind.WILCOXON: statistic_wilcoxon,
    StatisticKind.MOOD: statistic_mood,
}


def rank_statistic(kind: StatisticKind | str) -> Callable[[RankedPool], float]:
    key = StatisticKind.parse(kind)
    fn = RANK_STATISTICS.get(key)
    if fn is None:
        raise UnsupportedStatistic(f"{key.value} is not a univariate rank statistic")
    return fn


def compute_statistic(kind: StatisticKind | str, pool: RankedPool) -> float:
    key = StatisticKind.parse(kind)
    if key is StatisticKind.ENERGY:
        return statistic_energy(pool.values[pool.is_x], pool.values[~pool.is_x])
    return rank_statistic(key)(pool)
