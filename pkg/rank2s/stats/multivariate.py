"""Spatial ranks with respect to the pooled sample and the spatial rank statistic T_M."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from rank2s.data.schema import PointSample, StatisticKind, TestOutcome, require_same_dimension
from rank2s.errors import DimensionMismatch, EmptySample
from rank2s.null.engines import permutation_pvalue_from_distances
from rank2s.stats.distance import energy_combination, pooled_distance_matrix


def _unit_vector_mean(queries: np.ndarray, pool_points: np.ndarray) -> np.ndarray:
    diff = queries[:, None, :] - pool_points[None, :, :]
    norms = np.linalg.norm(diff, axis=2)
    # a pool point equal to the query contributes the zero vector
    safe = np.where(norms > 0.0, norms, 1.0)
    units = np.where((norms > 0.0)[:, :, None], diff / safe[:, :, None], 0.0)
    return units.mean(axis=1)


def spatial_rank(query: Sequence[float] | np.ndarray, pool_points: Sequence[Sequence[float]] | np.ndarray) -> np.ndarray:
    """Average unit vector pointing from the pooled points towards ``query``."""
    q = np.asarray(query, dtype=float).reshape(-1)
    pool = PointSample.of(pool_points).points
    if q.size != pool.shape[1]:
        raise DimensionMismatch(f"Query has dimension {q.size}, pool has dimension {pool.shape[1]}")
    return _unit_vector_mean(q[None, :], pool)[0]


def spatial_ranks(points: np.ndarray, pool_points: np.ndarray | None = None, *, block_size: int = 256) -> np.ndarray:
    """Spatial ranks of every row of ``points`` with respect to ``pool_points`` (default: the points themselves)."""
    queries = np.asarray(points, dtype=float)
    if queries.ndim == 1:
        queries = queries.reshape(-1, 1)
    pool = queries if pool_points is None else np.asarray(pool_points, dtype=float)
    if pool.ndim == 1:
        pool = pool.reshape(-1, 1)
    if pool.shape[0] == 0:
        raise EmptySample("Pool must contain at least one point")
    if queries.shape[1] != pool.shape[1]:
        raise DimensionMismatch(f"Queries have dimension {queries.shape[1]}, pool has dimension {pool.shape[1]}")
    blocks = [
        _unit_vector_mean(queries[start : start + block_size], pool)
        for start in range(0, queries.shape[0], block_size)
    ]
    return np.vstack(blocks) if blocks else np.zeros((0, pool.shape[1]))


def pooled_rank_distances(x: PointSample, y: PointSample) -> tuple[np.ndarray, np.ndarray]:
    """Distance matrix between the spatial ranks of the pooled points, plus the X mask.

    Ranks depend on the pooled configuration only, so every relabelling of the
    pooled sample reuses this matrix.
    """
    require_same_dimension(x, y)
    pooled = np.vstack([x.points, y.points])
    ranks = spatial_ranks(pooled)
    is_x = np.zeros(pooled.shape[0], dtype=bool)
    is_x[: len(x)] = True
    return pooled_distance_matrix(ranks), is_x


def statistic_TM(
    x: PointSample | Sequence[Sequence[float]] | np.ndarray,
    y: PointSample | Sequence[Sequence[float]] | np.ndarray,
) -> float:
    xs, ys = PointSample.of(x), PointSample.of(y)
    dist, is_x = pooled_rank_distances(xs, ys)
    return energy_combination(dist, is_x)


def permutation_pvalue_TM(
    x: PointSample | Sequence[Sequence[float]] | np.ndarray,
    y: PointSample | Sequence[Sequence[float]] | np.ndarray,
    B: int = 499,
    seed: int = 0,
    *,
    workers: int = 1,
) -> TestOutcome:
    """Permutation test of T_M; p = (1 + #{T_M^(b) >= T_M^obs}) / (B + 1)."""
    xs, ys = PointSample.of(x), PointSample.of(y)
    dist, is_x = pooled_rank_distances(xs, ys)
    observed, p_value, _ = permutation_pvalue_from_distances(dist, is_x, B, seed, workers=workers)
    return TestOutcome(
        statistic_value=observed,
        p_value=p_value,
        method=StatisticKind.TM,
        null_model=f"permutation:{B}",
        m=len(xs),
        n=len(ys),
        seed=seed,
        metadata={"dimension": xs.d},
    )
