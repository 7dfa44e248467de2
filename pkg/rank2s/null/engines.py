"""Exact enumeration, Monte-Carlo combination sampling and permutation engines.

Rank statistics are evaluated on lattice keys: with a_k the number of X ranks
among 1..k, the rank distance statistic satisfies

    T = sum_k (N a_k - m k)^2 / (m n N^2)

(the same sum is the Cramer-von Mises criterion for tie-free data), so every
engine works with exact integers and converts to floats only at the end.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from itertools import chain, combinations, islice
from math import comb
from typing import Callable, Sequence

import numpy as np

from rank2s.data.schema import PointSample, Sample, StatisticKind, TestOutcome
from rank2s.errors import EnumerationTooLarge, InvalidParameters, UnsupportedStatistic
from rank2s.null.distribution import TIE_RTOL, NullDistribution, NullKind
from rank2s.stats.distance import energy_combination_batch
from rank2s.utils.parallel import chunk_ranges, parallel_map
from rank2s.utils.run_metadata import LogFn, format_duration, null_log
from rank2s.utils.seed import STREAM_MC_NULL, STREAM_PERMUTATION, derive_rng

DEFAULT_ENUMERATION_CAP = 20_000_000
MIN_MC_REPS = 1000
MIN_PERMUTATIONS = 99
ENUMERATION_BATCH = 200_000
MC_BATCH = 50_000
PERMUTATION_CHUNK = 64


@dataclass(frozen=True)
class LatticeKernel:
    """Maps (B, m) arrays of X natural ranks to integer keys; value = to_value(keys)."""

    keys: Callable[[np.ndarray], np.ndarray]
    to_value: Callable[[np.ndarray], np.ndarray]
    scale: int | None


def _cumulative_x_counts(x_ranks: np.ndarray, N: int) -> np.ndarray:
    rows = np.arange(x_ranks.shape[0])[:, None]
    indicator = np.zeros((x_ranks.shape[0], N), dtype=np.int64)
    indicator[rows, x_ranks - 1] = 1
    return np.cumsum(indicator, axis=1)


def lattice_kernel(statistic: StatisticKind | str, m: int, n: int) -> LatticeKernel:
    kind = StatisticKind.parse(statistic)
    N = m + n
    k = np.arange(1, N + 1, dtype=np.int64)

    def _ecdf_gaps(x_ranks: np.ndarray) -> np.ndarray:
        # N a_k - m k = mn (F_m - G_n) at the k-th pooled order statistic
        return N * _cumulative_x_counts(x_ranks, N) - m * k

    if kind in {StatisticKind.T, StatisticKind.CVM}:
        scale = m * n * N * N
        return LatticeKernel(
            keys=lambda r: np.sum(_ecdf_gaps(r) ** 2, axis=1),
            to_value=lambda keys: keys / float(scale),
            scale=scale,
        )
    if kind is StatisticKind.DHAT:
        scale = m * m * n * n * N
        return LatticeKernel(
            keys=lambda r: np.sum(_ecdf_gaps(r) ** 2, axis=1),
            to_value=lambda keys: keys / float(scale),
            scale=scale,
        )
    if kind is StatisticKind.TPRIME:
        if m != n:
            raise UnsupportedStatistic(f"T' needs m == n, got m={m}, n={n}")
        t_scale = m * n * N * N
        offset = (4.0 * n * n - 1.0) / (12.0 * n)
        return LatticeKernel(
            keys=lambda r: np.sum(_ecdf_gaps(r) ** 2, axis=1),
            to_value=lambda keys: (keys / float(t_scale) + offset) / n,
            scale=None,
        )
    if kind is StatisticKind.KS:
        scale = m * n
        return LatticeKernel(
            keys=lambda r: np.max(np.abs(_ecdf_gaps(r)), axis=1),
            to_value=lambda keys: keys / float(scale),
            scale=scale,
        )
    if kind is StatisticKind.WILCOXON:
        return LatticeKernel(
            keys=lambda r: np.sum(r, axis=1),
            to_value=lambda keys: keys.astype(float),
            scale=1,
        )
    if kind is StatisticKind.MOOD:
        # (R - (N+1)/2)^2 = (2R - N - 1)^2 / 4
        return LatticeKernel(
            keys=lambda r: np.sum((2 * r - N - 1) ** 2, axis=1),
            to_value=lambda keys: keys / 4.0,
            scale=4,
        )
    raise UnsupportedStatistic(f"{kind.value} has no rank-only null distribution")


def _histogram(keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.unique(keys, return_counts=True)


def _merge_histograms(parts: Sequence[tuple[np.ndarray, np.ndarray]]) -> tuple[np.ndarray, np.ndarray]:
    all_keys = np.concatenate([p[0] for p in parts])
    all_counts = np.concatenate([p[1] for p in parts])
    support, inverse = np.unique(all_keys, return_inverse=True)
    counts = np.zeros(support.size, dtype=np.int64)
    np.add.at(counts, inverse, all_counts)
    return support, counts


def _build_null(
    kind: NullKind,
    statistic: StatisticKind,
    m: int,
    n: int,
    kernel: LatticeKernel,
    support: np.ndarray,
    counts: np.ndarray,
    seed: int | None,
) -> NullDistribution:
    values = kernel.to_value(support)
    order = np.argsort(values, kind="stable")
    return NullDistribution(
        kind=kind,
        statistic=statistic,
        m=m,
        n=n,
        values=values[order],
        counts=counts[order],
        total=int(counts.sum()),
        seed=seed,
        keys=support[order] if kernel.scale is not None else None,
        scale=kernel.scale,
    )


def _validate_sizes(m: int, n: int) -> None:
    if m < 1 or n < 1:
        raise InvalidParameters(f"Sample sizes must be >= 1, got m={m}, n={n}")


def exact_null(
    m: int,
    n: int,
    statistic: StatisticKind | str = StatisticKind.T,
    *,
    cap: int = DEFAULT_ENUMERATION_CAP,
    workers: int = 1,
    log: LogFn | None = None,
) -> NullDistribution:
    """Evaluate ``statistic`` on every assignment of ranks 1..N to the X group.

    Assignments are split by their smallest X rank; each prefix is enumerated
    independently and the partial histograms are summed.
    """
    _validate_sizes(m, n)
    kind = StatisticKind.parse(statistic)
    N = m + n
    total = comb(N, m)
    if total > cap:
        raise EnumerationTooLarge(total, cap)
    kernel = lattice_kernel(kind, m, n)
    log = log or null_log
    started = time.time()

    def _enumerate_prefix(first: int) -> tuple[np.ndarray, np.ndarray]:
        rest = combinations(range(first + 1, N), m - 1)
        parts: list[tuple[np.ndarray, np.ndarray]] = []
        while True:
            batch = list(islice(rest, ENUMERATION_BATCH))
            if not batch:
                break
            flat = np.fromiter(chain.from_iterable(batch), dtype=np.int64, count=len(batch) * (m - 1))
            tail = flat.reshape(len(batch), m - 1)
            x_positions = np.hstack([np.full((len(batch), 1), first, dtype=np.int64), tail])
            parts.append(_histogram(kernel.keys(x_positions + 1)))
        return _merge_histograms(parts)

    parts = parallel_map(_enumerate_prefix, range(0, n + 1), workers)
    support, counts = _merge_histograms(parts)
    log(f"exact null {kind.value} m={m} n={n}: {total} assignments in {format_duration(time.time() - started)}")
    return _build_null(NullKind.EXACT, kind, m, n, kernel, support, counts, seed=None)


def random_subsets(rng: np.random.Generator, N: int, m: int, size: int) -> np.ndarray:
    """``size`` uniform m-subsets of {0..N-1} via a partial Fisher-Yates shuffle per row."""
    arr = np.tile(np.arange(N, dtype=np.int64), (size, 1))
    rows = np.arange(size)
    for i in range(m):
        j = rng.integers(i, N, size=size)
        picked = arr[rows, j].copy()
        arr[rows, j] = arr[rows, i]
        arr[rows, i] = picked
    return arr[:, :m]


def mc_null(
    m: int,
    n: int,
    statistic: StatisticKind | str = StatisticKind.T,
    reps: int = 100_000,
    seed: int = 0,
    *,
    workers: int = 1,
    log: LogFn | None = None,
    progress_every: int = 0,
) -> NullDistribution:
    """Null law estimated from ``reps`` uniformly random X rank subsets.

    Replicates are drawn in fixed batches, each from its own (seed, batch)
    stream, so the result is identical for any worker count.
    """
    _validate_sizes(m, n)
    if reps < MIN_MC_REPS:
        raise InvalidParameters(f"reps must be >= {MIN_MC_REPS}, got {reps}")
    kind = StatisticKind.parse(statistic)
    N = m + n
    kernel = lattice_kernel(kind, m, n)
    log = log or null_log
    started = time.time()
    batches = chunk_ranges(reps, MC_BATCH)

    def _run_batch(index: int) -> tuple[np.ndarray, np.ndarray]:
        rng = derive_rng(seed, STREAM_MC_NULL, index)
        size = len(batches[index])
        x_positions = random_subsets(rng, N, m, size)
        if progress_every and (index + 1) % progress_every == 0:
            log(f"mc null {kind.value}: batch {index + 1}/{len(batches)}")
        return _histogram(kernel.keys(x_positions + 1))

    parts = parallel_map(_run_batch, range(len(batches)), workers)
    support, counts = _merge_histograms(parts)
    log(f"mc null {kind.value} m={m} n={n}: {reps} replicates in {format_duration(time.time() - started)}")
    return _build_null(NullKind.MONTE_CARLO, kind, m, n, kernel, support, counts, seed=seed)


# ---------------------------------------------------------------------------
# permutation engines
# ---------------------------------------------------------------------------


def permutation_masks(N: int, m: int, replicates: range, seed: int) -> np.ndarray:
    """X-membership masks for the given replicate indices; replicate b uses stream (seed, b)."""
    masks = np.zeros((len(replicates), N), dtype=bool)
    for row, b in enumerate(replicates):
        rng = derive_rng(seed, STREAM_PERMUTATION, b)
        masks[row, rng.permutation(N)[:m]] = True
    return masks


def all_assignment_masks(N: int, m: int) -> np.ndarray:
    total = comb(N, m)
    flat = np.fromiter(chain.from_iterable(combinations(range(N), m)), dtype=np.int64, count=total * m)
    masks = np.zeros((total, N), dtype=bool)
    masks[np.arange(total)[:, None], flat.reshape(total, m)] = True
    return masks


def _exceedances(observed: float, replicate_values: np.ndarray) -> int:
    slack = TIE_RTOL * max(1.0, abs(observed))
    return int(np.count_nonzero(replicate_values >= observed - slack))


def add_one_pvalue(observed: float, replicate_values: np.ndarray) -> float:
    values = np.asarray(replicate_values, dtype=float)
    return (1.0 + _exceedances(observed, values)) / (values.size + 1.0)


def _check_permutations(B: int) -> None:
    if B < MIN_PERMUTATIONS:
        raise InvalidParameters(f"B must be >= {MIN_PERMUTATIONS}, got {B}")


def _pooled(x: Sample | PointSample, y: Sample | PointSample) -> tuple[np.ndarray, int, int]:
    if isinstance(x, PointSample) or isinstance(y, PointSample):
        xs, ys = PointSample.of(x), PointSample.of(y)
        return np.vstack([xs.points, ys.points]), len(xs), len(ys)
    xs, ys = Sample.of(x), Sample.of(y)
    return np.concatenate([xs.values, ys.values]), len(xs), len(ys)


def permutation_test(
    stat_fn: Callable[[np.ndarray, np.ndarray], float],
    x: Sample | PointSample | Sequence[float] | np.ndarray,
    y: Sample | PointSample | Sequence[float] | np.ndarray,
    B: int = 999,
    seed: int = 0,
    *,
    method: StatisticKind | str = StatisticKind.ENERGY,
    exhaustive: bool | None = None,
    workers: int = 1,
) -> TestOutcome:
    """Generic pooled-relabelling test of ``stat_fn(x_values, y_values)`` (large values reject).

    With ``exhaustive`` (default: when C(N, m) <= B) every assignment is
    evaluated and p = #{S >= observed} / C(N, m), the exact tail. Otherwise
    p = (1 + #{S_b >= observed}) / (B + 1) over B random relabellings.
    """
    _check_permutations(B)
    x_in = x if isinstance(x, (Sample, PointSample)) else Sample.of(x)
    y_in = y if isinstance(y, (Sample, PointSample)) else Sample.of(y)
    pooled, m, n = _pooled(x_in, y_in)
    N = m + n
    observed = float(stat_fn(pooled[:m], pooled[m:]))
    use_all = comb(N, m) <= B if exhaustive is None else exhaustive

    def _evaluate(masks: np.ndarray) -> np.ndarray:
        return np.asarray([stat_fn(pooled[mask], pooled[~mask]) for mask in masks], dtype=float)

    if use_all:
        replicate_values = _evaluate(all_assignment_masks(N, m))
        p_value = max(_exceedances(observed, replicate_values), 1) / float(replicate_values.size)
        null_model = f"permutation:exhaustive:{replicate_values.size}"
    else:
        chunks = chunk_ranges(B, PERMUTATION_CHUNK)
        parts = parallel_map(lambda r: _evaluate(permutation_masks(N, m, r, seed)), chunks, workers)
        replicate_values = np.concatenate(parts)
        p_value = add_one_pvalue(observed, replicate_values)
        null_model = f"permutation:{B}"
    return TestOutcome(
        statistic_value=observed,
        p_value=p_value,
        method=method,
        null_model=null_model,
        m=m,
        n=n,
        seed=None if use_all else seed,
    )


def permutation_pvalue_from_distances(
    dist: np.ndarray,
    is_x: np.ndarray,
    B: int,
    seed: int,
    *,
    workers: int = 1,
) -> tuple[float, float, np.ndarray]:
    """Permutation test for between-minus-within statistics of a fixed pooled distance matrix.

    Returns (observed, p_value, replicate_values).
    """
    _check_permutations(B)
    mask = np.asarray(is_x, dtype=bool)
    N, m = mask.size, int(mask.sum())
    observed = float(energy_combination_batch(dist, mask[None, :])[0])
    chunks = chunk_ranges(B, PERMUTATION_CHUNK)
    parts = parallel_map(
        lambda r: energy_combination_batch(dist, permutation_masks(N, m, r, seed)),
        chunks,
        workers,
    )
    replicate_values = np.concatenate(parts)
    return observed, add_one_pvalue(observed, replicate_values), replicate_values
