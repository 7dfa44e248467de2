"""Pooling two samples and ranking them in the combined sample."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from rank2s.data.schema import Group, Sample, TiePolicy
from rank2s.errors import TiesPresent


@dataclass(frozen=True)
class RankedPool:
    """Pooled sample in input order (all X, then all Y) with its ranks.

    ``natural_ranks`` are positions 1..N in the ascending pooled order (average
    positions for tied values under the midrank policy); ``standardized_ranks``
    are those divided by N, i.e. the pooled empirical cdf at each observation.
    """

    values: np.ndarray
    is_x: np.ndarray
    natural_ranks: np.ndarray
    standardized_ranks: np.ndarray
    m: int
    n: int
    tie_policy: TiePolicy = TiePolicy.REJECT
    has_ties: bool = False

    @property
    def N(self) -> int:
        return self.m + self.n

    @property
    def labels(self) -> list[Group]:
        return [Group.X if flag else Group.Y for flag in self.is_x]

    @property
    def x_ranks(self) -> np.ndarray:
        return self.natural_ranks[self.is_x]

    @property
    def y_ranks(self) -> np.ndarray:
        return self.natural_ranks[~self.is_x]

    @property
    def x_standardized(self) -> np.ndarray:
        return self.standardized_ranks[self.is_x]

    @property
    def y_standardized(self) -> np.ndarray:
        return self.standardized_ranks[~self.is_x]

    @property
    def distribution_free(self) -> bool:
        """False when midranks were used on tied data."""
        return not self.has_ties


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.setflags(write=False)
    return out


def _duplicate_values(pooled: np.ndarray) -> list[float]:
    ordered = np.sort(pooled)
    dup_mask = np.diff(ordered) == 0
    return np.unique(ordered[1:][dup_mask]).tolist()


def pool_and_rank(
    x: Sample | Sequence[float] | np.ndarray,
    y: Sample | Sequence[float] | np.ndarray,
    tie_policy: TiePolicy | str = TiePolicy.REJECT,
) -> RankedPool:
    x_sample = Sample.of(x)
    y_sample = Sample.of(y)
    policy = TiePolicy(tie_policy)

    pooled = np.concatenate([x_sample.values, y_sample.values])
    m, n = len(x_sample), len(y_sample)
    N = m + n
    duplicates = _duplicate_values(pooled)
    if duplicates and policy is TiePolicy.REJECT:
        raise TiesPresent(duplicates)

    if duplicates:
        natural = rankdata(pooled, method="average")
    else:
        natural = np.empty(N, dtype=np.int64)
        natural[np.argsort(pooled, kind="stable")] = np.arange(1, N + 1)

    is_x = np.zeros(N, dtype=bool)
    is_x[:m] = True
    return RankedPool(
        values=_frozen(pooled),
        is_x=_frozen(is_x),
        natural_ranks=_frozen(natural),
        standardized_ranks=_frozen(np.asarray(natural, dtype=float) / N),
        m=m,
        n=n,
        tie_policy=policy,
        has_ties=bool(duplicates),
    )
