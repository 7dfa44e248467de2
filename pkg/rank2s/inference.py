"""Statistic + null-model pairing used by the CLI and the power harness.

A :class:`TwoSampleTest` owns the null laws it needs (one per (m, n)), builds
them lazily and optionally persists them under a cache directory.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from math import comb
from pathlib import Path
from typing import Any

import numpy as np

from rank2s.data.ranking import pool_and_rank
from rank2s.data.schema import PointSample, Sample, StatisticKind, TestOutcome, TiePolicy
from rank2s.errors import InvalidParameters, UnsupportedStatistic
from rank2s.null.asymptotic import DEFAULT_MIXTURE_ORDER, MixtureTail, standardized_T
from rank2s.null.distribution import NullDistribution, NullKind, null_cache_name, pvalue_from_null
from rank2s.null.engines import (
    DEFAULT_ENUMERATION_CAP,
    exact_null,
    mc_null,
    permutation_pvalue_from_distances,
    permutation_test,
)
from rank2s.stats.distance import pooled_distance_matrix
from rank2s.stats.multivariate import permutation_pvalue_TM
from rank2s.stats.univariate import (
    compute_statistic,
    ks_asymptotic_pvalue,
    normal_two_sided_pvalue,
    standardized_mood,
    standardized_wilcoxon,
)
from rank2s.utils.run_metadata import LogFn, null_log

MIXTURE_TAIL_SAMPLES = 1_000_000


class NullModelKind(str, Enum):
    EXACT = "exact"
    MC = "mc"
    ASYMPTOTIC = "asymptotic"
    NORMAL = "normal"
    KS = "ks"
    PERMUTATION = "permutation"


_DEFAULT_PARAMS: dict[NullModelKind, int | None] = {
    NullModelKind.EXACT: None,
    NullModelKind.MC: 100_000,
    NullModelKind.ASYMPTOTIC: DEFAULT_MIXTURE_ORDER,
    NullModelKind.NORMAL: None,
    NullModelKind.KS: None,
    NullModelKind.PERMUTATION: 499,
}

_LATTICE_STATISTICS = {
    StatisticKind.T,
    StatisticKind.TPRIME,
    StatisticKind.DHAT,
    StatisticKind.CVM,
    StatisticKind.KS,
    StatisticKind.WILCOXON,
    StatisticKind.MOOD,
}

_COMPATIBLE: dict[NullModelKind, set[StatisticKind]] = {
    NullModelKind.EXACT: _LATTICE_STATISTICS,
    NullModelKind.MC: _LATTICE_STATISTICS,
    NullModelKind.ASYMPTOTIC: {StatisticKind.T, StatisticKind.CVM},
    NullModelKind.NORMAL: {StatisticKind.WILCOXON, StatisticKind.MOOD},
    NullModelKind.KS: {StatisticKind.KS},
    NullModelKind.PERMUTATION: set(StatisticKind),
}

DEFAULT_NULL_MODELS: dict[StatisticKind, str] = {
    StatisticKind.T: "mc",
    StatisticKind.TPRIME: "mc",
    StatisticKind.DHAT: "mc",
    StatisticKind.CVM: "mc",
    StatisticKind.KS: "ks",
    StatisticKind.WILCOXON: "normal",
    StatisticKind.MOOD: "normal",
    StatisticKind.ENERGY: "permutation",
    StatisticKind.TM: "permutation",
}


@dataclass(frozen=True)
class NullModel:
    """``kind`` plus its size parameter: reps (mc), d (asymptotic) or B (permutation)."""

    kind: NullModelKind
    param: int | None = None

    def __post_init__(self) -> None:
        if self.param is None:
            object.__setattr__(self, "param", _DEFAULT_PARAMS[self.kind])
        elif _DEFAULT_PARAMS[self.kind] is None:
            raise InvalidParameters(f"null model {self.kind.value} takes no parameter")
        elif int(self.param) < 1:
            raise InvalidParameters(f"null model parameter must be >= 1, got {self.param}")

    @classmethod
    def parse(cls, raw: "str | NullModel") -> "NullModel":
        if isinstance(raw, cls):
            return raw
        text = str(raw).strip().lower()
        head, _, tail = text.partition(":")
        try:
            kind = NullModelKind(head)
        except ValueError:
            valid = sorted(k.value for k in NullModelKind)
            raise InvalidParameters(f"Unknown null model: {raw}. Valid: {valid}") from None
        if not tail:
            return cls(kind)
        try:
            return cls(kind, int(tail))
        except ValueError:
            raise InvalidParameters(f"null model parameter must be an integer: {raw}") from None

    @property
    def label(self) -> str:
        if _DEFAULT_PARAMS[self.kind] is None:
            return self.kind.value
        return f"{self.kind.value}:{self.param}"

    def check(self, statistic: StatisticKind) -> None:
        if statistic not in _COMPATIBLE[self.kind]:
            raise UnsupportedStatistic(f"{statistic.value} cannot be calibrated with the {self.kind.value} null model")


def default_null_model(statistic: StatisticKind | str) -> NullModel:
    return NullModel.parse(DEFAULT_NULL_MODELS[StatisticKind.parse(statistic)])


def obtain_null(
    statistic: StatisticKind | str,
    m: int,
    n: int,
    model: NullModel,
    *,
    seed: int = 0,
    cache_dir: str | Path | None = None,
    workers: int = 1,
    cap: int = DEFAULT_ENUMERATION_CAP,
    log: LogFn | None = None,
) -> tuple[NullDistribution, bool]:
    """Exact or Monte-Carlo null law of ``statistic``; returns (null, cache_hit)."""
    kind = StatisticKind.parse(statistic)
    model.check(kind)
    if model.kind is NullModelKind.EXACT:
        null_kind, total, null_seed = NullKind.EXACT, comb(m + n, m), None
    elif model.kind is NullModelKind.MC:
        null_kind, total, null_seed = NullKind.MONTE_CARLO, int(model.param), seed
    else:
        raise InvalidParameters(f"{model.label} has no tabulated null distribution")

    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / null_cache_name(kind, null_kind, m, n, total, null_seed)
        if path.exists():
            return NullDistribution.load_csv(path), True

    if null_kind is NullKind.EXACT:
        null = exact_null(m, n, kind, cap=cap, workers=workers, log=log)
    else:
        null = mc_null(m, n, kind, reps=total, seed=seed, workers=workers, log=log)
    if path is not None:
        null.save_csv(path)
    return null, False


@dataclass
class TwoSampleTest:
    """One statistic calibrated by one null model; large statistic values reject."""

    statistic: StatisticKind
    null_model: NullModel
    tie_policy: TiePolicy = TiePolicy.REJECT
    seed: int = 0
    cache_dir: Path | None = None
    workers: int = 1
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP
    mixture_samples: int = MIXTURE_TAIL_SAMPLES
    label: str | None = None
    log: LogFn = null_log
    _nulls: dict[tuple[int, int], tuple[NullDistribution, bool]] = field(default_factory=dict, repr=False)
    _mixture_tail: MixtureTail | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.statistic = StatisticKind.parse(self.statistic)
        self.null_model = NullModel.parse(self.null_model)
        self.tie_policy = TiePolicy(self.tie_policy)
        self.null_model.check(self.statistic)
        if self.cache_dir is not None:
            self.cache_dir = Path(self.cache_dir)

    @property
    def name(self) -> str:
        return self.label or self.statistic.value

    def null_for(self, m: int, n: int) -> tuple[NullDistribution, bool]:
        key = (m, n)
        if key not in self._nulls:
            self._nulls[key] = obtain_null(
                self.statistic,
                m,
                n,
                self.null_model,
                seed=self.seed,
                cache_dir=self.cache_dir,
                workers=self.workers,
                cap=self.enumeration_cap,
                log=self.log,
            )
        return self._nulls[key]

    def mixture_tail(self) -> MixtureTail:
        if self._mixture_tail is None:
            self._mixture_tail = MixtureTail.build(int(self.null_model.param), self.mixture_samples, self.seed)
        return self._mixture_tail

    def _permutation(self, x: Sample | PointSample, y: Sample | PointSample, seed: int) -> TestOutcome:
        B = int(self.null_model.param)
        if self.statistic is StatisticKind.TM:
            return permutation_pvalue_TM(x, y, B=B, seed=seed, workers=self.workers)
        if self.statistic is StatisticKind.ENERGY:
            xs, ys = PointSample.of(x), PointSample.of(y)
            dist = pooled_distance_matrix(np.vstack([xs.points, ys.points]))
            is_x = np.arange(len(xs) + len(ys)) < len(xs)
            observed, p_value, _ = permutation_pvalue_from_distances(dist, is_x, B, seed, workers=self.workers)
            return TestOutcome(
                statistic_value=observed,
                p_value=p_value,
                method=StatisticKind.ENERGY,
                null_model=f"permutation:{B}",
                m=len(xs),
                n=len(ys),
                seed=seed,
                metadata={"dimension": xs.d},
            )
        kind, policy = self.statistic, self.tie_policy
        return permutation_test(
            lambda a, b: compute_statistic(kind, pool_and_rank(a, b, policy)),
            _univariate(x, kind),
            _univariate(y, kind),
            B=B,
            seed=seed,
            method=kind,
            workers=self.workers,
        )

    def run(self, x: Any, y: Any, *, seed: int | None = None) -> TestOutcome:
        """Statistic value and p-value for one pair of samples.

        ``seed`` overrides the permutation seed only; tabulated nulls always use
        the test's own seed so they can be shared across calls.
        """
        run_seed = self.seed if seed is None else seed
        if self.null_model.kind is NullModelKind.PERMUTATION:
            return self._permutation(x, y, run_seed)
        pool = pool_and_rank(_univariate(x, self.statistic), _univariate(y, self.statistic), self.tie_policy)
        observed = compute_statistic(self.statistic, pool)
        metadata: dict[str, Any] = {"distribution_free": pool.distribution_free}
        kind = self.null_model.kind
        outcome_seed: int | None = None
        if kind in {NullModelKind.EXACT, NullModelKind.MC}:
            null, cache_hit = self.null_for(pool.m, pool.n)
            p_value = pvalue_from_null(observed, null)
            metadata["cache_hit"] = cache_hit
            outcome_seed = null.seed
        elif kind is NullModelKind.ASYMPTOTIC:
            z = standardized_T(observed, pool.m, pool.n)
            p_value = self.mixture_tail()(z)
            metadata["standardized"] = z
            outcome_seed = self.seed
        elif kind is NullModelKind.NORMAL:
            z = standardized_wilcoxon(pool) if self.statistic is StatisticKind.WILCOXON else standardized_mood(pool)
            p_value = normal_two_sided_pvalue(z)
            metadata["standardized"] = z
        else:
            p_value = ks_asymptotic_pvalue(observed, pool.m, pool.n)
        return TestOutcome(
            statistic_value=observed,
            p_value=p_value,
            method=self.statistic,
            null_model=self.null_model.label,
            m=pool.m,
            n=pool.n,
            seed=outcome_seed,
            metadata=metadata,
        )


def _univariate(sample: Any, statistic: StatisticKind) -> Sample:
    if isinstance(sample, PointSample):
        if sample.d != 1:
            raise UnsupportedStatistic(f"{statistic.value} needs univariate samples, got dimension {sample.d}")
        return Sample(sample.points[:, 0])
    return Sample.of(sample)
