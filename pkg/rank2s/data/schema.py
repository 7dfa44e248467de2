from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Sequence

import numpy as np

from rank2s.errors import DimensionMismatch, EmptySample, InvalidParameters, NonFiniteValue


OUTCOME_SCHEMA_VERSION = "1"


class StatisticKind(str, Enum):
    T = "T"
    TPRIME = "Tprime"
    DHAT = "Dhat"
    CVM = "CvM"
    ENERGY = "Energy"
    KS = "KS"
    WILCOXON = "Wilcoxon"
    MOOD = "Mood"
    TM = "TM"

    @classmethod
    def parse(cls, raw: "str | StatisticKind") -> "StatisticKind":
        if isinstance(raw, cls):
            return raw
        key = str(raw).strip().lower()
        kind = _STATISTIC_ALIASES.get(key)
        if kind is None:
            raise InvalidParameters(f"Unknown statistic: {raw}. Valid: {sorted(k.value for k in cls)}")
        return kind

    @property
    def is_rank_statistic(self) -> bool:
        return self not in {StatisticKind.ENERGY, StatisticKind.TM}


class TiePolicy(str, Enum):
    REJECT = "reject"
    MIDRANK = "midrank"


class Group(str, Enum):
    X = "X"
    Y = "Y"


_STATISTIC_ALIASES = {
    "t": StatisticKind.T,
    "tprime": StatisticKind.TPRIME,
    "t'": StatisticKind.TPRIME,
    "t_prime": StatisticKind.TPRIME,
    "dhat": StatisticKind.DHAT,
    "d_hat": StatisticKind.DHAT,
    "cvm": StatisticKind.CVM,
    "tc": StatisticKind.CVM,
    "cramer_von_mises": StatisticKind.CVM,
    "energy": StatisticKind.ENERGY,
    "ct": StatisticKind.ENERGY,
    "ks": StatisticKind.KS,
    "kolmogorov_smirnov": StatisticKind.KS,
    "wilcoxon": StatisticKind.WILCOXON,
    "w": StatisticKind.WILCOXON,
    "mood": StatisticKind.MOOD,
    "m": StatisticKind.MOOD,
    "tm": StatisticKind.TM,
    "t_m": StatisticKind.TM,
}


@dataclass(frozen=True)
class Sample:
    """One univariate sample; values are kept as a read-only float array."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim == 2 and arr.shape[1] == 1:
            arr = arr[:, 0]
        elif arr.ndim > 1:
            raise InvalidParameters(
                f"Sample must be one-dimensional, got shape {arr.shape}; use PointSample for points in R^d"
            )
        arr = arr.reshape(-1)
        if arr.size == 0:
            raise EmptySample("Sample must contain at least one value")
        if not np.all(np.isfinite(arr)):
            bad = arr[~np.isfinite(arr)]
            raise NonFiniteValue(f"Sample contains non-finite values: {bad[:5].tolist()}")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @classmethod
    def of(cls, values: "Sample | Sequence[float] | np.ndarray") -> "Sample":
        if isinstance(values, cls):
            return values
        return cls(np.asarray(values, dtype=float))

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class PointSample:
    """Observations in R^d stored row-wise as an (n, d) array."""

    points: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.points, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise DimensionMismatch(f"Points must form a 2-d array, got shape {arr.shape}")
        if arr.shape[0] == 0 or arr.shape[1] == 0:
            raise EmptySample("PointSample must contain at least one point of dimension >= 1")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValue("PointSample contains non-finite coordinates")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "points", arr)

    @classmethod
    def of(cls, points: "PointSample | Sample | Sequence[Sequence[float]] | np.ndarray") -> "PointSample":
        if isinstance(points, cls):
            return points
        if isinstance(points, Sample):
            return cls(points.values.reshape(-1, 1))
        return cls(np.asarray(points, dtype=float))

    @property
    def d(self) -> int:
        return int(self.points.shape[1])

    def __len__(self) -> int:
        return int(self.points.shape[0])


def require_same_dimension(x: PointSample, y: PointSample) -> int:
    if x.d != y.d:
        raise DimensionMismatch(f"Samples have different dimensions: {x.d} vs {y.d}")
    return x.d


@dataclass
class TestOutcome:
    statistic_value: float
    p_value: float
    method: StatisticKind
    null_model: str
    m: int
    n: int
    seed: int | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    # Keep pytest from collecting this as a test class.
    __test__ = False

    def __post_init__(self) -> None:
        self.statistic_value = float(self.statistic_value)
        self.p_value = float(self.p_value)
        self.method = StatisticKind.parse(self.method)
        if not (0.0 < self.p_value <= 1.0):
            raise ValueError(f"p_value must lie in (0, 1], got {self.p_value}")

    def rejects(self, alpha: float) -> bool:
        return self.p_value <= alpha

    def to_dict(self, alpha: float | None = None) -> dict[str, Any]:
        out: dict[str, Any] = {
            "schema_version": OUTCOME_SCHEMA_VERSION,
            "statistic_value": self.statistic_value,
            "p_value": self.p_value,
            "method": self.method.value,
            "null_model": self.null_model,
            "m": int(self.m),
            "n": int(self.n),
            "seed": self.seed,
        }
        if alpha is not None:
            out["alpha"] = float(alpha)
            out["decision"] = "reject" if self.rejects(alpha) else "accept"
        if self.metadata:
            out["metadata"] = dict(self.metadata)
        return out
