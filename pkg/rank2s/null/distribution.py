"""Discrete null laws, tail p-values, critical values and their cache files."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from math import comb
from pathlib import Path
from typing import Any

import numpy as np

from rank2s.data.schema import StatisticKind
from rank2s.errors import InvalidParameters, ParseError

NULL_CACHE_VERSION = "v1"
_CACHE_MAGIC = f"# rank2s-null {NULL_CACHE_VERSION}"

# Support values are compared with a relative slack so that an observed
# statistic recomputed in floating point still lands on its atom.
TIE_RTOL = 1e-10


class NullKind(str, Enum):
    EXACT = "exact"
    MONTE_CARLO = "monte_carlo"


def _tie_tolerance(value: float) -> float:
    return TIE_RTOL * max(1.0, abs(value))


def null_cache_name(
    statistic: StatisticKind,
    kind: NullKind,
    m: int,
    n: int,
    total: int,
    seed: int | None,
) -> str:
    seed_part = "none" if seed is None else str(seed)
    return f"null_{statistic.value}_{kind.value}_m{m}_n{n}_reps{total}_seed{seed_part}.csv"


@dataclass(frozen=True)
class NullDistribution:
    """Null law of a statistic as sorted support points with integer counts.

    ``total`` is C(N, m) for the exact kind and the replicate count for the
    Monte-Carlo kind; ``weights`` are counts / total. When the statistic takes
    values on a lattice, ``keys`` holds the integer lattice coordinates and
    ``values == keys / scale`` exactly.
    """

    kind: NullKind
    statistic: StatisticKind
    m: int
    n: int
    values: np.ndarray
    counts: np.ndarray
    total: int
    seed: int | None = None
    keys: np.ndarray | None = None
    scale: int | None = None

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        counts = np.asarray(self.counts, dtype=np.int64)
        if values.shape != counts.shape or values.ndim != 1 or values.size == 0:
            raise InvalidParameters("values and counts must be nonempty 1-d arrays of equal length")
        if np.any(np.diff(values) < 0):
            raise InvalidParameters("support values must be sorted ascending")
        if int(counts.sum()) != int(self.total):
            raise InvalidParameters(f"counts sum to {int(counts.sum())}, expected total {self.total}")
        if self.kind is NullKind.EXACT and int(self.total) != comb(self.m + self.n, self.m):
            raise InvalidParameters("exact null must cover all C(N, m) assignments")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "counts", counts)
        if self.keys is not None:
            object.__setattr__(self, "keys", np.asarray(self.keys, dtype=np.int64))

    @property
    def N(self) -> int:
        return self.m + self.n

    @property
    def reps(self) -> int:
        return int(self.total)

    @property
    def weights(self) -> np.ndarray:
        return self.counts / float(self.total)

    @property
    def upper_tails(self) -> np.ndarray:
        """P(S >= values[i]) for every support point."""
        return np.cumsum(self.counts[::-1])[::-1] / float(self.total)

    def mean(self) -> float:
        return float(np.dot(self.weights, self.values))

    def variance(self) -> float:
        mu = self.mean()
        return float(np.dot(self.weights, (self.values - mu) ** 2))

    def exact_moments(self) -> tuple[Fraction, Fraction]:
        """Mean and variance in rational arithmetic (requires lattice keys)."""
        if self.keys is None or self.scale is None:
            raise InvalidParameters(f"{self.statistic.value} null carries no lattice keys")
        total = int(self.total)
        s1 = sum(int(k) * int(c) for k, c in zip(self.keys, self.counts))
        s2 = sum(int(k) * int(k) * int(c) for k, c in zip(self.keys, self.counts))
        mean = Fraction(s1, total * self.scale)
        second = Fraction(s2, total * self.scale * self.scale)
        return mean, second - mean * mean

    def count_at_least(self, observed: float) -> int:
        idx = int(np.searchsorted(self.values, observed - _tie_tolerance(observed), side="left"))
        return int(self.counts[idx:].sum())

    def count_greater(self, observed: float) -> int:
        idx = int(np.searchsorted(self.values, observed + _tie_tolerance(observed), side="right"))
        return int(self.counts[idx:].sum())

    def cdf(self, x: float) -> float:
        idx = int(np.searchsorted(self.values, x + _tie_tolerance(x), side="right"))
        return float(self.counts[:idx].sum()) / float(self.total)

    def to_rows(self) -> list[dict[str, Any]]:
        tails = self.upper_tails
        return [
            {"value": float(v), "probability": float(w), "upper_tail": float(t)}
            for v, w, t in zip(self.values, self.weights, tails)
        ]

    def cache_name(self) -> str:
        return null_cache_name(self.statistic, self.kind, self.m, self.n, self.total, self.seed)

    def save_csv(self, path: str | Path) -> Path:
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        header = {
            "kind": self.kind.value,
            "statistic": self.statistic.value,
            "m": self.m,
            "n": self.n,
            "seed": "" if self.seed is None else self.seed,
            "reps": self.total,
            "scale": "" if self.scale is None else self.scale,
        }
        lines = [_CACHE_MAGIC, "# " + ",".join(f"{k}={v}" for k, v in header.items()), "value,count,key"]
        keys = self.keys if self.keys is not None else [None] * self.values.size
        for value, count, key in zip(self.values, self.counts, keys):
            lines.append(f"{float(value)!r},{int(count)},{'' if key is None else int(key)}")
        out.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return out

    @classmethod
    def load_csv(cls, path: str | Path) -> "NullDistribution":
        src = Path(path)
        lines = src.read_text(encoding="utf-8").splitlines()
        if len(lines) < 4 or lines[0].strip() != _CACHE_MAGIC:
            raise ParseError(str(src), 1, f"expected header {_CACHE_MAGIC!r}")
        try:
            meta = dict(item.split("=", 1) for item in lines[1].lstrip("# ").split(","))
        except ValueError:
            raise ParseError(str(src), 2, "malformed metadata line") from None

        values: list[float] = []
        counts: list[int] = []
        keys: list[int] = []
        for lineno, line in enumerate(lines[3:], start=4):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ParseError(str(src), lineno, "expected value,count,key")
            try:
                values.append(float(parts[0]))
                counts.append(int(parts[1]))
                if parts[2]:
                    keys.append(int(parts[2]))
            except ValueError:
                raise ParseError(str(src), lineno, "non-numeric entry") from None

        scale = int(meta["scale"]) if meta.get("scale") else None
        return cls(
            kind=NullKind(meta["kind"]),
            statistic=StatisticKind.parse(meta["statistic"]),
            m=int(meta["m"]),
            n=int(meta["n"]),
            values=np.asarray(values),
            counts=np.asarray(counts),
            total=int(meta["reps"]),
            seed=int(meta["seed"]) if meta.get("seed") else None,
            keys=np.asarray(keys) if len(keys) == len(values) and scale is not None else None,
            scale=scale,
        )


def pvalue_from_null(observed: float, null: NullDistribution) -> float:
    """Upper-tail p-value of ``observed``.

    Exact laws give P(S >= observed), floored at the smallest attainable tail
    1/C(N, m) when ``observed`` exceeds the support. Monte-Carlo laws use the
    add-one estimator (1 + #{S_b >= observed}) / (reps + 1).
    """
    exceed = null.count_at_least(observed)
    if null.kind is NullKind.EXACT:
        return float(max(exceed, 1)) / float(null.total)
    return float(1 + exceed) / float(null.total + 1)


def critical_value_from_null(alpha: float, null: NullDistribution) -> float:
    """Smallest support point c with P(S > c) <= alpha; the test rejects when S > c.

    The largest atom always qualifies, so the result is finite; when it is the
    largest atom the test never rejects.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidParameters(f"alpha must lie in (0, 1), got {alpha}")
    strict_tails = (null.upper_tails * null.total - null.counts) / float(null.total)
    ok = np.flatnonzero(strict_tails <= alpha + 1e-12)
    return float(null.values[ok[0]])


def attained_size(critical_value: float, null: NullDistribution) -> float:
    """Rejection probability P(S > c) of the rule ``S > c`` under the null law."""
    if not np.isfinite(critical_value):
        return 0.0
    return null.count_greater(critical_value) / float(null.total)
