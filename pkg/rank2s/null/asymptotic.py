"""Closed-form null moments of T and its limiting chi-square mixture.

Under H0, (T - E T) / sd(T) converges to

    Z_inf = (sqrt(45) / pi^2) * sum_k k^-2 (chi2_1k - 1),

the eigen-expansion of the degenerate kernel
h(u, v) = |u - v| + u(1 - u) + v(1 - v) - 2/3 whose operator eigenvalues are
-2 / (pi^2 k^2). Z_d truncates the sum after d terms.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import eigh

from rank2s.errors import InvalidParameters, ParseError
from rank2s.utils.seed import STREAM_MIXTURE, derive_rng

MIXTURE_SCALE = math.sqrt(45.0) / 2.0
DEFAULT_MIXTURE_ORDER = 4
DEFAULT_MIXTURE_SAMPLES = 10_000_000
MIN_MIXTURE_SAMPLES = 100_000
MIXTURE_BATCH = 1_000_000
QUANTILE_CACHE_VERSION = "v1"
_QUANTILE_MAGIC = f"# rank2s-mixture-quantiles {QUANTILE_CACHE_VERSION}"

# Default (m, n) columns of the critical value table.
TABLE_SIZES: tuple[tuple[int, int], ...] = ((50, 50), (50, 40), (500, 500), (7, 7), (7, 9))
TABLE_ORDERS: tuple[int, ...] = (1, 2, 4, 10, 100)


@dataclass(frozen=True)
class TMoments:
    mean: float
    variance: float
    m: int
    n: int

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)


def moments_T_fraction(m: int, n: int) -> tuple[Fraction, Fraction]:
    """E T = (N+1)/(6N) and Var T = (N+1)/(180 N^2) * [4(N+1) - 3N^2/(mn)] as exact rationals."""
    if m < 1 or n < 1:
        raise InvalidParameters(f"Sample sizes must be >= 1, got m={m}, n={n}")
    N = m + n
    mean = Fraction(N + 1, 6 * N)
    variance = Fraction(N + 1, 180 * N * N) * (4 * (N + 1) - Fraction(3 * N * N, m * n))
    return mean, variance


def moments_T(m: int, n: int) -> TMoments:
    mean, variance = moments_T_fraction(m, n)
    return TMoments(mean=float(mean), variance=float(variance), m=m, n=n)


def mixture_eigenvalues(d: int) -> np.ndarray:
    if d < 1:
        raise InvalidParameters(f"truncation order d must be >= 1, got {d}")
    k = np.arange(1, d + 1, dtype=float)
    return -2.0 / (math.pi**2 * k**2)


def mixture_coefficients(d: int) -> np.ndarray:
    """Weights c_k = -sqrt(45)/2 * lambda_k = sqrt(45) / (pi^2 k^2)."""
    return -MIXTURE_SCALE * mixture_eigenvalues(d)


def mixture_variance_ratio(d: int) -> float:
    """Var(Z_d) / Var(Z_inf) = (90 / pi^4) * sum_{k<=d} k^-4."""
    if d < 1:
        raise InvalidParameters(f"truncation order d must be >= 1, got {d}")
    k = np.arange(1, d + 1, dtype=float)
    return float(90.0 / math.pi**4 * np.sum(k**-4))


def sample_Zd(d: int, sample_count: int, seed: int) -> np.ndarray:
    """Draws of Z_d; the chi-square for term k in batch b comes from stream (seed, k, b)."""
    if sample_count < 1:
        raise InvalidParameters(f"sample_count must be >= 1, got {sample_count}")
    coefficients = mixture_coefficients(d)
    out = np.zeros(sample_count, dtype=float)
    for b, start in enumerate(range(0, sample_count, MIXTURE_BATCH)):
        stop = min(start + MIXTURE_BATCH, sample_count)
        for k, c_k in enumerate(coefficients, start=1):
            z = derive_rng(seed, STREAM_MIXTURE, k, b).standard_normal(stop - start)
            out[start:stop] += c_k * (z * z - 1.0)
    return out


@dataclass
class MixtureSpec:
    """Truncated mixture Z_d with a per-alpha cache of its upper quantiles."""

    d: int = DEFAULT_MIXTURE_ORDER
    sample_count: int = DEFAULT_MIXTURE_SAMPLES
    seed: int = 0
    quantile_cache: dict[float, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.d < 1:
            raise InvalidParameters(f"truncation order d must be >= 1, got {self.d}")
        self.quantile_cache = {float(a): float(q) for a, q in self.quantile_cache.items()}

    @property
    def eigenvalues(self) -> np.ndarray:
        return mixture_eigenvalues(self.d)

    @property
    def scale(self) -> float:
        return MIXTURE_SCALE

    @property
    def variance(self) -> float:
        return mixture_variance_ratio(self.d)

    def quantile(self, alpha: float) -> float:
        key = float(alpha)
        if key not in self.quantile_cache:
            self.quantile_cache[key] = quantile_Zd(self.d, key, self.sample_count, self.seed)
        return self.quantile_cache[key]


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise InvalidParameters(f"alpha must lie in (0, 1), got {alpha}")


def quantile_Zd(
    d: int,
    alpha: float,
    sample_count: int = DEFAULT_MIXTURE_SAMPLES,
    seed: int = 0,
    spec: MixtureSpec | None = None,
) -> float:
    """Monte-Carlo (1 - alpha)-quantile of Z_d, stored in ``spec`` when one is passed."""
    _check_alpha(alpha)
    if sample_count < MIN_MIXTURE_SAMPLES:
        raise InvalidParameters(f"sample_count must be >= {MIN_MIXTURE_SAMPLES}, got {sample_count}")
    if spec is not None and spec.d == d and spec.sample_count == sample_count and spec.seed == seed:
        cached = spec.quantile_cache.get(float(alpha))
        if cached is not None:
            return cached
    value = float(np.quantile(sample_Zd(d, sample_count, seed), 1.0 - alpha))
    if spec is not None and spec.d == d and spec.sample_count == sample_count and spec.seed == seed:
        spec.quantile_cache[float(alpha)] = value
    return value


@dataclass(frozen=True)
class MixtureTail:
    """Sorted Z_d draws answering repeated upper-tail queries without resampling."""

    d: int
    sample_count: int
    seed: int
    draws: np.ndarray

    @classmethod
    def build(cls, d: int, sample_count: int = 1_000_000, seed: int = 0) -> "MixtureTail":
        return cls(d=d, sample_count=sample_count, seed=seed, draws=np.sort(sample_Zd(d, sample_count, seed)))

    def __call__(self, z: float) -> float:
        at_least = self.draws.size - int(np.searchsorted(self.draws, z, side="left"))
        return (1.0 + at_least) / (self.draws.size + 1.0)


def mixture_tail_probability(z: float, d: int, sample_count: int = 1_000_000, seed: int = 0) -> float:
    """Add-one Monte-Carlo estimate of P(Z_d >= z)."""
    return MixtureTail.build(d, sample_count, seed)(z)


def standardized_T(t_value: float, m: int, n: int) -> float:
    moments = moments_T(m, n)
    return (t_value - moments.mean) / moments.sd


def critical_value_asymptotic(alpha: float, m: int, n: int, d: int, spec: MixtureSpec) -> float:
    """c_alpha(m, n) = E T + sd(T) * q_{1-alpha}(Z_d)."""
    _check_alpha(alpha)
    if spec.d != d:
        raise InvalidParameters(f"MixtureSpec has d={spec.d}, requested d={d}")
    moments = moments_T(m, n)
    return moments.mean + moments.sd * spec.quantile(alpha)


def critical_value_table(
    specs: Sequence[MixtureSpec],
    alpha: float = 0.05,
    sizes: Sequence[tuple[int, int]] = TABLE_SIZES,
) -> list[dict[str, float]]:
    """Variance ratio, upper quantile and approximated c_alpha(m, n) for each spec and size."""
    rows: list[dict[str, float]] = []
    for spec in specs:
        row: dict[str, float] = {
            "d": spec.d,
            "variance_ratio": mixture_variance_ratio(spec.d),
            "quantile": spec.quantile(alpha),
        }
        for m, n in sizes:
            row[f"c_m{m}_n{n}"] = critical_value_asymptotic(alpha, m, n, spec.d, spec)
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# kernel eigensystem
# ---------------------------------------------------------------------------


def kernel_h(u: np.ndarray | float, v: np.ndarray | float) -> np.ndarray | float:
    u_arr = np.asarray(u, dtype=float)
    v_arr = np.asarray(v, dtype=float)
    out = np.abs(u_arr - v_arr) + u_arr * (1.0 - u_arr) + v_arr * (1.0 - v_arr) - 2.0 / 3.0
    return float(out) if out.ndim == 0 else out


def kernel_operator_matrix(grid_size: int) -> np.ndarray:
    """Nystrom discretization of the integral operator with kernel h on midpoints of (0, 1)."""
    grid = (np.arange(grid_size) + 0.5) / grid_size
    return kernel_h(grid[:, None], grid[None, :]) / grid_size


def verify_kernel_eigensystem(grid_size: int = 2000, k_max: int = 5) -> list[tuple[float, float]]:
    """Leading negative eigenvalues of the discretized operator paired with -2/(pi^2 k^2)."""
    if grid_size < 500:
        raise InvalidParameters(f"grid_size must be >= 500, got {grid_size}")
    if not 1 <= k_max <= 10:
        raise InvalidParameters(f"k_max must lie in 1..10, got {k_max}")
    approx = eigh(kernel_operator_matrix(grid_size), eigvals_only=True, subset_by_index=[0, k_max - 1])
    reference = mixture_eigenvalues(k_max)
    return [(float(a), float(r)) for a, r in zip(np.sort(approx), reference)]


def kernel_squared_eigenvalue_sum(grid_size: int = 2000) -> float:
    """Sum of squared eigenvalues of the discretized operator (its squared Frobenius norm)."""
    matrix = kernel_operator_matrix(grid_size)
    return float(np.sum(matrix * matrix))


def mean_rank_distance(N: int) -> Fraction:
    """E|R_1 - R_2| for two distinct draws from the natural ranks 1..N, by enumeration."""
    if N < 2:
        raise InvalidParameters(f"N must be >= 2, got {N}")
    total = sum(abs(i - j) for i in range(1, N + 1) for j in range(1, N + 1) if i != j)
    return Fraction(total, N * (N - 1))


# ---------------------------------------------------------------------------
# quantile cache file
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuantileRecord:
    d: int
    alpha: float
    sample_count: int
    seed: int
    quantile: float

    def key(self) -> tuple[int, float, int, int]:
        return (self.d, self.alpha, self.sample_count, self.seed)


def load_quantile_cache(path: str | Path) -> dict[tuple[int, float, int, int], QuantileRecord]:
    src = Path(path)
    if not src.exists():
        return {}
    lines = src.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != _QUANTILE_MAGIC:
        raise ParseError(str(src), 1, f"expected header {_QUANTILE_MAGIC!r}")
    records: dict[tuple[int, float, int, int], QuantileRecord] = {}
    reader = csv.DictReader(lines[1:])
    for lineno, row in enumerate(reader, start=3):
        try:
            record = QuantileRecord(
                d=int(row["d"]),
                alpha=float(row["alpha"]),
                sample_count=int(row["sample_count"]),
                seed=int(row["seed"]),
                quantile=float(row["quantile"]),
            )
        except (KeyError, TypeError, ValueError):
            raise ParseError(str(src), lineno, "malformed quantile row") from None
        records[record.key()] = record
    return records


def save_quantile_cache(path: str | Path, records: dict[tuple[int, float, int, int], QuantileRecord]) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = [_QUANTILE_MAGIC, "d,alpha,sample_count,seed,quantile"]
    for key in sorted(records):
        r = records[key]
        lines.append(f"{r.d},{r.alpha!r},{r.sample_count},{r.seed},{r.quantile!r}")
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out


def spec_from_cache(
    path: str | Path,
    d: int,
    sample_count: int,
    seed: int,
) -> MixtureSpec:
    records = load_quantile_cache(path)
    cached = {
        r.alpha: r.quantile
        for r in records.values()
        if r.d == d and r.sample_count == sample_count and r.seed == seed
    }
    return MixtureSpec(d=d, sample_count=sample_count, seed=seed, quantile_cache=cached)


def store_spec(path: str | Path, spec: MixtureSpec) -> Path:
    records = load_quantile_cache(path)
    for alpha, quantile in spec.quantile_cache.items():
        record = QuantileRecord(spec.d, float(alpha), spec.sample_count, spec.seed, float(quantile))
        records[record.key()] = record
    return save_quantile_cache(path, records)
