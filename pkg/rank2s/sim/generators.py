"""Distribution families for the simulation scenarios and a delta-shift helper.

Pareto laws take ``scale`` (the support minimum) and ``shape`` (the tail
index) by name; the cdf is 1 - (scale / x)^shape for x >= scale.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping

import numpy as np
from scipy.linalg import LinAlgError, cholesky, eigh

from rank2s.data.schema import PointSample, Sample
from rank2s.errors import InvalidParameters


class Family(str, Enum):
    NORMAL = "normal"
    STUDENT_T = "student_t"
    PARETO = "pareto"
    EXPONENTIAL = "exponential"
    LOGNORMAL = "lognormal"
    MV_NORMAL = "mv_normal"
    MV_T1 = "mv_t1"
    MV_PARETO = "mv_pareto"

    @property
    def multivariate(self) -> bool:
        return self in {Family.MV_NORMAL, Family.MV_T1, Family.MV_PARETO}


# Parameter names per family with their defaults.
_FAMILY_PARAMS: dict[Family, dict[str, Any]] = {
    Family.NORMAL: {"mu": 0.0, "sigma": 1.0},
    Family.STUDENT_T: {"df": 3.0, "shift": 0.0},
    Family.PARETO: {"shape": 2.0, "scale": 2.0},
    Family.EXPONENTIAL: {"rate": 1.0},
    Family.LOGNORMAL: {"mu": 0.0, "sigma": 1.0},
    Family.MV_NORMAL: {"mean": None, "covariance": None},
    Family.MV_T1: {"mean": None, "scatter": None},
    Family.MV_PARETO: {"shape": None, "scale": None},
}

_POSITIVE = {"sigma", "scale", "rate", "df", "shape"}


def equicorrelated(d: int, rho: float) -> np.ndarray:
    """Unit-diagonal matrix with every off-diagonal entry equal to ``rho``."""
    out = np.full((d, d), float(rho))
    np.fill_diagonal(out, 1.0)
    return out


def reciprocal_eigen(matrix: np.ndarray) -> np.ndarray:
    """Same eigenvectors as ``matrix`` with every eigenvalue replaced by its reciprocal."""
    values, vectors = eigh(np.asarray(matrix, dtype=float))
    if np.any(values <= 0.0):
        raise InvalidParameters("reciprocal_eigen needs a positive definite matrix")
    return (vectors / values) @ vectors.T


def build_matrix(raw: Any, d: int) -> np.ndarray:
    """Covariance/scatter from a config value.

    Accepts a full d x d matrix, a scalar c (meaning c * I), or a mapping
    ``{kind: equicorrelated | reciprocal_eigen, rho: r}``.
    """
    if raw is None:
        return np.eye(d)
    if isinstance(raw, Mapping):
        kind = str(raw.get("kind", "")).strip().lower()
        rho = float(raw.get("rho", 0.0))
        if kind == "equicorrelated":
            return equicorrelated(d, rho)
        if kind == "reciprocal_eigen":
            return reciprocal_eigen(equicorrelated(d, rho))
        raise InvalidParameters(f"Unknown matrix kind: {raw.get('kind')!r}")
    arr = np.asarray(raw, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(d)
    if arr.shape != (d, d):
        raise InvalidParameters(f"matrix must have shape ({d}, {d}), got {arr.shape}")
    return arr


def _vector(raw: Any, d: int, default: float) -> np.ndarray:
    if raw is None:
        return np.full(d, default)
    arr = np.asarray(raw, dtype=float).reshape(-1)
    if arr.size == 1:
        return np.full(d, float(arr[0]))
    if arr.size != d:
        raise InvalidParameters(f"vector must have length {d}, got {arr.size}")
    return arr


@dataclass(frozen=True)
class DistributionSpec:
    family: Family
    params: dict[str, Any] = field(default_factory=dict)
    d: int = 1

    def __post_init__(self) -> None:
        family = Family(self.family)
        object.__setattr__(self, "family", family)
        defaults = _FAMILY_PARAMS[family]
        unknown = set(self.params) - set(defaults)
        if unknown:
            raise InvalidParameters(f"{family.value} does not take parameters {sorted(unknown)}")
        if not family.multivariate and self.d != 1:
            raise InvalidParameters(f"{family.value} is univariate, got d={self.d}")
        if self.d < 1:
            raise InvalidParameters(f"dimension must be >= 1, got {self.d}")
        merged = {**defaults, **self.params}
        if family.multivariate:
            merged = self._resolve_multivariate(family, merged)
        else:
            merged = {k: float(v) for k, v in merged.items()}
        for key in _POSITIVE & set(merged):
            if np.any(np.asarray(merged[key]) <= 0.0):
                raise InvalidParameters(f"{family.value}.{key} must be > 0, got {merged[key]}")
        object.__setattr__(self, "params", merged)

    def _resolve_multivariate(self, family: Family, merged: dict[str, Any]) -> dict[str, Any]:
        d = self.d
        if family is Family.MV_PARETO:
            return {"shape": _vector(merged["shape"], d, 1.0), "scale": _vector(merged["scale"], d, 1.0)}
        key = "covariance" if family is Family.MV_NORMAL else "scatter"
        matrix = build_matrix(merged[key], d)
        if not np.allclose(matrix, matrix.T):
            raise InvalidParameters(f"{family.value}.{key} must be symmetric")
        try:
            cholesky(matrix, lower=True)
        except LinAlgError:
            raise InvalidParameters(f"{family.value}.{key} must be positive definite") from None
        return {"mean": _vector(merged["mean"], d, 0.0), key: matrix}

    @classmethod
    def from_mapping(cls, raw: Mapping[str, Any]) -> "DistributionSpec":
        data = dict(raw)
        try:
            family = Family(str(data.pop("family")).strip().lower())
        except KeyError:
            raise InvalidParameters("distribution needs a 'family' key") from None
        except ValueError:
            valid = sorted(f.value for f in Family)
            raise InvalidParameters(f"Unknown family: {raw.get('family')!r}. Valid: {valid}") from None
        d = int(data.pop("d", 1))
        return cls(family=family, params=data, d=d)

    def with_param(self, name: str, value: Any) -> "DistributionSpec":
        if name not in self.params:
            raise InvalidParameters(f"{self.family.value} has no parameter {name!r}")
        params = dict(self.params)
        params[name] = value
        return replace(self, params=params)

    def describe(self) -> dict[str, Any]:
        return {
            "family": self.family.value,
            "d": self.d,
            **{k: np.asarray(v).tolist() for k, v in self.params.items()},
        }


class DeltaMode(str, Enum):
    OFFSET = "offset"
    VALUE = "value"
    MULTIPLY = "multiply"


def apply_delta(spec: DistributionSpec, param: str, mode: DeltaMode | str, delta: float) -> DistributionSpec:
    """``param`` becomes base + delta, delta, or base * delta (elementwise for vectors and matrices)."""
    if param not in spec.params:
        raise InvalidParameters(f"{spec.family.value} has no parameter {param!r}")
    mode = DeltaMode(mode)
    base = np.asarray(spec.params[param], dtype=float)
    if mode is DeltaMode.OFFSET:
        value = base + delta
    elif mode is DeltaMode.VALUE:
        value = np.full_like(base, float(delta))
    else:
        value = base * delta
    return spec.with_param(param, value if value.ndim else float(value))


def _rng(seed: int | np.random.Generator) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(int(seed))


def draw_sample(spec: DistributionSpec, size: int, seed: int | np.random.Generator) -> Sample | PointSample:
    """``size`` draws from ``spec``; deterministic for an integer seed."""
    if size < 1:
        raise InvalidParameters(f"size must be >= 1, got {size}")
    rng = _rng(seed)
    p = spec.params
    family = spec.family

    if family is Family.NORMAL:
        return Sample(rng.normal(p["mu"], p["sigma"], size))
    if family is Family.STUDENT_T:
        return Sample(p["shift"] + rng.standard_t(p["df"], size))
    if family is Family.PARETO:
        # numpy's pareto is the Lomax law; shifting by one gives support [1, inf)
        return Sample(p["scale"] * (1.0 + rng.pareto(p["shape"], size)))
    if family is Family.EXPONENTIAL:
        return Sample(rng.exponential(1.0 / p["rate"], size))
    if family is Family.LOGNORMAL:
        return Sample(rng.lognormal(p["mu"], p["sigma"], size))

    d = spec.d
    if family is Family.MV_NORMAL:
        factor = cholesky(p["covariance"], lower=True)
        return PointSample(p["mean"] + rng.standard_normal((size, d)) @ factor.T)
    if family is Family.MV_T1:
        factor = cholesky(p["scatter"], lower=True)
        z = rng.standard_normal((size, d)) @ factor.T
        w = np.abs(rng.standard_normal(size))
        return PointSample(p["mean"] + z / w[:, None])
    shapes, scales = p["shape"], p["scale"]
    return PointSample(scales * (1.0 + rng.pareto(shapes, size=(size, d))))
