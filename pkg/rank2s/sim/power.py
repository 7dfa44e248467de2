from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from rank2s.data.io import write_csv_rows, write_json
from rank2s.data.schema import StatisticKind, TiePolicy
from rank2s.errors import ConfigValidationError, Rank2sError
from rank2s.inference import NullModel, NullModelKind, TwoSampleTest, default_null_model
from rank2s.sim.generators import DeltaMode, DistributionSpec, apply_delta, draw_sample
from rank2s.utils.parallel import chunk_ranges, parallel_map
from rank2s.utils.run_metadata import (
    LogFn,
    format_duration,
    hash_file_contents,
    hash_jsonable,
    null_log,
    resolve_git_commit,
)
from rank2s.utils.seed import STREAM_POWER, derive_rng, derive_seed

POWER_CSV_FILENAME = "power.csv"
RUN_METADATA_FILENAME = "run_metadata.json"
POWER_CSV_HEADER = ("scenario", "m", "n", "delta", "test", "power", "se", "ci_low", "ci_high")
MIN_ITERATIONS = 100
REPLICATE_CHUNK = 25
_MULTIVARIATE_STATISTICS = {StatisticKind.ENERGY, StatisticKind.TM}


def _require_mapping(raw: Any, path: str) -> Mapping[str, Any]:
    if not isinstance(raw, Mapping):
        raise ConfigValidationError(path, f"expected a mapping, got {type(raw).__name__}")
    return raw


def _as_int(raw: Any, path: str) -> int:
    try:
        return int(raw)
    except (TypeError, ValueError):
        raise ConfigValidationError(path, f"expected an integer, got {raw!r}") from None


def _as_float(raw: Any, path: str) -> float:
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigValidationError(path, f"expected a number, got {raw!r}") from None


@dataclass(frozen=True)
class TestSpec:
    label: str
    statistic: StatisticKind
    null_model: NullModel

    __test__ = False

    @classmethod
    def from_mapping(
        cls,
        raw: Mapping[str, Any] | str,
        path: str,
        defaults: Mapping[str, str] | None = None,
    ) -> "TestSpec":
        data = {"statistic": raw} if isinstance(raw, str) else dict(_require_mapping(raw, path))
        try:
            statistic = StatisticKind.parse(data.get("statistic", ""))
        except ValueError as exc:
            raise ConfigValidationError(f"{path}.statistic", str(exc)) from None
        null_raw = data.get("null") or (defaults or {}).get(statistic.value)
        try:
            null_model = NullModel.parse(null_raw) if null_raw else default_null_model(statistic)
            null_model.check(statistic)
        except Rank2sError as exc:
            raise ConfigValidationError(f"{path}.null", str(exc)) from None
        return cls(label=str(data.get("label") or statistic.value), statistic=statistic, null_model=null_model)


@dataclass(frozen=True)
class ScenarioCell:
    """One (scenario, delta, sizes) row of a power table."""

    scenario: str
    m: int
    n: int
    delta: float | None
    x: DistributionSpec
    y: DistributionSpec
    tests: tuple[str, ...]

    @property
    def delta_text(self) -> str:
        return "" if self.delta is None else f"{self.delta:g}"


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    x: DistributionSpec
    y: DistributionSpec
    sizes: tuple[tuple[int, int], ...]
    deltas: tuple[float | None, ...] = (None,)
    vary_param: str | None = None
    vary_mode: DeltaMode = DeltaMode.OFFSET
    vary_sample: str = "y"
    tests: tuple[str, ...] = ()

    @property
    def multivariate(self) -> bool:
        return self.x.family.multivariate or self.y.family.multivariate

    def cells(self, all_tests: Sequence[str]) -> list[ScenarioCell]:
        tests = self.tests or tuple(all_tests)
        out: list[ScenarioCell] = []
        for delta in self.deltas:
            x_spec, y_spec = self.x, self.y
            if delta is not None and self.vary_param is not None:
                if self.vary_sample == "x":
                    x_spec = apply_delta(x_spec, self.vary_param, self.vary_mode, delta)
                else:
                    y_spec = apply_delta(y_spec, self.vary_param, self.vary_mode, delta)
            for m, n in self.sizes:
                out.append(ScenarioCell(self.name, m, n, delta, x_spec, y_spec, tests))
        return out

    @classmethod
    def from_mapping(cls, raw: Mapping[str, Any], path: str) -> "ScenarioSpec":
        data = _require_mapping(raw, path)
        name = str(data.get("name") or "").strip()
        if not name:
            raise ConfigValidationError(f"{path}.name", "scenario needs a name")

        specs: dict[str, DistributionSpec] = {}
        for key in ("x", "y"):
            try:
                specs[key] = DistributionSpec.from_mapping(_require_mapping(data.get(key), f"{path}.{key}"))
            except ConfigValidationError:
                raise
            except Rank2sError as exc:
                raise ConfigValidationError(f"{path}.{key}", str(exc)) from None

        sizes_raw = data.get("sizes", [[50, 50]])
        if not isinstance(sizes_raw, Sequence) or not sizes_raw:
            raise ConfigValidationError(f"{path}.sizes", "expected a nonempty list of [m, n] pairs")
        sizes: list[tuple[int, int]] = []
        for i, pair in enumerate(sizes_raw):
            if not isinstance(pair, Sequence) or len(pair) != 2:
                raise ConfigValidationError(f"{path}.sizes[{i}]", f"expected [m, n], got {pair!r}")
            m, n = _as_int(pair[0], f"{path}.sizes[{i}]"), _as_int(pair[1], f"{path}.sizes[{i}]")
            if m < 2 or n < 2:
                raise ConfigValidationError(f"{path}.sizes[{i}]", "sample sizes must be >= 2")
            sizes.append((m, n))

        vary = data.get("vary")
        vary_param, vary_mode, vary_sample = None, DeltaMode.OFFSET, "y"
        deltas: tuple[float | None, ...] = (None,)
        if vary is not None:
            vary = _require_mapping(vary, f"{path}.vary")
            vary_param = str(vary.get("param") or "")
            try:
                vary_mode = DeltaMode(str(vary.get("mode", "offset")))
            except ValueError:
                raise ConfigValidationError(f"{path}.vary.mode", f"unknown mode {vary.get('mode')!r}") from None
            vary_sample = str(vary.get("sample", "y"))
            if vary_sample not in {"x", "y"}:
                raise ConfigValidationError(f"{path}.vary.sample", "expected 'x' or 'y'")
            target = specs[vary_sample]
            if vary_param not in target.params:
                raise ConfigValidationError(
                    f"{path}.vary.param",
                    f"{target.family.value} has no parameter {vary_param!r}",
                )
            deltas_raw = data.get("deltas")
            if not isinstance(deltas_raw, Sequence) or not deltas_raw:
                raise ConfigValidationError(f"{path}.deltas", "a varied scenario needs a nonempty delta list")
            deltas = tuple(_as_float(v, f"{path}.deltas[{i}]") for i, v in enumerate(deltas_raw))

        tests = tuple(str(t) for t in data.get("tests", []) or [])
        return cls(
            name=name,
            x=specs["x"],
            y=specs["y"],
            sizes=tuple(sizes),
            deltas=deltas,
            vary_param=vary_param,
            vary_mode=vary_mode,
            vary_sample=vary_sample,
            tests=tests,
        )


@dataclass(frozen=True)
class PowerStudyConfig:
    name: str
    iterations: int
    alpha: float
    seed: int
    tests: tuple[TestSpec, ...]
    scenarios: tuple[ScenarioSpec, ...]
    workers: int = 1
    tie_policy: TiePolicy = TiePolicy.REJECT
    mixture_samples: int = 1_000_000
    progress_every: int = 0

    def __post_init__(self) -> None:
        if self.iterations < MIN_ITERATIONS:
            raise ConfigValidationError("study.iterations", f"must be >= {MIN_ITERATIONS}, got {self.iterations}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigValidationError("study.alpha", f"must lie in (0, 1), got {self.alpha}")
        if self.workers < 1:
            raise ConfigValidationError("study.workers", f"must be >= 1, got {self.workers}")
        if not self.tests:
            raise ConfigValidationError("tests", "at least one test is required")
        if not self.scenarios:
            raise ConfigValidationError("scenarios", "at least one scenario is required")
        labels = [t.label for t in self.tests]
        if len(set(labels)) != len(labels):
            raise ConfigValidationError("tests", f"test labels must be unique, got {labels}")
        for i, scenario in enumerate(self.scenarios):
            unknown = [t for t in scenario.tests if t not in labels]
            if unknown:
                raise ConfigValidationError(f"scenarios[{i}].tests", f"unknown test labels {unknown}")
            if scenario.multivariate:
                for test in self.tests:
                    if (not scenario.tests or test.label in scenario.tests) and test.statistic not in _MULTIVARIATE_STATISTICS:
                        raise ConfigValidationError(
                            f"scenarios[{i}].tests",
                            f"{test.label} ({test.statistic.value}) cannot run on multivariate scenario {scenario.name}",
                        )

    @classmethod
    def from_mapping(cls, cfg: Mapping[str, Any]) -> "PowerStudyConfig":
        study = _require_mapping(cfg.get("study", {}), "study")
        defaults: dict[str, str] = {}
        for key, value in _require_mapping(cfg.get("null_models", {}) or {}, "null_models").items():
            try:
                defaults[StatisticKind.parse(key).value] = str(value)
            except ValueError as exc:
                raise ConfigValidationError(f"null_models.{key}", str(exc)) from None
        tests_raw = cfg.get("tests") or []
        scenarios_raw = cfg.get("scenarios") or []
        if not isinstance(tests_raw, Sequence) or isinstance(tests_raw, str):
            raise ConfigValidationError("tests", "expected a list")
        if not isinstance(scenarios_raw, Sequence) or isinstance(scenarios_raw, str):
            raise ConfigValidationError("scenarios", "expected a list")
        try:
            tie_policy = TiePolicy(str(study.get("tie_policy", "reject")))
        except ValueError:
            raise ConfigValidationError("study.tie_policy", f"unknown policy {study.get('tie_policy')!r}") from None
        mixture = _require_mapping(cfg.get("mixture", {}) or {}, "mixture")
        return cls(
            name=str(study.get("name") or "power_study"),
            iterations=_as_int(study.get("iterations", 2000), "study.iterations"),
            alpha=_as_float(study.get("alpha", 0.05), "study.alpha"),
            seed=_as_int(study.get("seed", 0), "study.seed"),
            workers=_as_int(study.get("workers", 1), "study.workers"),
            tie_policy=tie_policy,
            mixture_samples=_as_int(mixture.get("tail_samples", 1_000_000), "mixture.tail_samples"),
            progress_every=_as_int(study.get("progress_every", 0), "study.progress_every"),
            tests=tuple(TestSpec.from_mapping(t, f"tests[{i}]", defaults) for i, t in enumerate(tests_raw)),
            scenarios=tuple(ScenarioSpec.from_mapping(s, f"scenarios[{i}]") for i, s in enumerate(scenarios_raw)),
        )

    def cells(self) -> list[ScenarioCell]:
        labels = [t.label for t in self.tests]
        return [cell for scenario in self.scenarios for cell in scenario.cells(labels)]

    def describe(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "iterations": self.iterations,
            "alpha": self.alpha,
            "seed": self.seed,
            "tie_policy": self.tie_policy.value,
            "mixture_samples": self.mixture_samples,
            "tests": [
                {"label": t.label, "statistic": t.statistic.value, "null": t.null_model.label} for t in self.tests
            ],
            "scenarios": [
                {
                    "name": s.name,
                    "x": s.x.describe(),
                    "y": s.y.describe(),
                    "sizes": [list(p) for p in s.sizes],
                    "deltas": list(s.deltas),
                    "vary": None if s.vary_param is None else [s.vary_sample, s.vary_param, s.vary_mode.value],
                    "tests": list(s.tests),
                }
                for s in self.scenarios
            ],
        }


@dataclass(frozen=True)
class PowerCell:
    scenario: str
    m: int
    n: int
    delta: float | None
    test: str
    rejections: int
    iterations: int

    @property
    def power(self) -> float:
        return self.rejections / float(self.iterations)

    @property
    def se(self) -> float:
        p = self.power
        return math.sqrt(p * (1.0 - p) / self.iterations)

    @property
    def ci_low(self) -> float:
        return max(0.0, self.power - 1.96 * self.se)

    @property
    def ci_high(self) -> float:
        return min(1.0, self.power + 1.96 * self.se)

    def key(self) -> tuple[str, int, int, float | None, str]:
        return (self.scenario, self.m, self.n, self.delta, self.test)

    def to_row(self) -> list[str]:
        delta = "" if self.delta is None else f"{self.delta:g}"
        return [
            self.scenario,
            str(self.m),
            str(self.n),
            delta,
            self.test,
            f"{self.power:.4f}",
            f"{self.se:.4f}",
            f"{self.ci_low:.4f}",
            f"{self.ci_high:.4f}",
        ]


@dataclass
class PowerStudyResult:
    cells: list[PowerCell]
    seed: int
    iterations: int
    alpha: float
    config_hash: str
    elapsed_seconds: float = 0.0
    null_cache_hits: dict[str, bool] = field(default_factory=dict)

    @property
    def powers(self) -> dict[tuple[str, int, int, float | None, str], float]:
        return {c.key(): c.power for c in self.cells}

    @property
    def mc_standard_errors(self) -> dict[tuple[str, int, int, float | None, str], float]:
        return {c.key(): c.se for c in self.cells}

    def power(self, scenario: str, test: str, *, delta: float | None = None, m: int | None = None, n: int | None = None) -> float:
        for cell in self.cells:
            if cell.scenario != scenario or cell.test != test:
                continue
            if delta is not None and (cell.delta is None or not math.isclose(cell.delta, delta)):
                continue
            if (m is not None and cell.m != m) or (n is not None and cell.n != n):
                continue
            return cell.power
        raise KeyError(f"no cell for scenario={scenario} test={test} delta={delta} m={m} n={n}")

    def to_rows(self) -> list[list[str]]:
        return [c.to_row() for c in self.cells]

    def write_csv(self, path: str | Path) -> Path:
        out = Path(path)
        write_csv_rows(out, POWER_CSV_HEADER, self.to_rows())
        return out


def _build_tests(config: PowerStudyConfig, cache_dir: Path | None, log: LogFn) -> dict[str, TwoSampleTest]:
    return {
        spec.label: TwoSampleTest(
            statistic=spec.statistic,
            null_model=spec.null_model,
            tie_policy=config.tie_policy,
            seed=config.seed,
            cache_dir=cache_dir,
            mixture_samples=config.mixture_samples,
            label=spec.label,
            log=log,
        )
        for spec in config.tests
    }


def _prepare_nulls(tests: dict[str, TwoSampleTest], cells: Sequence[ScenarioCell]) -> dict[str, bool]:
    """Build every tabulated null and mixture tail before replicates run concurrently."""
    hits: dict[str, bool] = {}
    for cell in cells:
        for label in cell.tests:
            test = tests[label]
            kind = test.null_model.kind
            if kind in {NullModelKind.EXACT, NullModelKind.MC}:
                _, hit = test.null_for(cell.m, cell.n)
                hits[f"{label}:m{cell.m}:n{cell.n}"] = hit
            elif kind is NullModelKind.ASYMPTOTIC:
                test.mixture_tail()
    return hits


def _run_chunk(
    config: PowerStudyConfig,
    tests: dict[str, TwoSampleTest],
    cell_index: int,
    cell: ScenarioCell,
    replicates: range,
    log: LogFn,
) -> np.ndarray:
    rejections = np.zeros(len(cell.tests), dtype=np.int64)
    for r in replicates:
        rng = derive_rng(config.seed, STREAM_POWER, cell_index, r)
        x = draw_sample(cell.x, cell.m, rng)
        y = draw_sample(cell.y, cell.n, rng)
        for t, label in enumerate(cell.tests):
            perm_seed = derive_seed(config.seed, STREAM_POWER, cell_index, r, t)
            try:
                outcome = tests[label].run(x, y, seed=perm_seed)
            except Rank2sError as exc:
                log(f"replicate failed: scenario={cell.scenario} delta={cell.delta_text} rep={r} test={label}: {exc}")
                raise
            if outcome.rejects(config.alpha):
                rejections[t] += 1
        if config.progress_every and (r + 1) % config.progress_every == 0:
            log(f"  {cell.scenario} delta={cell.delta_text} m={cell.m} n={cell.n}: replicate {r + 1}/{config.iterations}")
    return rejections


def run_power_study(
    config: PowerStudyConfig,
    *,
    cache_dir: str | Path | None = None,
    log: LogFn | None = None,
) -> PowerStudyResult:
    """Rejection fractions of every configured test on every scenario cell.

    Replicate r of cell c draws its data from stream (seed, c, r), and its
    permutation seeds from (seed, c, r, test), so the result depends only on
    the config and never on ``config.workers``. A failing replicate aborts the
    study.
    """
    log = log or null_log
    started = time.time()
    tests = _build_tests(config, Path(cache_dir) if cache_dir is not None else None, log)
    cells = config.cells()
    cache_hits = _prepare_nulls(tests, cells)
    chunks = chunk_ranges(config.iterations, REPLICATE_CHUNK)

    results: list[PowerCell] = []
    for cell_index, cell in enumerate(cells):
        cell_started = time.time()
        parts = parallel_map(
            lambda reps: _run_chunk(config, tests, cell_index, cell, reps, log),
            chunks,
            config.workers,
        )
        totals = np.sum(parts, axis=0)
        for label, count in zip(cell.tests, totals):
            results.append(PowerCell(cell.scenario, cell.m, cell.n, cell.delta, label, int(count), config.iterations))
        summary = " ".join(f"{label}={int(count) / config.iterations:.3f}" for label, count in zip(cell.tests, totals))
        log(
            f"{cell.scenario} delta={cell.delta_text or '-'} m={cell.m} n={cell.n}: {summary} "
            f"({format_duration(time.time() - cell_started)})"
        )

    return PowerStudyResult(
        cells=results,
        seed=config.seed,
        iterations=config.iterations,
        alpha=config.alpha,
        config_hash=hash_jsonable(config.describe()),
        elapsed_seconds=time.time() - started,
        null_cache_hits=cache_hits,
    )


def build_run_metadata(
    result: PowerStudyResult,
    config: PowerStudyConfig,
    *,
    config_path: str | None,
    git_commit: str | None,
) -> dict[str, Any]:
    return {
        "study": config.name,
        "resolved_config_hash": result.config_hash,
        "config_path": config_path,
        "config_file_hash": hash_file_contents(config_path) if config_path else None,
        "git_commit": git_commit,
        "seed": result.seed,
        "iterations": result.iterations,
        "alpha": result.alpha,
        "elapsed": format_duration(result.elapsed_seconds),
        "null_cache_hits": dict(result.null_cache_hits),
        "csv": POWER_CSV_FILENAME,
    }


def write_power_outputs(
    result: PowerStudyResult,
    config: PowerStudyConfig,
    output_dir: str | Path,
    *,
    config_path: str | None = None,
    repo_root: str | Path | None = None,
) -> tuple[Path, Path]:
    """``power.csv`` plus ``run_metadata.json`` in ``output_dir``."""
    out_dir = Path(output_dir)
    csv_path = result.write_csv(out_dir / POWER_CSV_FILENAME)
    metadata_path = out_dir / RUN_METADATA_FILENAME
    git_commit = resolve_git_commit(repo_root) if repo_root is not None else None
    write_json(metadata_path, build_run_metadata(result, config, config_path=config_path, git_commit=git_commit))
    return csv_path, metadata_path
