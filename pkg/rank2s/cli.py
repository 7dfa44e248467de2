"""``rank2s`` command line: test, mtest, null, critval and power subcommands.

Exit codes: 0 when the command ran (whatever the decision), 2 for input
errors, 3 for infeasible requests such as an oversized exact enumeration.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from rank2s import __version__
from rank2s.data.io import read_column, read_points, write_csv_rows, write_json
from rank2s.data.schema import OUTCOME_SCHEMA_VERSION, StatisticKind, TiePolicy
from rank2s.errors import EnumerationTooLarge, Rank2sError, UnsupportedStatistic
from rank2s.inference import NullModel, NullModelKind, TwoSampleTest, default_null_model, obtain_null
from rank2s.null.asymptotic import (
    DEFAULT_MIXTURE_ORDER,
    DEFAULT_MIXTURE_SAMPLES,
    MixtureSpec,
    critical_value_asymptotic,
    moments_T,
    spec_from_cache,
    store_spec,
)
from rank2s.null.distribution import attained_size, critical_value_from_null
from rank2s.null.engines import DEFAULT_ENUMERATION_CAP
from rank2s.stats.multivariate import permutation_pvalue_TM
from rank2s.utils.cache import resolve_cache_dir
from rank2s.utils.config import apply_overrides, load_yaml_config
from rank2s.utils.run_metadata import format_duration, make_run_logger

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_INFEASIBLE = 3
MIXTURE_CACHE_FILENAME = "mixture_quantiles.csv"
PROJECT_ROOT = Path(__file__).resolve().parents[1]


def _add_common(parser: argparse.ArgumentParser, *, cache: bool = True) -> None:
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1, help="Worker cap; results do not depend on it.")
    parser.add_argument("--output", default=None, help="Also write the result to this path.")
    if cache:
        parser.add_argument(
            "--cache-dir",
            default=None,
            help="Null/quantile cache folder. Defaults to $RANK2S_CACHE, then the user cache folder.",
        )
        parser.add_argument("--no-cache", action="store_true", help="Neither read nor write cached nulls.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rank2s", description="Rank-based two-sample tests.")
    parser.add_argument("--version", action="version", version=f"rank2s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_test = sub.add_parser("test", help="Univariate two-sample test on two single-column files.")
    p_test.add_argument("x_file")
    p_test.add_argument("y_file")
    p_test.add_argument("--statistic", default="T", help="T, Tprime, Dhat, CvM, KS, Wilcoxon, Mood, Energy, TM")
    p_test.add_argument(
        "--null",
        default=None,
        help="exact, mc[:reps], asymptotic[:d], normal, ks or permutation[:B]. Default depends on the statistic.",
    )
    p_test.add_argument("--alpha", type=float, default=0.05)
    p_test.add_argument("--tie-policy", choices=[p.value for p in TiePolicy], default=TiePolicy.REJECT.value)
    p_test.add_argument("--enumeration-cap", type=int, default=DEFAULT_ENUMERATION_CAP)
    _add_common(p_test)

    p_mtest = sub.add_parser("mtest", help="Spatial rank permutation test on two CSV point files.")
    p_mtest.add_argument("x_file")
    p_mtest.add_argument("y_file")
    p_mtest.add_argument("--B", type=int, default=499, dest="permutations")
    p_mtest.add_argument("--alpha", type=float, default=0.05)
    _add_common(p_mtest, cache=False)

    p_null = sub.add_parser("null", help="Tabulate the null distribution of a rank statistic.")
    p_null.add_argument("--m", type=int, required=True)
    p_null.add_argument("--n", type=int, required=True)
    p_null.add_argument("--statistic", default="T")
    p_null.add_argument("--null", default="exact", help="exact or mc[:reps]")
    p_null.add_argument("--enumeration-cap", type=int, default=DEFAULT_ENUMERATION_CAP)
    _add_common(p_null)

    p_crit = sub.add_parser("critval", help="Critical value of T (or another rank statistic) at level alpha.")
    p_crit.add_argument("--m", type=int, required=True)
    p_crit.add_argument("--n", type=int, required=True)
    p_crit.add_argument("--alpha", type=float, default=0.05)
    p_crit.add_argument("--method", choices=["exact", "mc", "asymptotic"], default="exact")
    p_crit.add_argument("--statistic", default="T")
    p_crit.add_argument("--d", type=int, default=DEFAULT_MIXTURE_ORDER, help="Mixture truncation order.")
    p_crit.add_argument("--reps", type=int, default=100_000, help="Monte-Carlo null replicates.")
    p_crit.add_argument("--mixture-samples", type=int, default=DEFAULT_MIXTURE_SAMPLES)
    p_crit.add_argument("--enumeration-cap", type=int, default=DEFAULT_ENUMERATION_CAP)
    _add_common(p_crit)

    p_power = sub.add_parser("power", help="Run a power study from a YAML config.")
    p_power.add_argument("config")
    p_power.add_argument("--output-dir", default=None, help="Defaults to outputs/<study name>.")
    p_power.add_argument("--iterations", type=int, default=None, help="Override study.iterations.")
    p_power.add_argument("--progress-every", type=int, default=None)
    p_power.add_argument("--log-file", default=None, help="Defaults to <output_dir>/run.log.")
    p_power.add_argument("--seed", type=int, default=None, help="Override study.seed.")
    p_power.add_argument("--threads", type=int, default=None)
    p_power.add_argument("--cache-dir", default=None)
    p_power.add_argument("--no-cache", action="store_true")
    return parser


def _cache_dir(args: argparse.Namespace) -> Path | None:
    if getattr(args, "no_cache", False):
        return None
    return resolve_cache_dir(getattr(args, "cache_dir", None))


def _emit(payload: dict[str, Any], output: str | None) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))
    if output:
        write_json(output, payload)


def cmd_test(args: argparse.Namespace) -> int:
    statistic = StatisticKind.parse(args.statistic)
    null_model = NullModel.parse(args.null) if args.null else default_null_model(statistic)
    test = TwoSampleTest(
        statistic=statistic,
        null_model=null_model,
        tie_policy=TiePolicy(args.tie_policy),
        seed=args.seed,
        cache_dir=_cache_dir(args),
        workers=args.threads,
        enumeration_cap=args.enumeration_cap,
    )
    outcome = test.run(read_column(args.x_file), read_column(args.y_file))
    _emit(outcome.to_dict(args.alpha), args.output)
    return EXIT_OK


def cmd_mtest(args: argparse.Namespace) -> int:
    outcome = permutation_pvalue_TM(
        read_points(args.x_file),
        read_points(args.y_file),
        B=args.permutations,
        seed=args.seed,
        workers=args.threads,
    )
    _emit(outcome.to_dict(args.alpha), args.output)
    return EXIT_OK


def cmd_null(args: argparse.Namespace) -> int:
    model = NullModel.parse(args.null)
    null, cache_hit = obtain_null(
        args.statistic,
        args.m,
        args.n,
        model,
        seed=args.seed,
        cache_dir=_cache_dir(args),
        workers=args.threads,
        cap=args.enumeration_cap,
    )
    rows = null.to_rows()
    if args.output:
        write_csv_rows(
            args.output,
            ["value", "probability", "upper_tail"],
            ([repr(r["value"]), repr(r["probability"]), repr(r["upper_tail"])] for r in rows),
        )
    payload = {
        "schema_version": OUTCOME_SCHEMA_VERSION,
        "statistic": null.statistic.value,
        "null_model": model.label,
        "m": null.m,
        "n": null.n,
        "total": null.total,
        "support_size": int(null.values.size),
        "mean": null.mean(),
        "variance": null.variance(),
        "cache_hit": cache_hit,
    }
    if args.output:
        payload["output"] = str(args.output)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_critval(args: argparse.Namespace) -> int:
    payload: dict[str, Any] = {
        "schema_version": OUTCOME_SCHEMA_VERSION,
        "statistic": StatisticKind.parse(args.statistic).value,
        "alpha": args.alpha,
        "m": args.m,
        "n": args.n,
        "method": args.method,
    }
    cache_dir = _cache_dir(args)
    if args.method == "asymptotic":
        if StatisticKind.parse(args.statistic) not in {StatisticKind.T, StatisticKind.CVM}:
            raise UnsupportedStatistic(f"asymptotic critical values exist for T and CvM only, got {args.statistic}")
        quantile_path = cache_dir / MIXTURE_CACHE_FILENAME if cache_dir is not None else None
        if quantile_path is not None:
            spec = spec_from_cache(quantile_path, args.d, args.mixture_samples, args.seed)
        else:
            spec = MixtureSpec(d=args.d, sample_count=args.mixture_samples, seed=args.seed)
        cache_hit = float(args.alpha) in spec.quantile_cache
        critical = critical_value_asymptotic(args.alpha, args.m, args.n, args.d, spec)
        if quantile_path is not None and not cache_hit:
            store_spec(quantile_path, spec)
        moments = moments_T(args.m, args.n)
        payload.update(
            {
                "critical_value": critical,
                "d": args.d,
                "quantile": spec.quantile(args.alpha),
                "mean": moments.mean,
                "sd": moments.sd,
                "sample_count": args.mixture_samples,
                "seed": args.seed,
                "cache_hit": cache_hit,
            }
        )
    else:
        kind = NullModelKind.EXACT if args.method == "exact" else NullModelKind.MC
        model = NullModel(kind, None if kind is NullModelKind.EXACT else args.reps)
        null, cache_hit = obtain_null(
            args.statistic,
            args.m,
            args.n,
            model,
            seed=args.seed,
            cache_dir=cache_dir,
            workers=args.threads,
            cap=args.enumeration_cap,
        )
        critical = critical_value_from_null(args.alpha, null)
        payload.update(
            {
                "critical_value": critical,
                "attained_size": attained_size(critical, null),
                "null_model": model.label,
                "seed": null.seed,
                "cache_hit": cache_hit,
            }
        )
    _emit(payload, args.output)
    return EXIT_OK


def cmd_power(args: argparse.Namespace) -> int:
    # Deferred so the lighter subcommands do not import the simulation stack.
    from rank2s.sim.power import PowerStudyConfig, run_power_study, write_power_outputs

    cfg = apply_overrides(
        load_yaml_config(args.config),
        {
            "study.iterations": args.iterations,
            "study.seed": args.seed,
            "study.workers": args.threads,
            "study.progress_every": args.progress_every,
        },
    )
    config = PowerStudyConfig.from_mapping(cfg)

    output_dir = Path(args.output_dir or Path("outputs") / config.name)
    log = make_run_logger(args.log_file or output_dir / "run.log")
    log(f"power study {config.name}: iterations={config.iterations} seed={config.seed} alpha={config.alpha}")
    result = run_power_study(config, cache_dir=_cache_dir(args), log=log)
    csv_path, metadata_path = write_power_outputs(
        result,
        config,
        output_dir,
        config_path=str(args.config),
        repo_root=PROJECT_ROOT,
    )
    max_se = max((cell.se for cell in result.cells), default=0.0)
    log(
        f"wrote {csv_path} and {metadata_path} in {format_duration(result.elapsed_seconds)}; "
        f"seed={result.seed} max_se={max_se:.4f}"
    )
    return EXIT_OK


_COMMANDS = {
    "test": cmd_test,
    "mtest": cmd_mtest,
    "null": cmd_null,
    "critval": cmd_critval,
    "power": cmd_power,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    alpha = getattr(args, "alpha", None)
    if alpha is not None and not 0.0 < alpha < 1.0:
        print(f"error: --alpha must lie in (0, 1), got {alpha}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    try:
        return _COMMANDS[args.command](args)
    except (EnumerationTooLarge, UnsupportedStatistic) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (Rank2sError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
