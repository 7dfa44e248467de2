#!/usr/bin/env python3
"""Variance ratios, upper quantiles of Z_d and approximated critical values of T."""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from rank2s.data.io import write_csv_rows
from rank2s.null.asymptotic import critical_value_table, spec_from_cache, store_spec
from rank2s.null.distribution import attained_size, critical_value_from_null
from rank2s.null.engines import exact_null
from rank2s.utils.cache import resolve_cache_dir
from rank2s.utils.config import load_yaml_config, section
from rank2s.utils.run_metadata import format_duration, make_run_logger


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Rebuild the asymptotic critical value table of T.")
    parser.add_argument("--config", default=str(PROJECT_ROOT / "configs" / "default.yaml"))
    parser.add_argument("--output", default=str(PROJECT_ROOT / "outputs" / "critical_values" / "critical_values.csv"))
    parser.add_argument("--sample-count", type=int, default=None, help="Override mixture.sample_count.")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--cache-dir", default=None)
    parser.add_argument("--log-file", default=None, help="Defaults to <output dir>/run.log.")
    return parser.parse_args()


def main() -> int:
    args = parse_args()
    cfg = load_yaml_config(args.config)
    mixture_cfg = section(cfg, "mixture")
    table_cfg = section(cfg, "critical_values")
    alpha = float(table_cfg.get("alpha", 0.05))
    orders = [int(d) for d in table_cfg.get("orders", [1, 2, 4, 10, 100])]
    sizes = [(int(m), int(n)) for m, n in table_cfg.get("sizes", [[50, 50], [7, 7]])]
    sample_count = int(args.sample_count or mixture_cfg.get("sample_count", 10_000_000))

    output = Path(args.output)
    log = make_run_logger(args.log_file or output.parent / "run.log")
    quantile_cache = resolve_cache_dir(args.cache_dir) / "mixture_quantiles.csv"

    started = time.time()
    specs = []
    for d in orders:
        spec = spec_from_cache(quantile_cache, d, sample_count, args.seed)
        hit = alpha in spec.quantile_cache
        q = spec.quantile(alpha)
        store_spec(quantile_cache, spec)
        log(f"d={d}: q={q:.4f} ({'cached' if hit else 'sampled'}, {format_duration(time.time() - started)})")
        specs.append(spec)

    rows = critical_value_table(specs, alpha=alpha, sizes=sizes)
    header = ["d", "variance_ratio", "quantile", *[f"c_m{m}_n{n}" for m, n in sizes]]
    write_csv_rows(output, header, ([f"{row[key]:.4f}" if key != "d" else row[key] for key in header] for row in rows))
    log(f"wrote {output}")

    # True sizes of the approximated critical values for the small designs.
    for m, n in [s for s in sizes if s[0] + s[1] <= 20]:
        null = exact_null(m, n)
        exact_c = critical_value_from_null(alpha, null)
        log(f"m={m} n={n} exact: c={exact_c:.4f} attained size={attained_size(exact_c, null):.4f}")
        for row in rows:
            c = row[f"c_m{m}_n{n}"]
            log(f"m={m} n={n} d={row['d']}: c={c:.4f} attained size={attained_size(c, null):.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
