#!/usr/bin/env python3
from __future__ import annotations

import argparse
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


TEST_COLORS = {
    "T": "#355070",
    "CT": "#0E8A6A",
    "W": "#D9A404",
    "M": "#B56576",
    "KS": "#7B61A8",
    "TM": "#E56B6F",
}


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Plot power against delta from a rank2s power.csv.")
    parser.add_argument("power_csv", type=Path, help="power.csv written by `rank2s power`.")
    parser.add_argument(
        "--output",
        type=Path,
        default=None,
        help="Output PNG path. Defaults to power_curves.png next to the CSV.",
    )
    parser.add_argument("--alpha", type=float, default=0.05, help="Nominal level drawn as a reference line.")
    return parser.parse_args()


def load_power_rows(path: Path) -> dict[tuple[str, str, str], dict[str, list[tuple[float, float, float, float]]]]:
    """(scenario, m, n) -> test -> [(delta, power, ci_low, ci_high)] for rows with a numeric delta."""
    panels: dict[tuple[str, str, str], dict[str, list[tuple[float, float, float, float]]]] = defaultdict(
        lambda: defaultdict(list)
    )
    with path.open("r", encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            if not row["delta"]:
                continue
            panels[(row["scenario"], row["m"], row["n"])][row["test"]].append(
                (float(row["delta"]), float(row["power"]), float(row["ci_low"]), float(row["ci_high"]))
            )
    return panels


def build_plot(panels: dict, alpha: float) -> plt.Figure:
    keys = sorted(panels)
    cols = min(3, len(keys))
    rows = int(np.ceil(len(keys) / cols))
    fig, axes = plt.subplots(rows, cols, figsize=(4.2 * cols, 3.4 * rows), squeeze=False)

    for ax, key in zip(axes.flat, keys):
        scenario, m, n = key
        for test, points in sorted(panels[key].items()):
            points.sort()
            deltas = [p[0] for p in points]
            power = [p[1] for p in points]
            low = [p[2] for p in points]
            high = [p[3] for p in points]
            color = TEST_COLORS.get(test)
            ax.plot(deltas, power, marker="o", markersize=3.5, linewidth=1.3, label=test, color=color)
            ax.fill_between(deltas, low, high, alpha=0.15, color=color, linewidth=0)
        ax.axhline(alpha, color="#999999", linewidth=0.8, linestyle="--")
        ax.set_ylim(0.0, 1.02)
        ax.set_title(f"{scenario} (m={m}, n={n})", fontsize=9)
        ax.set_xlabel("delta")
        ax.set_ylabel("power")
        ax.grid(color="#DDDDDD", linewidth=0.6)
        ax.legend(frameon=False, fontsize=7)

    for ax in list(axes.flat)[len(keys):]:
        ax.axis("off")
    fig.tight_layout()
    return fig


def main() -> int:
    args = parse_args()
    power_csv = args.power_csv.resolve()
    if not power_csv.exists():
        raise FileNotFoundError(f"Power CSV not found: {power_csv}")

    panels = load_power_rows(power_csv)
    if not panels:
        raise ValueError(f"No rows with a numeric delta in {power_csv}")

    output = (args.output or power_csv.with_name("power_curves.png")).resolve()
    output.parent.mkdir(parents=True, exist_ok=True)
    fig = build_plot(panels, args.alpha)
    fig.savefig(output, dpi=200)
    plt.close(fig)
    print(f"wrote {output}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
