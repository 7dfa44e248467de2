from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from rank2s.data.ranking import RankedPool, pool_and_rank

DATA_DIR = Path(__file__).resolve().parent / "data"
CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"

# x = (0, 2), y = (1, 3): ranks {1, 3} vs {2, 4}
EXAMPLE_X = (0.0, 2.0)
EXAMPLE_Y = (1.0, 3.0)


def example_pool() -> RankedPool:
    return pool_and_rank(EXAMPLE_X, EXAMPLE_Y)


def random_pool(rng: np.random.Generator, m: int, n: int) -> RankedPool:
    """Tie-free pool of continuous draws."""
    values = rng.standard_normal(m + n)
    return pool_and_rank(values[:m], values[m:])


def pool_from_x_ranks(x_ranks: Sequence[int], N: int) -> RankedPool:
    """Pool whose X group holds the natural ranks ``x_ranks`` out of 1..N; the values are the ranks."""
    is_x = np.zeros(N, dtype=bool)
    is_x[np.asarray(x_ranks, dtype=np.int64) - 1] = True
    ranks = np.arange(1, N + 1, dtype=float)
    return pool_and_rank(ranks[is_x], ranks[~is_x])


def data_path(name: str) -> Path:
    return DATA_DIR / name


def small_power_config(iterations: int = 100, seed: int = 7) -> dict:
    """Two-test, two-delta normal location study that runs in a few seconds."""
    return {
        "study": {
            "name": "tiny",
            "iterations": iterations,
            "alpha": 0.05,
            "seed": seed,
            "workers": 1,
        },
        "tests": [
            {"label": "W", "statistic": "Wilcoxon"},
            {"label": "KS", "statistic": "KS"},
        ],
        "scenarios": [
            {
                "name": "normal_location",
                "x": {"family": "normal"},
                "y": {"family": "normal"},
                "vary": {"param": "mu", "mode": "offset", "sample": "y"},
                "deltas": [0.0, 1.0],
                "sizes": [[20, 20]],
            }
        ],
    }
