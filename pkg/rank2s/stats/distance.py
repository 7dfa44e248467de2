"""Between-minus-within combinations of a pooled pairwise distance matrix.

Both the energy statistic (distances between raw observations) and the spatial
rank statistic (distances between spatial ranks) have the form

    (mn/N) * [ mean_xy d - 1/2 * mean_xx d - 1/2 * mean_yy d ]

with the within-group means taken over all m^2 (n^2) ordered pairs including
the zero diagonal. Working from a precomputed N x N matrix makes relabelling
cheap: only the group masks change between permutation replicates.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist


def pooled_distance_matrix(points: np.ndarray) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return cdist(arr, arr, metric="euclidean")


def energy_combination(dist: np.ndarray, is_x: np.ndarray) -> float:
    mask = np.asarray(is_x, dtype=bool)
    return float(energy_combination_batch(dist, mask[None, :])[0])


def energy_combination_batch(dist: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """Vectorized :func:`energy_combination` over a (B, N) stack of X-membership masks."""
    w = np.asarray(masks, dtype=float)
    N = w.shape[1]
    m = w.sum(axis=1)
    n = N - m
    v = 1.0 - w

    dw = w @ dist
    s_xx = np.einsum("bi,bi->b", dw, w)
    s_xy = np.einsum("bi,bi->b", dw, v)
    s_yy = np.einsum("bi,bi->b", v @ dist, v)

    between = s_xy / (m * n)
    within_x = s_xx / (2.0 * m * m)
    within_y = s_yy / (2.0 * n * n)
    return (m * n / N) * (between - within_x - within_y)
