from __future__ import annotations

import numpy as np


def seed_sequence(seed: int, *keys: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for the substream ``keys`` of ``seed``.

    Streams depend only on (seed, keys), never on how work is split across
    workers, so parallel and serial runs draw identical numbers.
    """
    return np.random.default_rng(seed_sequence(seed, *keys))


def derive_seed(seed: int, *keys: int) -> int:
    return int(seed_sequence(seed, *keys).generate_state(1, dtype=np.uint32)[0])


# Stream tags keep unrelated consumers of one user seed apart.
STREAM_MC_NULL = 1
STREAM_PERMUTATION = 2
STREAM_MIXTURE = 3
STREAM_POWER = 4
