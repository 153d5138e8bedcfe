"""Deterministic RNG streams for reproducible sessions.

Every source of randomness in a training session derives from the
session master seed through tagged ``SeedSequence`` entropy, so a run
is fully determined by its config regardless of transport or thread
scheduling. Stream tags: 1 = master engine, 2 = per-client engines,
3 = data sharding, 4 = evaluation harness.
"""

from __future__ import annotations

import numpy as np

_MASTER_TAG = 1
_CLIENT_TAG = 2
_SHARD_TAG = 3
_EVAL_TAG = 4


def master_stream(master_seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((master_seed, _MASTER_TAG)))


def client_stream(master_seed: int, client_id: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence((master_seed, _CLIENT_TAG, client_id))
    )


def shard_seed(master_seed: int) -> int:
    seq = np.random.SeedSequence((master_seed, _SHARD_TAG))
    return int(seq.generate_state(1, np.uint64)[0])


def repeat_seeds(base_seed: int, repeat: int) -> tuple[int, int]:
    """(split_seed, master_seed) pair for one repetition of an experiment."""
    seq = np.random.SeedSequence((base_seed, _EVAL_TAG, repeat))
    state = seq.generate_state(2, np.uint64)
    return int(state[0]), int(state[1])


def draw_seed(rng: np.random.Generator) -> int:
    """Draw a 63-bit seed for a derived operation from an existing stream."""
    return int(rng.integers(0, 2**63, dtype=np.int64))


def draw_open_interval(rng: np.random.Generator, lo: float, hi: float) -> float | None:
    """Uniform draw strictly inside (lo, hi).

    Returns None when the open interval contains no representable float
    (lo >= hi, or lo and hi are adjacent). Always consumes exactly one
    draw when lo < hi, so callers replaying a stream stay aligned.
    """
    if not lo < hi:
        return None
    v = float(rng.uniform(lo, hi))
    if v <= lo:
        v = float(np.nextafter(lo, hi))
    if v >= hi:
        v = float(np.nextafter(hi, lo))
    if not lo < v < hi:
        return None
    return v
