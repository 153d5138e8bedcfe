"""Synthetic dataset generators for experiments and tests."""

from __future__ import annotations

import numpy as np

from .dataset import DataShard, FeatureMeta, LabelSpace


def _shard_from_arrays(x: np.ndarray, y: np.ndarray, classes: list[str]) -> DataShard:
    metas = [FeatureMeta(f"x{i}", i) for i in range(x.shape[1])]
    return DataShard(
        rows=np.asarray(x, dtype=np.float64),
        labels=np.asarray(y, dtype=np.int64),
        client_id=0,
        feature_metas=metas,
        label_space=LabelSpace(classes),
    )


def make_waveform(n: int = 5000, seed: int = 0) -> DataShard:
    """Classic three-class waveform task: 21 attributes, each class a random
    convex combination of two of three shifted triangular base waves plus
    unit Gaussian noise. This is the generator behind the standard public
    waveform-5000 file, so fresh draws follow the same distribution."""
    rng = np.random.default_rng(seed)
    t = np.arange(1, 22, dtype=np.float64)
    base = np.stack(
        [
            np.maximum(6.0 - np.abs(t - 7.0), 0.0),
            np.maximum(6.0 - np.abs(t - 15.0), 0.0),
            np.maximum(6.0 - np.abs(t - 11.0), 0.0),
        ]
    )
    pairs = [(0, 1), (0, 2), (1, 2)]
    y = rng.integers(0, 3, size=n)
    u = rng.random(n)
    x = np.empty((n, 21))
    for c, (a, b) in enumerate(pairs):
        mask = y == c
        x[mask] = np.outer(u[mask], base[a]) + np.outer(1.0 - u[mask], base[b])
    x += rng.normal(0.0, 1.0, size=x.shape)
    return _shard_from_arrays(x, y, ["wave0", "wave1", "wave2"])


def make_blobs(
    n: int = 200,
    n_features: int = 5,
    n_classes: int = 2,
    spread: float = 1.0,
    seed: int = 0,
) -> DataShard:
    """Gaussian class clusters; easy enough that a shallow forest separates
    them, noisy enough that splits are non-trivial."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 2.0, size=(n_classes, n_features))
    y = rng.integers(0, n_classes, size=n)
    x = centers[y] + rng.normal(0.0, spread, size=(n, n_features))
    classes = [f"c{i}" for i in range(n_classes)]
    return _shard_from_arrays(x, y, classes)
