"""Local single-process extra-trees oracle.

Re-derives the tree construction of a one-client, no-privacy session
directly from the documented randomness contract, independently of the
protocol engines: per tree, one seed draw from the client stream for the
subsample; per non-stopped node, one candidate draw from the master
stream, then one client-stream draw per non-constant candidate feature;
with a single client the proposal interval collapses to a point, so the
master consumes no threshold draws. Node order is depth-first, left
before right. Impurity formulas follow the documented definitions so
gains match bit for bit.
"""

from __future__ import annotations

import math

import numpy as np

from fedtrees.dataset import DataShard, subsample_indices
from fedtrees.forest import Internal, Leaf
from fedtrees.rand import client_stream, draw_open_interval, draw_seed, master_stream

PURITY_STOP = 0.999


def _gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.dot(p, p))


def _gain(left: np.ndarray, right: np.ndarray) -> float:
    combined = left + right
    total = combined.sum()
    if total <= 0:
        return 0.0
    n_l = left.sum()
    n_r = right.sum()
    if n_l <= 0 or n_r <= 0:
        return 0.0
    return float(
        _gini(combined) - (n_l / total) * _gini(left) - (n_r / total) * _gini(right)
    )


class LocalExtraTrees:
    """Replays the session RNG decisions on one local shard."""

    def __init__(self, shard: DataShard, config):
        if config.clients != 1:
            raise ValueError("the local oracle models a single-client session")
        self.shard = shard
        self.config = config
        self.n_classes = shard.label_space.n_classes
        if config.candidate_count is not None:
            self.k = config.candidate_count
        else:
            f = shard.n_features
            self.k = min(f, max(1, math.ceil(math.sqrt(f))))

    def build(self) -> list:
        m_rng = master_stream(self.config.master_seed)
        c_rng = client_stream(self.config.master_seed, self.shard.client_id)
        trees = []
        for _ in range(self.config.trees):
            seed = draw_seed(c_rng)
            rows = subsample_indices(
                self.shard.n, self.config.subsample_fraction, seed
            )
            trees.append(self._build_node(rows, 0, m_rng, c_rng))
        return trees

    def _counts(self, rows: np.ndarray) -> np.ndarray:
        return np.bincount(
            self.shard.labels[rows], minlength=self.n_classes
        ).astype(np.float64)

    def _stop(self, depth: int, counts: np.ndarray) -> bool:
        if depth >= self.config.max_depth:
            return True
        total = counts.sum()
        if total < self.config.min_samples_leaf:
            return True
        return total > 0 and counts.max() / total >= PURITY_STOP

    def _leaf(self, counts: np.ndarray) -> Leaf:
        return Leaf([float(c) for c in counts], int(np.argmax(counts)))

    def _build_node(self, rows, depth, m_rng, c_rng):
        counts = self._counts(rows)
        if self._stop(depth, counts):
            return self._leaf(counts)
        candidates = np.sort(
            m_rng.choice(self.shard.n_features, size=self.k, replace=False)
        )
        usable = []
        for f in candidates:
            column = self.shard.rows[rows, int(f)]
            lo = float(column.min())
            hi = float(column.max())
            if lo == hi:
                continue
            v = draw_open_interval(c_rng, lo, hi)
            if v is not None:
                # one client: the coordinator's interval is the single point v
                usable.append((int(f), v))
        if not usable:
            return self._leaf(counts)
        best = None
        partitions = {}
        for f, v in usable:
            mask = self.shard.rows[rows, f] < v
            left_rows = rows[mask]
            right_rows = rows[~mask]
            partitions[f] = (left_rows, right_rows)
            gain = max(0.0, _gain(self._counts(left_rows), self._counts(right_rows)))
            if best is None or gain > best[2]:
                best = (f, v, gain)
        f_star, v_star, _ = best
        left_rows, right_rows = partitions[f_star]
        return Internal(
            f_star,
            v_star,
            self._build_node(left_rows, depth + 1, m_rng, c_rng),
            self._build_node(right_rows, depth + 1, m_rng, c_rng),
        )
