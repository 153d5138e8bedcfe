"""Locally differentially private label-count aggregation.

Labels never leave a client in the clear. Each sample's class index is
mapped to an h-bit Bloom string, perturbed once per session by a
*permanent* randomized response (each bit kept with probability ``pr``,
otherwise replaced by a fair coin), and, on every query, perturbed
again by an *instant* randomized response that emits 1 with probability
``xi`` when the permanent bit is 1 and ``zeta`` when it is 0. Clients
transmit only per-bit sums of instant strings plus the contributing
sample count; the coordinator merges the sums and decodes per-class
counts.

Decoding bias correction
------------------------
Let x_t be the number of samples whose *original* Bloom bit t is 1.
Composing the two response layers gives, for a single sample,

    P(bit t reported 1 | original 1) = q_eff = xi*(1+pr)/2 + zeta*(1-pr)/2
    P(bit t reported 1 | original 0) = p_eff = xi*(1-pr)/2 + zeta*(1+pr)/2

because the permanent layer leaves a 1-bit set with probability
pr + (1-pr)/2 = (1+pr)/2 and flips a 0-bit on with probability
(1-pr)/2. Hence E[Sum_t] = x_t*q_eff + (n-x_t)*p_eff and

    y_t = (Sum_t - n*p_eff) / (q_eff - p_eff),    q_eff - p_eff = pr*(xi - zeta)

is an unbiased estimate of x_t. Stacking the per-class Bloom strings
as columns of a design matrix M gives y ~ M c with c the per-class
counts, solved as a non-negative L1-regularized least squares problem.
Identifiability requires pr > 0 and xi > zeta.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import _kernels
from .dataset import LabelSpace

CD_TOL = 1e-6
CD_MAX_SWEEPS = 10_000

MODE_NONE = "none"
MODE_LDP = "ldp"
MODE_GDP = "gdp"
PRIVACY_MODES = (MODE_NONE, MODE_LDP, MODE_GDP)


class LdpError(Exception):
    """Raised for non-identifiable or inconsistent privacy parameters."""


@dataclass(frozen=True)
class BloomParams:
    h: int  # bit-string length
    m: int  # number of hash functions
    hash_seed: int

    def __post_init__(self):
        if self.h < 1:
            raise LdpError(f"bloom length must be >= 1, got {self.h}")
        if not 1 <= self.m <= self.h:
            raise LdpError(f"hash count must be in [1, {self.h}], got {self.m}")


@dataclass(frozen=True)
class RrParams:
    pr: float  # permanent keep probability
    xi: float  # instant P(1 | permanent bit 1)
    zeta: float  # instant P(1 | permanent bit 0)

    def __post_init__(self):
        if not 0.0 <= self.pr <= 1.0:
            raise LdpError(f"pr must be in [0,1], got {self.pr}")
        if not (0.0 <= self.xi <= 1.0 and 0.0 <= self.zeta <= 1.0):
            raise LdpError("xi and zeta must be in [0,1]")
        if self.xi <= self.zeta:
            raise LdpError(f"need xi > zeta for identifiability, got {self.xi} <= {self.zeta}")


@dataclass
class BitCountVector:
    """Per-bit sums of instant response strings plus the sample count."""

    sums: np.ndarray  # (h,) int64
    n: int

    def __post_init__(self):
        self.sums = np.asarray(self.sums, dtype=np.int64)
        if self.sums.ndim != 1:
            raise LdpError("bit sums must be one-dimensional")
        if self.n < 0:
            raise LdpError("sample count must be non-negative")
        if self.sums.size and (self.sums.min() < 0 or self.sums.max() > self.n):
            raise LdpError("bit sums must lie in [0, n]")

    @property
    def h(self) -> int:
        return int(self.sums.shape[0])


@dataclass
class LabelCountEstimate:
    counts: np.ndarray  # (L,) float64, non-negative
    n: float

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.float64)

    @property
    def total(self) -> float:
        return float(self.counts.sum())


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon_node: float
    max_depth: int
    trees: int
    clients: int
    mode: str = MODE_LDP

    def __post_init__(self):
        if self.epsilon_node <= 0:
            raise LdpError(f"epsilon_node must be > 0, got {self.epsilon_node}")
        if self.max_depth < 1:
            raise LdpError("max_depth must be >= 1")


def _bloom_bit(hash_seed: int, hash_index: int, label_index: int, h: int) -> int:
    digest = hashlib.sha256(
        struct.pack(">qqq", hash_seed, hash_index, label_index)
    ).digest()
    return int.from_bytes(digest[:8], "big") % h


def bloom_encode(label_index: int, params: BloomParams) -> np.ndarray:
    """Deterministic h-bit Bloom encoding of a class index (uint8 0/1)."""
    bits = np.zeros(params.h, dtype=np.uint8)
    for j in range(params.m):
        bits[_bloom_bit(params.hash_seed, j, label_index, params.h)] = 1
    return bits


def bloom_table(n_classes: int, params: BloomParams) -> np.ndarray:
    """(L, h) matrix whose rows are the per-class Bloom encodings."""
    return np.stack([bloom_encode(i, params) for i in range(n_classes)])


def permanent_rr(bits: np.ndarray, pr: float, rng: np.random.Generator) -> np.ndarray:
    """Permanent randomized response: keep each bit with probability pr,
    otherwise replace it with a fair coin. Shape-preserving; the result is
    memoized by callers and reused for every subsequent query."""
    bits = np.asarray(bits, dtype=np.uint8)
    keep = rng.random(bits.shape) < pr
    coin = rng.integers(0, 2, size=bits.shape, dtype=np.uint8)
    return np.where(keep, bits, coin).astype(np.uint8)


def instant_rr(
    permanent_bits: np.ndarray, xi: float, zeta: float, rng: np.random.Generator
) -> np.ndarray:
    """Instant randomized response: per-bit Bernoulli(xi) where the permanent
    bit is 1, Bernoulli(zeta) where it is 0. Fresh randomness per query."""
    permanent_bits = np.asarray(permanent_bits, dtype=np.uint8)
    probs = np.where(permanent_bits == 1, xi, zeta)
    return (rng.random(permanent_bits.shape) < probs).astype(np.uint8)


def instant_rr_sums(
    ones_per_bit: np.ndarray,
    n: int | np.ndarray,
    xi: float,
    zeta: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Per-bit sum of n instant response strings, drawn directly.

    Given that ones_per_bit[t] of the n permanent bits at position t are 1,
    the sum of the instant bits is Binomial(ones, xi) + Binomial(n - ones,
    zeta); sampling it directly is distributionally identical to summing n
    per-sample strings and avoids generating n*h bits. Accepts a stack of
    rows with per-row n for batched queries.
    """
    ones = np.asarray(ones_per_bit, dtype=np.int64)
    zeros = np.broadcast_to(np.asarray(n, dtype=np.int64), ones.shape) - ones
    if np.any(zeros < 0):
        raise LdpError("per-bit one-counts exceed the sample count")
    if ones.size == 0:
        return np.zeros(ones.shape, dtype=np.int64)
    return (rng.binomial(ones, xi) + rng.binomial(zeros, zeta)).astype(np.int64)


def aggregate_counts(
    instant_strings: Sequence[np.ndarray] | np.ndarray, h: int | None = None
) -> BitCountVector:
    """Sum instant response strings bitwise into a BitCountVector."""
    if isinstance(instant_strings, np.ndarray) and instant_strings.ndim == 2:
        mat = instant_strings
    else:
        strings = list(instant_strings)
        if not strings:
            if h is None:
                raise LdpError("empty aggregation needs an explicit bit length")
            return BitCountVector(np.zeros(h, dtype=np.int64), 0)
        mat = np.stack(strings)
    return BitCountVector(mat.sum(axis=0, dtype=np.int64), int(mat.shape[0]))


def merge_counts(vectors: Sequence[BitCountVector]) -> BitCountVector:
    """Elementwise sum of per-client bit-count vectors."""
    vectors = list(vectors)
    if not vectors:
        raise LdpError("cannot merge zero count vectors")
    h = vectors[0].h
    for v in vectors[1:]:
        if v.h != h:
            raise LdpError(f"mismatched bit lengths: {v.h} != {h}")
    sums = np.zeros(h, dtype=np.int64)
    n = 0
    for v in vectors:
        sums += v.sums
        n += v.n
    return BitCountVector(sums, n)


@lru_cache(maxsize=32)
def _design(params: BloomParams, n_classes: int):
    m = bloom_table(n_classes, params).astype(np.float64).T  # (h, L)
    gram = m.T @ m
    rank = int(np.linalg.matrix_rank(m))
    return m, gram, rank


def decode_counts(
    merged: BitCountVector,
    bloom: BloomParams,
    rr: RrParams,
    labels: LabelSpace,
    reg_lambda: float,
) -> LabelCountEstimate:
    """Estimate per-class counts from merged bit sums.

    Bias-corrects each bit sum for the two response layers, then solves a
    non-negative L1-penalized least squares against the Bloom design matrix
    by cyclic coordinate descent, and clips the result to [0, n].
    """
    if merged.n < 1:
        raise LdpError("decode requires at least one contributing sample")
    if reg_lambda < 0:
        raise LdpError("reg_lambda must be >= 0")
    design, gram, rank = _design(bloom, labels.n_classes)
    if merged.h != bloom.h:
        raise LdpError(f"bit length mismatch: {merged.h} != {bloom.h}")
    if reg_lambda == 0.0 and rank < labels.n_classes:
        raise LdpError(
            "bloom design matrix is rank-deficient; decoding needs reg_lambda > 0"
        )
    y = debias_bit_sums(merged, rr)
    rhs = design.T @ y
    coef, _ = _kernels.nnls_l1_cd(gram, rhs, float(reg_lambda), CD_TOL, CD_MAX_SWEEPS)
    counts = np.clip(coef, 0.0, float(merged.n))
    return LabelCountEstimate(counts, float(merged.n))


def decode_counts_batch(
    merged_list: Sequence[BitCountVector],
    bloom: BloomParams,
    rr: RrParams,
    labels: LabelSpace,
    reg_lambdas: Sequence[float],
) -> list[LabelCountEstimate]:
    """Decode several merged bit-count vectors against the shared design in
    one solver call. Matches decode_counts entry by entry; vectors with no
    contributing samples decode to all-zero estimates."""
    merged_list = list(merged_list)
    if len(merged_list) != len(reg_lambdas):
        raise LdpError("one reg_lambda per vector required")
    results: list[LabelCountEstimate | None] = [None] * len(merged_list)
    design, gram, rank = _design(bloom, labels.n_classes)
    live: list[int] = []
    for i, merged in enumerate(merged_list):
        if merged.h != bloom.h:
            raise LdpError(f"bit length mismatch: {merged.h} != {bloom.h}")
        if merged.n == 0:
            results[i] = LabelCountEstimate(np.zeros(labels.n_classes), 0.0)
        else:
            if reg_lambdas[i] == 0.0 and rank < labels.n_classes:
                raise LdpError(
                    "bloom design matrix is rank-deficient; decoding needs reg_lambda > 0"
                )
            live.append(i)
    if live:
        ys = np.stack([debias_bit_sums(merged_list[i], rr) for i in live])
        rhs = ys @ design  # (k, L)
        lams = np.asarray([float(reg_lambdas[i]) for i in live])
        coefs = _kernels.nnls_l1_cd_multi(gram, rhs, lams, CD_TOL, CD_MAX_SWEEPS)
        for row, i in enumerate(live):
            n = merged_list[i].n
            results[i] = LabelCountEstimate(np.clip(coefs[row], 0.0, float(n)), float(n))
    return results  # type: ignore[return-value]


def debias_bit_sums(merged: BitCountVector, rr: RrParams) -> np.ndarray:
    """Unbiased per-bit estimates of the true Bloom one-counts."""
    q_eff = rr.xi * (1 + rr.pr) / 2 + rr.zeta * (1 - rr.pr) / 2
    p_eff = rr.xi * (1 - rr.pr) / 2 + rr.zeta * (1 + rr.pr) / 2
    denom = q_eff - p_eff
    if denom <= 0:
        raise LdpError(
            f"response layers are non-identifiable (pr={rr.pr}, xi={rr.xi}, zeta={rr.zeta})"
        )
    return (merged.sums.astype(np.float64) - merged.n * p_eff) / denom


def laplace_perturb(
    true_counts: Sequence[int] | np.ndarray, epsilon_node: float, rng: np.random.Generator
) -> np.ndarray:
    """Laplace mechanism over a class-count vector, sensitivity 1."""
    if epsilon_node <= 0:
        raise LdpError(f"epsilon_node must be > 0, got {epsilon_node}")
    counts = np.asarray(true_counts, dtype=np.float64)
    return counts + rng.laplace(0.0, 1.0 / epsilon_node, size=counts.shape)


def epsilon_per_layer_count(depth: int) -> int:
    """Number of sequentially composed query layers for a tree of a given
    depth: one per split level plus one leaf-level layer."""
    return depth + 1


def epsilon_per_tree(budget: PrivacyBudget) -> float:
    """Worst-case per-tree budget: one query layer per split level plus the
    leaf layer, each costing epsilon_node (same-layer nodes hold disjoint
    rows, so they compose in parallel)."""
    return budget.epsilon_node * epsilon_per_layer_count(budget.max_depth)


def epsilon_total(per_tree_per_client: Sequence[Sequence[float]]) -> float:
    """Sequential composition across trees of the per-tree maximum across
    clients (clients hold disjoint samples)."""
    matrix = [list(row) for row in per_tree_per_client]
    if not matrix or any(not row for row in matrix):
        raise LdpError("budget matrix must be non-empty")
    width = len(matrix[0])
    if any(len(row) != width for row in matrix):
        raise LdpError("budget matrix rows must have equal length")
    return float(sum(max(row) for row in matrix))


def session_epsilon(
    epsilon_node: float, tree_depths: Sequence[int], clients: int, mode: str
) -> float | None:
    """Total budget actually spent by a finished session, using the
    realized depth of each tree. None when no perturbation was applied."""
    if mode == MODE_NONE:
        return None
    matrix = [
        [epsilon_node * epsilon_per_layer_count(d)] * clients for d in tree_depths
    ]
    return epsilon_total(matrix)
