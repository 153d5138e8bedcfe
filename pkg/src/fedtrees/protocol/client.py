"""Data-holder engine: answers the master's rounds over one shard.

The client is purely reactive. It keeps a node-id -> row-index map for
the tree under construction, proposes thresholds drawn strictly inside
its local feature ranges, caches candidate partitions so the committed
split reuses them, and emits label information only through the
configured perturbation (bit sums under LDP, Laplace-noised counts
under GDP, exact counts otherwise). It finishes holding the same
forest as the master.
"""

from __future__ import annotations

import logging

import numpy as np

from .. import ldp
from .._kernels import bit_column_counts
from ..dataset import DataShard, subsample_indices
from ..forest import Forest, Internal, Leaf, TreeNode
from ..rand import client_stream, draw_open_interval, draw_seed
from .messages import (
    BestSplit,
    ClientHello,
    ErrorMsg,
    FeatureCandidates,
    LabelAggregate,
    LeafCounts,
    LeafLabel,
    NodeId,
    ProtocolViolation,
    RangeProposal,
    RangeValue,
    SessionEnd,
    SplitCounts,
    StopQuery,
    ThresholdBroadcast,
    TreeBegin,
    TreeEnd,
    freeze_meta,
)
from .session import SessionConfig

log = logging.getLogger(__name__)


class ClientEngine:
    def __init__(self, config: SessionConfig, shard: DataShard, link):
        self.config = config
        self.shard = shard
        self.link = link
        self.sid = config.session_id()
        self.rng = client_stream(config.master_seed, shard.client_id)
        self._n_classes = shard.label_space.n_classes
        self._permanent_bits: np.ndarray | None = None
        if config.privacy_mode == ldp.MODE_LDP:
            # the permanent layer is fixed once per session and reused by
            # every node query on every tree
            table = ldp.bloom_table(self._n_classes, config.bloom)
            self._permanent_bits = ldp.permanent_rr(
                table[shard.labels], config.rr.pr, self.rng
            )
        self._node_rows: dict[NodeId, np.ndarray] = {}
        self._partitions: dict[tuple[NodeId, int], tuple[np.ndarray, np.ndarray]] = {}
        self._records: dict[str, tuple] = {}
        self._trees: list[TreeNode] = []
        self._current_tree = -1

    def start(self) -> None:
        """Open the session by announcing this client's schema."""
        self.link.send(self._hello())

    def handle(self, msg) -> Forest | None:
        """Process one master message; returns the forest on session end.

        Raises ProtocolViolation (after reporting it to the master) on any
        break of the lockstep contract.
        """
        if isinstance(msg, ErrorMsg):
            # the master aborted; don't echo its error back
            raise ProtocolViolation(msg.code, msg.detail)
        try:
            if getattr(msg, "sid", self.sid) != self.sid:
                raise ProtocolViolation("bad-session", "session id mismatch")
            if isinstance(msg, SessionEnd):
                return self._finish()
            self._dispatch(msg)
            return None
        except ProtocolViolation as e:
            self._report(e.code, e.detail)
            raise
        except Exception as e:
            self._report("client-error", str(e))
            raise

    def run(self) -> Forest:
        """Blocking message loop for transports with their own wire."""
        self.start()
        while True:
            forest = self.handle(self.link.recv(timeout=self.config.timeout_s))
            if forest is not None:
                return forest

    # -- message handling --------------------------------------------------

    def _dispatch(self, msg) -> None:
        if isinstance(msg, TreeBegin):
            self._begin_tree(msg.tree)
        elif isinstance(msg, StopQuery):
            rows = self._rows(msg.node)
            self.link.send(LeafCounts(self.sid, msg.node, self._aggregate(rows)))
        elif isinstance(msg, FeatureCandidates):
            self._propose_ranges(msg.node, msg.features)
        elif isinstance(msg, ThresholdBroadcast):
            self._split_counts(msg.node, msg.thresholds)
        elif isinstance(msg, BestSplit):
            self._commit_split(msg.node, msg.feature, msg.threshold)
        elif isinstance(msg, LeafLabel):
            self._rows(msg.node)
            self._records[msg.node.path] = ("leaf", list(msg.class_counts), msg.majority)
            self._forget(msg.node)
        elif isinstance(msg, TreeEnd):
            self._end_tree(msg.tree)
        else:
            raise ProtocolViolation("out-of-order", f"unexpected {type(msg).__name__}")

    def _begin_tree(self, tree: int) -> None:
        if tree != self._current_tree + 1 or self._node_rows:
            raise ProtocolViolation("out-of-order", f"unexpected tree begin {tree}")
        self._current_tree = tree
        rows = subsample_indices(
            self.shard.n, self.config.subsample_fraction, draw_seed(self.rng)
        )
        self._node_rows = {NodeId(tree): rows}
        self._records = {}

    def _end_tree(self, tree: int) -> None:
        if tree != self._current_tree:
            raise ProtocolViolation("out-of-order", f"unexpected tree end {tree}")
        if "" not in self._records:
            raise ProtocolViolation("out-of-order", "tree ended before its root resolved")
        self._trees.append(self._assemble(""))
        self._node_rows = {}
        self._partitions = {}
        self._records = {}

    def _propose_ranges(self, node: NodeId, features: tuple) -> None:
        rows = self._rows(node)
        proposals = []
        for f in features:
            if f < 0 or f >= self.shard.n_features:
                raise ProtocolViolation("bad-feature", f"feature {f} out of range")
            if rows.size == 0:
                proposals.append(RangeValue(int(f), None, degenerate=True))
                continue
            column = self.shard.rows[rows, f]
            lo = float(column.min())
            hi = float(column.max())
            if lo == hi:
                proposals.append(RangeValue(int(f), lo, degenerate=True))
                continue
            v = draw_open_interval(self.rng, lo, hi)
            if v is None:
                proposals.append(RangeValue(int(f), lo, degenerate=True))
            else:
                proposals.append(RangeValue(int(f), v, degenerate=False))
        self.link.send(RangeProposal(self.sid, node, tuple(proposals)))

    def _split_counts(self, node: NodeId, thresholds: tuple) -> None:
        rows = self._rows(node)
        sides = []
        for f, v in thresholds:
            mask = self.shard.rows[rows, f] < v
            left = rows[mask]
            right = rows[~mask]
            self._partitions[(node, f)] = (left, right)
            sides.extend((left, right))
        if self.config.privacy_mode == ldp.MODE_LDP:
            aggs = self._ldp_aggregate_batch(sides)
        else:
            aggs = [self._aggregate(s) for s in sides]
        entries = tuple(
            (int(f), aggs[2 * i], aggs[2 * i + 1])
            for i, (f, _) in enumerate(thresholds)
        )
        self.link.send(SplitCounts(self.sid, node, entries))

    def _commit_split(self, node: NodeId, feature: int, threshold: float) -> None:
        self._rows(node)
        try:
            left, right = self._partitions[(node, feature)]
        except KeyError:
            raise ProtocolViolation(
                "unknown-node", f"no cached partition for {node.encode()} feature {feature}"
            ) from None
        self._node_rows[node.child("L")] = left
        self._node_rows[node.child("R")] = right
        self._records[node.path] = ("split", int(feature), float(threshold))
        self._forget(node)

    def _forget(self, node: NodeId) -> None:
        del self._node_rows[node]
        for key in [k for k in self._partitions if k[0] == node]:
            del self._partitions[key]

    def _rows(self, node: NodeId) -> np.ndarray:
        if node.tree != self._current_tree:
            raise ProtocolViolation("unknown-node", f"{node.encode()} is not in the open tree")
        try:
            return self._node_rows[node]
        except KeyError:
            raise ProtocolViolation("unknown-node", node.encode()) from None

    # -- label aggregation -------------------------------------------------

    def _aggregate(self, rows: np.ndarray) -> LabelAggregate:
        mode = self.config.privacy_mode
        if mode == ldp.MODE_LDP:
            ones = bit_column_counts(self._permanent_bits, rows)
            sums = ldp.instant_rr_sums(
                ones, rows.size, self.config.rr.xi, self.config.rr.zeta, self.rng
            )
            return LabelAggregate.bits(sums, rows.size)
        counts = np.bincount(self.shard.labels[rows], minlength=self._n_classes)
        if mode == ldp.MODE_GDP:
            noisy = ldp.laplace_perturb(counts, self.config.epsilon_node, self.rng)
            return LabelAggregate.noisy(noisy)
        return LabelAggregate.exact(counts)

    def _ldp_aggregate_batch(self, row_sets: list[np.ndarray]) -> list[LabelAggregate]:
        # one pair of binomial draws for a whole node round
        ones = np.stack([bit_column_counts(self._permanent_bits, r) for r in row_sets])
        ns = np.array([[r.size] for r in row_sets], dtype=np.int64)
        sums = ldp.instant_rr_sums(
            ones, ns, self.config.rr.xi, self.config.rr.zeta, self.rng
        )
        return [
            LabelAggregate.bits(row, int(n)) for row, n in zip(sums, ns[:, 0])
        ]

    # -- assembly ----------------------------------------------------------

    def _hello(self) -> ClientHello:
        return ClientHello(
            sid=self.sid,
            client_id=self.shard.client_id,
            n=self.shard.n,
            features=tuple(freeze_meta(m.to_dict()) for m in self.shard.feature_metas),
            classes=tuple(self.shard.label_space.classes),
        )

    def _assemble(self, path: str) -> TreeNode:
        try:
            record = self._records[path]
        except KeyError:
            raise ProtocolViolation("out-of-order", f"node {path!r} never resolved") from None
        if record[0] == "leaf":
            return Leaf(record[1], record[2])
        _, feature, threshold = record
        return Internal(
            feature, threshold, self._assemble(path + "L"), self._assemble(path + "R")
        )

    def _finish(self) -> Forest:
        if self._node_rows:
            raise ProtocolViolation("out-of-order", "session ended mid-tree")
        log.info("client %d finished with %d trees", self.shard.client_id, len(self._trees))
        return Forest(
            trees=self._trees,
            feature_metas=self.shard.feature_metas,
            label_space=self.shard.label_space,
            training_config=self.config.snapshot(),
        )

    def _report(self, code: str, detail: str) -> None:
        try:
            self.link.send(ErrorMsg(self.sid, code, detail))
        except Exception:
            pass
