"""Coordinator engine: drives the synchronized tree-building recursion.

The master owns all structural decisions (candidate features, split
thresholds, best splits, stopping) but never sees raw rows; it works on
the perturbed label aggregates the clients return. Clients and master
walk the same depth-first recursion keyed by NodeId, so any divergence
surfaces as a protocol violation rather than silent corruption.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .. import ldp
from ..dataset import FeatureMeta, LabelSpace
from ..forest import Forest, Internal, Leaf, TreeNode, best_split, majority_index, split_gain, tree_depth
from ..rand import draw_open_interval, master_stream
from .messages import (
    AGG_BITS,
    AGG_EXACT,
    AGG_NOISY,
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
    SessionEnd,
    SplitCounts,
    StopQuery,
    ThresholdBroadcast,
    TreeBegin,
    TreeEnd,
)
from .session import SessionConfig
from .transport import LinkError

log = logging.getLogger(__name__)

PURITY_STOP = 0.999
REG_LAMBDA_SCALE = 0.01


def stopping_condition(depth: int, estimate: ldp.LabelCountEstimate, config: SessionConfig) -> bool:
    """Node-level stop rule: depth cap, estimated sample floor, or purity."""
    if depth >= config.max_depth:
        return True
    total = estimate.total
    if total < config.min_samples_leaf * config.clients:
        return True
    if total > 0 and estimate.counts.max() / total >= PURITY_STOP:
        return True
    return False


@dataclass
class MasterResult:
    forest: Forest
    tree_depths: list[int]
    epsilon: float | None


class MasterEngine:
    def __init__(self, config: SessionConfig, links: list):
        if len(links) != config.clients:
            raise ProtocolViolation(
                "bad-session", f"expected {config.clients} links, got {len(links)}"
            )
        self.config = config
        self.sid = config.session_id()
        self._raw_links = links
        self.links: list = []
        self.rng = master_stream(config.master_seed)
        self.n_features = 0
        self.feature_metas: list[FeatureMeta] = []
        self.label_space: LabelSpace | None = None

    def run(self) -> MasterResult:
        try:
            self._handshake()
            trees: list[TreeNode] = []
            for p in range(self.config.trees):
                trees.append(self._build_tree(p))
            self._broadcast(SessionEnd(self.sid))
            depths = [tree_depth(t) for t in trees]
            forest = Forest(
                trees=trees,
                feature_metas=self.feature_metas,
                label_space=self.label_space,
                training_config=self.config.snapshot(),
            )
            epsilon = ldp.session_epsilon(
                self.config.epsilon_node, depths, self.config.clients, self.config.privacy_mode
            )
            return MasterResult(forest, depths, epsilon)
        except (ProtocolViolation, LinkError, ldp.LdpError):
            self._abort("protocol-error", "session aborted by master")
            raise

    # -- plumbing ---------------------------------------------------------

    def _abort(self, code: str, detail: str) -> None:
        for link in self.links or self._raw_links:
            try:
                link.send(ErrorMsg(self.sid, code, detail))
            except Exception:
                pass

    def _broadcast(self, msg) -> None:
        for link in self.links:
            link.send(msg)

    def _gather(self, expected: type, node: NodeId | None = None) -> list:
        out = []
        for cid, link in enumerate(self.links):
            msg = link.recv(timeout=self.config.timeout_s)
            if isinstance(msg, ErrorMsg):
                raise ProtocolViolation(msg.code, f"client {cid}: {msg.detail}")
            if not isinstance(msg, expected):
                raise ProtocolViolation(
                    "out-of-order",
                    f"client {cid} sent {type(msg).__name__}, expected {expected.__name__}",
                )
            if msg.sid != self.sid:
                raise ProtocolViolation("bad-session", f"client {cid} session id mismatch")
            if node is not None and msg.node != node:
                raise ProtocolViolation(
                    "unknown-node",
                    f"client {cid} answered for {msg.node.encode()}, expected {node.encode()}",
                )
            out.append(msg)
        return out

    def _handshake(self) -> None:
        slots: dict[int, object] = {}
        hellos: dict[int, ClientHello] = {}
        for link in self._raw_links:
            msg = link.recv(timeout=self.config.timeout_s)
            if not isinstance(msg, ClientHello):
                raise ProtocolViolation("out-of-order", "expected client hello")
            if msg.sid != self.sid:
                raise ProtocolViolation("bad-session", "hello session id mismatch")
            if msg.client_id in slots:
                raise ProtocolViolation("bad-session", f"duplicate client id {msg.client_id}")
            slots[msg.client_id] = link
            hellos[msg.client_id] = msg
        expected_ids = set(range(self.config.clients))
        if set(slots) != expected_ids:
            raise ProtocolViolation(
                "bad-session", f"client ids {sorted(slots)} != {sorted(expected_ids)}"
            )
        first = hellos[0]
        for cid in range(self.config.clients):
            h = hellos[cid]
            if h.features != first.features or h.classes != first.classes:
                self._abort("schema-mismatch", f"client {cid} schema disagrees with client 0")
                raise ProtocolViolation(
                    "schema-mismatch", f"client {cid} schema disagrees with client 0"
                )
        if first.n_classes < 2:
            log.warning("session label space has %d class", first.n_classes)
        self.links = [slots[cid] for cid in range(self.config.clients)]
        self.n_features = first.n_features
        self.feature_metas = [FeatureMeta.from_dict(dict(f)) for f in first.features]
        self.label_space = LabelSpace(list(first.classes))
        log.info(
            "session %s: %d clients, %d features, %d classes, %d total rows",
            self.sid,
            self.config.clients,
            self.n_features,
            first.n_classes,
            sum(h.n for h in hellos.values()),
        )

    # -- decoding ---------------------------------------------------------

    def _decode_groups(self, groups: list[list[LabelAggregate]]) -> list[ldp.LabelCountEstimate]:
        mode = self.config.privacy_mode
        n_classes = self.label_space.n_classes
        if mode == ldp.MODE_LDP:
            merged = []
            for group in groups:
                vectors = []
                for agg in group:
                    if agg.kind != AGG_BITS:
                        raise ProtocolViolation("bad-aggregate", f"expected bit sums, got {agg.kind}")
                    vectors.append(ldp.BitCountVector(np.asarray(agg.values), agg.n))
                merged.append(ldp.merge_counts(vectors))
            lams = [REG_LAMBDA_SCALE * m.n for m in merged]
            return ldp.decode_counts_batch(
                merged, self.config.bloom, self.config.rr, self.label_space, lams
            )
        expected_kind = AGG_NOISY if mode == ldp.MODE_GDP else AGG_EXACT
        out = []
        for group in groups:
            total = np.zeros(n_classes, dtype=np.float64)
            for agg in group:
                if agg.kind != expected_kind:
                    raise ProtocolViolation(
                        "bad-aggregate", f"expected {expected_kind}, got {agg.kind}"
                    )
                if len(agg.values) != n_classes:
                    raise ProtocolViolation("bad-aggregate", "class count length mismatch")
                total += np.asarray(agg.values, dtype=np.float64)
            if mode == ldp.MODE_GDP:
                total = np.clip(total, 0.0, None)
            out.append(ldp.LabelCountEstimate(total, float(total.sum())))
        return out

    # -- recursion --------------------------------------------------------

    def _build_tree(self, tree_index: int) -> TreeNode:
        self._broadcast(TreeBegin(self.sid, tree_index))
        root = NodeId(tree_index)
        root_estimate = self._leaf_round(root)
        node = self._build_node(root, root_estimate, estimate_is_fresh=True)
        self._broadcast(TreeEnd(self.sid, tree_index))
        return node

    def _leaf_round(self, node: NodeId) -> ldp.LabelCountEstimate:
        self._broadcast(StopQuery(self.sid, node))
        replies = self._gather(LeafCounts, node)
        return self._decode_groups([[r.agg for r in replies]])[0]

    def _make_leaf(self, node: NodeId, estimate: ldp.LabelCountEstimate) -> Leaf:
        counts = [float(c) for c in estimate.counts]
        majority = majority_index(estimate.counts)
        self._broadcast(LeafLabel(self.sid, node, tuple(counts), majority))
        return Leaf(counts, majority)

    def _build_node(
        self, node: NodeId, estimate: ldp.LabelCountEstimate, estimate_is_fresh: bool
    ) -> TreeNode:
        if stopping_condition(node.depth, estimate, self.config):
            leaf_estimate = estimate if estimate_is_fresh else self._leaf_round(node)
            return self._make_leaf(node, leaf_estimate)

        candidates = np.sort(
            self.rng.choice(self.n_features, size=self._candidate_count, replace=False)
        )
        candidates = tuple(int(f) for f in candidates)
        self._broadcast(FeatureCandidates(self.sid, node, candidates))
        proposals = self._gather(RangeProposal, node)
        thresholds = self._pick_thresholds(node, candidates, proposals)
        if not thresholds:
            # every candidate is constant on every client: nothing to split on
            return self._make_leaf(node, self._leaf_round(node))

        self._broadcast(ThresholdBroadcast(self.sid, node, tuple(thresholds)))
        replies = self._gather(SplitCounts, node)
        groups: list[list[LabelAggregate]] = []
        for pos, (feature, _) in enumerate(thresholds):
            for reply_pos, msg in enumerate(replies):
                if len(msg.entries) != len(thresholds) or msg.entries[pos][0] != feature:
                    raise ProtocolViolation(
                        "out-of-order", f"client {reply_pos} split counts misaligned"
                    )
            groups.append([msg.entries[pos][1] for msg in replies])
            groups.append([msg.entries[pos][2] for msg in replies])
        estimates = self._decode_groups(groups)

        scored = []
        sides = {}
        for pos, (feature, threshold) in enumerate(thresholds):
            left, right = estimates[2 * pos], estimates[2 * pos + 1]
            gain = max(0.0, split_gain(left.counts, right.counts))
            scored.append((feature, threshold, gain))
            sides[feature] = (left, right)
        f_star, v_star = best_split(scored)
        self._broadcast(BestSplit(self.sid, node, f_star, v_star))
        left_est, right_est = sides[f_star]
        left = self._build_node(node.child("L"), left_est, estimate_is_fresh=False)
        right = self._build_node(node.child("R"), right_est, estimate_is_fresh=False)
        return Internal(f_star, v_star, left, right)

    def _pick_thresholds(
        self, node: NodeId, candidates: tuple, proposals: list[RangeProposal]
    ) -> list[tuple[int, float]]:
        thresholds = []
        for pos, feature in enumerate(candidates):
            values = []
            for cid, msg in enumerate(proposals):
                if len(msg.proposals) != len(candidates) or msg.proposals[pos].feature != feature:
                    raise ProtocolViolation(
                        "out-of-order", f"client {cid} proposals misaligned at {node.encode()}"
                    )
                p = msg.proposals[pos]
                if not p.degenerate and p.value is not None:
                    values.append(p.value)
            if not values:
                continue
            lo, hi = min(values), max(values)
            if lo == hi:
                # single usable proposal (or exact agreement): the value is
                # already strictly inside some client's local range
                thresholds.append((feature, lo))
                continue
            v = draw_open_interval(self.rng, lo, hi)
            if v is not None:
                thresholds.append((feature, v))
        return thresholds

    @property
    def _candidate_count(self) -> int:
        return self.config.resolve_candidates(self.n_features)
