"""Wire message catalog and length-prefixed frame codec.

Every message is a tagged JSON object carrying the session id and, where
applicable, the node id, so master and clients can detect any divergence
in their synchronized recursion. Frames are a 4-byte big-endian length
prefix followed by the UTF-8 JSON body.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

MAX_FRAME_BYTES = 16 * 1024 * 1024

AGG_BITS = "bits"
AGG_EXACT = "exact"
AGG_NOISY = "noisy"


class FrameError(Exception):
    """Raised for malformed, oversized, or truncated frames."""


class ProtocolViolation(Exception):
    """Raised when a peer breaks the lockstep message contract."""

    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code
        self.detail = detail


@dataclass(frozen=True)
class NodeId:
    """Tree index plus the L/R path from the root; identical on both sides
    of the recursion by construction."""

    tree: int
    path: str = ""

    def child(self, side: str) -> "NodeId":
        return NodeId(self.tree, self.path + side)

    @property
    def depth(self) -> int:
        return len(self.path)

    def encode(self) -> str:
        return f"{self.tree}:{self.path}"

    @classmethod
    def decode(cls, s: str) -> "NodeId":
        tree, _, path = s.partition(":")
        if not tree.isdigit() or set(path) - {"L", "R"}:
            raise FrameError(f"malformed node id {s!r}")
        return cls(int(tree), path)


@dataclass(frozen=True)
class LabelAggregate:
    """A client's perturbed label statistics for one row subset.

    kind "bits": per-bit sums of instant response strings plus the sample
    count; "exact": clear class counts (no privacy); "noisy": Laplace-
    perturbed class counts.
    """

    kind: str
    values: tuple
    n: int | None = None

    def __post_init__(self):
        if self.kind not in (AGG_BITS, AGG_EXACT, AGG_NOISY):
            raise ProtocolViolation("bad-aggregate", f"unknown kind {self.kind!r}")
        if self.kind == AGG_BITS and self.n is None:
            raise ProtocolViolation("bad-aggregate", "bit sums need a sample count")

    @classmethod
    def bits(cls, sums, n: int) -> "LabelAggregate":
        if hasattr(sums, "tolist"):
            return cls(AGG_BITS, tuple(sums.tolist()), int(n))
        return cls(AGG_BITS, tuple(int(v) for v in sums), int(n))

    @classmethod
    def exact(cls, counts) -> "LabelAggregate":
        return cls(AGG_EXACT, tuple(int(v) for v in counts))

    @classmethod
    def noisy(cls, counts) -> "LabelAggregate":
        return cls(AGG_NOISY, tuple(float(v) for v in counts))

    def to_obj(self) -> dict:
        obj = {"kind": self.kind, "values": list(self.values)}
        if self.n is not None:
            obj["n"] = self.n
        return obj

    @classmethod
    def from_obj(cls, obj: dict) -> "LabelAggregate":
        kind = obj["kind"]
        if kind == AGG_BITS:
            return cls.bits(obj["values"], obj["n"])
        if kind == AGG_EXACT:
            return cls.exact(obj["values"])
        return cls.noisy(obj["values"])


@dataclass(frozen=True)
class RangeValue:
    """One client's threshold proposal for one candidate feature. Degenerate
    marks a constant (or empty) local column; value is the constant, or None
    for an empty row subset."""

    feature: int
    value: float | None
    degenerate: bool = False

    def to_obj(self) -> dict:
        return {"f": self.feature, "v": self.value, "deg": self.degenerate}

    @classmethod
    def from_obj(cls, obj: dict) -> "RangeValue":
        v = obj["v"]
        return cls(int(obj["f"]), None if v is None else float(v), bool(obj["deg"]))


_REGISTRY: dict[str, type] = {}


def _register(cls):
    _REGISTRY[cls.TYPE] = cls
    return cls


def _node_field(obj):
    return NodeId.decode(obj["node"])


@_register
@dataclass(frozen=True)
class ClientHello:
    TYPE = "client_hello"
    sid: str
    client_id: int
    n: int
    features: tuple  # feature meta dicts, schema agreement checked by master
    classes: tuple  # ordered class names

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def to_obj(self) -> dict:
        return {
            "type": self.TYPE,
            "sid": self.sid,
            "client_id": self.client_id,
            "n": self.n,
            "features": [dict(f) for f in self.features],
            "classes": list(self.classes),
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "ClientHello":
        return cls(
            sid=obj["sid"],
            client_id=int(obj["client_id"]),
            n=int(obj["n"]),
            features=tuple(freeze_meta(f) for f in obj["features"]),
            classes=tuple(str(c) for c in obj["classes"]),
        )


def freeze_meta(d: dict):
    # feature metas travel as dicts; store hashable snapshots
    return tuple(sorted((k, tuple(v) if isinstance(v, list) else v) for k, v in d.items()))


@_register
@dataclass(frozen=True)
class TreeBegin:
    TYPE = "tree_begin"
    sid: str
    tree: int

    def to_obj(self) -> dict:
        return {"type": self.TYPE, "sid": self.sid, "tree": self.tree}

    @classmethod
    def from_obj(cls, obj: dict) -> "TreeBegin":
        return cls(obj["sid"], int(obj["tree"]))


@_register
@dataclass(frozen=True)
class StopQuery:
    TYPE = "stop_query"
    sid: str
    node: NodeId

    def to_obj(self) -> dict:
        return {"type": self.TYPE, "sid": self.sid, "node": self.node.encode()}

    @classmethod
    def from_obj(cls, obj: dict) -> "StopQuery":
        return cls(obj["sid"], _node_field(obj))


@_register
@dataclass(frozen=True)
class LeafCounts:
    TYPE = "leaf_counts"
    sid: str
    node: NodeId
    agg: LabelAggregate

    def to_obj(self) -> dict:
        return {
            "type": self.TYPE,
            "sid": self.sid,
            "node": self.node.encode(),
            "agg": self.agg.to_obj(),
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "LeafCounts":
        return cls(obj["sid"], _node_field(obj), LabelAggregate.from_obj(obj["agg"]))


@_register
@dataclass(frozen=True)
class LeafLabel:
    TYPE = "leaf_label"
    sid: str
    node: NodeId
    class_counts: tuple
    majority: int

    def to_obj(self) -> dict:
        return {
            "type": self.TYPE,
            "sid": self.sid,
            "node": self.node.encode(),
            "class_counts": [float(c) for c in self.class_counts],
            "majority": self.majority,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "LeafLabel":
        return cls(
            obj["sid"],
            _node_field(obj),
            tuple(float(c) for c in obj["class_counts"]),
            int(obj["majority"]),
        )


@_register
@dataclass(frozen=True)
class FeatureCandidates:
    TYPE = "feature_candidates"
    sid: str
    node: NodeId
    features: tuple

    def to_obj(self) -> dict:
        return {
            "type": self.TYPE,
            "sid": self.sid,
            "node": self.node.encode(),
            "features": [int(f) for f in self.features],
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "FeatureCandidates":
        return cls(obj["sid"], _node_field(obj), tuple(int(f) for f in obj["features"]))


@_register
@dataclass(frozen=True)
class RangeProposal:
    TYPE = "range_proposal"
    sid: str
    node: NodeId
    proposals: tuple  # RangeValue per candidate feature, in candidate order

    def to_obj(self) -> dict:
        return {
            "type": self.TYPE,
            "sid": self.sid,
            "node": self.node.encode(),
            "proposals": [p.to_obj() for p in self.proposals],
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "RangeProposal":
        return cls(
            obj["sid"],
            _node_field(obj),
            tuple(RangeValue.from_obj(p) for p in obj["proposals"]),
        )


@_register
@dataclass(frozen=True)
class ThresholdBroadcast:
    TYPE = "threshold_broadcast"
    sid: str
    node: NodeId
    thresholds: tuple  # (feature, threshold) pairs for the splittable candidates

    def to_obj(self) -> dict:
        return {
            "type": self.TYPE,
            "sid": self.sid,
            "node": self.node.encode(),
            "thresholds": [{"f": int(f), "v": float(v)} for f, v in self.thresholds],
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "ThresholdBroadcast":
        return cls(
            obj["sid"],
            _node_field(obj),
            tuple((int(t["f"]), float(t["v"])) for t in obj["thresholds"]),
        )


@_register
@dataclass(frozen=True)
class SplitCounts:
    TYPE = "split_counts"
    sid: str
    node: NodeId
    entries: tuple  # (feature, left LabelAggregate, right LabelAggregate)

    def to_obj(self) -> dict:
        return {
            "type": self.TYPE,
            "sid": self.sid,
            "node": self.node.encode(),
            "entries": [
                {"f": int(f), "left": l.to_obj(), "right": r.to_obj()}
                for f, l, r in self.entries
            ],
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "SplitCounts":
        return cls(
            obj["sid"],
            _node_field(obj),
            tuple(
                (
                    int(e["f"]),
                    LabelAggregate.from_obj(e["left"]),
                    LabelAggregate.from_obj(e["right"]),
                )
                for e in obj["entries"]
            ),
        )


@_register
@dataclass(frozen=True)
class BestSplit:
    TYPE = "best_split"
    sid: str
    node: NodeId
    feature: int
    threshold: float

    def to_obj(self) -> dict:
        return {
            "type": self.TYPE,
            "sid": self.sid,
            "node": self.node.encode(),
            "feature": self.feature,
            "threshold": self.threshold,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "BestSplit":
        return cls(
            obj["sid"], _node_field(obj), int(obj["feature"]), float(obj["threshold"])
        )


@_register
@dataclass(frozen=True)
class TreeEnd:
    TYPE = "tree_end"
    sid: str
    tree: int

    def to_obj(self) -> dict:
        return {"type": self.TYPE, "sid": self.sid, "tree": self.tree}

    @classmethod
    def from_obj(cls, obj: dict) -> "TreeEnd":
        return cls(obj["sid"], int(obj["tree"]))


@_register
@dataclass(frozen=True)
class SessionEnd:
    TYPE = "session_end"
    sid: str

    def to_obj(self) -> dict:
        return {"type": self.TYPE, "sid": self.sid}

    @classmethod
    def from_obj(cls, obj: dict) -> "SessionEnd":
        return cls(obj["sid"])


@_register
@dataclass(frozen=True)
class ErrorMsg:
    TYPE = "error"
    sid: str
    code: str
    detail: str = ""

    def to_obj(self) -> dict:
        return {"type": self.TYPE, "sid": self.sid, "code": self.code, "detail": self.detail}

    @classmethod
    def from_obj(cls, obj: dict) -> "ErrorMsg":
        return cls(obj["sid"], str(obj["code"]), str(obj.get("detail", "")))


def message_from_obj(obj: dict):
    if not isinstance(obj, dict) or "type" not in obj:
        raise FrameError("message body missing a type tag")
    cls = _REGISTRY.get(obj["type"])
    if cls is None:
        raise FrameError(f"unknown message type {obj['type']!r}")
    try:
        return cls.from_obj(obj)
    except (KeyError, TypeError, ValueError) as e:
        raise FrameError(f"malformed {obj['type']} message: {e}") from None


def frame_encode(msg) -> bytes:
    body = json.dumps(msg.to_obj(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    if len(body) > MAX_FRAME_BYTES:
        raise FrameError(f"frame of {len(body)} bytes exceeds {MAX_FRAME_BYTES}")
    return struct.pack(">I", len(body)) + body


def frame_decode(data: bytes):
    if len(data) < 4:
        raise FrameError("truncated frame header")
    (length,) = struct.unpack(">I", data[:4])
    if length > MAX_FRAME_BYTES:
        raise FrameError(f"frame of {length} bytes exceeds {MAX_FRAME_BYTES}")
    body = data[4 : 4 + length]
    if len(body) != length:
        raise FrameError(f"truncated frame body: {len(body)} of {length} bytes")
    try:
        obj = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FrameError(f"malformed frame body: {e}") from None
    return message_from_obj(obj)
