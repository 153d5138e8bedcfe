"""Tree and forest model: split scoring, inference, serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .dataset import FeatureMeta, LabelSpace

MODEL_VERSION = 1


class ModelError(Exception):
    """Raised for unreadable or malformed model files."""


class ModelVersionError(ModelError):
    """Raised when a model file carries an unsupported version tag."""


@dataclass
class Leaf:
    class_counts: list[float]
    majority: int


@dataclass
class Internal:
    feature: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Leaf, Internal]


@dataclass
class Forest:
    trees: list[TreeNode]
    feature_metas: list[FeatureMeta] = field(repr=False)
    label_space: LabelSpace = field(repr=False)
    training_config: dict = field(default_factory=dict, repr=False)

    @property
    def n_classes(self) -> int:
        return self.label_space.n_classes

    @property
    def n_features(self) -> int:
        return len(self.feature_metas)


def gini(counts: Sequence[float] | np.ndarray) -> float:
    """Gini impurity 1 - sum((c/n)^2); 0 for an empty count vector."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.size and counts.min() < 0:
        raise ValueError(f"negative count in {counts}")
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.dot(p, p))


def gini_gain(
    parent: Sequence[float] | np.ndarray,
    left: Sequence[float] | np.ndarray,
    right: Sequence[float] | np.ndarray,
) -> float:
    """Impurity decrease of a candidate split.

    With estimated counts the parent vector may disagree with left+right;
    when it does, the children's sum is used as the parent.
    """
    parent = np.asarray(parent, dtype=np.float64)
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    combined = left + right
    total = combined.sum()
    if total <= 0:
        return 0.0
    if not np.allclose(parent, combined, atol=1e-6 * max(total, 1.0)):
        parent = combined
    n_l = left.sum()
    n_r = right.sum()
    if n_l <= 0 or n_r <= 0:
        return 0.0
    return float(gini(parent) - (n_l / total) * gini(left) - (n_r / total) * gini(right))


def split_gain(left: np.ndarray, right: np.ndarray) -> float:
    """Gain with the parent taken as left+right: the training engines' case,
    where a node's own estimate comes from a different noisy query than its
    children's."""
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    combined = left + right
    total = combined.sum()
    if total <= 0:
        return 0.0
    n_l = left.sum()
    n_r = right.sum()
    if n_l <= 0 or n_r <= 0:
        return 0.0
    return float(
        gini(combined) - (n_l / total) * gini(left) - (n_r / total) * gini(right)
    )


def best_split(scored: Sequence[tuple[int, float, float]]) -> tuple[int, float]:
    """Pick (feature, threshold) with maximal gain; ties go to the lowest
    feature index."""
    if not scored:
        raise ValueError("no scored split candidates")
    best = None
    for feature, threshold, gain in scored:
        if (
            best is None
            or gain > best[2]
            or (gain == best[2] and feature < best[0])
        ):
            best = (feature, threshold, gain)
    return best[0], best[1]


def majority_index(counts: Sequence[float] | np.ndarray) -> int:
    """Lowest class index among the maximal counts."""
    return int(np.argmax(np.asarray(counts, dtype=np.float64)))


def tree_depth(node: TreeNode) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(tree_depth(node.left), tree_depth(node.right))


def _route_votes(node: TreeNode, x: np.ndarray, idx: np.ndarray, votes: np.ndarray):
    if isinstance(node, Leaf):
        votes[idx] = node.majority
        return
    mask = x[idx, node.feature] < node.threshold
    left_idx = idx[mask]
    right_idx = idx[~mask]
    if left_idx.size:
        _route_votes(node.left, x, left_idx, votes)
    if right_idx.size:
        _route_votes(node.right, x, right_idx, votes)


def predict_batch(forest: Forest, x: np.ndarray) -> np.ndarray:
    """Majority vote over per-tree majority labels; ties go to the lowest
    class index. Rows route left when value < threshold."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != forest.n_features:
        raise ValueError(
            f"expected (n, {forest.n_features}) inputs, got {x.shape}"
        )
    n = x.shape[0]
    tally = np.zeros((n, forest.n_classes), dtype=np.int64)
    idx = np.arange(n)
    votes = np.empty(n, dtype=np.int64)
    for tree in forest.trees:
        _route_votes(tree, x, idx, votes)
        tally[idx, votes] += 1
    return tally.argmax(axis=1)


def predict(forest: Forest, row: Sequence[float] | np.ndarray) -> int:
    row = np.asarray(row, dtype=np.float64).reshape(1, -1)
    return int(predict_batch(forest, row)[0])


def _node_to_obj(node: TreeNode) -> dict:
    if isinstance(node, Leaf):
        return {"leaf": [float(c) for c in node.class_counts], "y": int(node.majority)}
    return {
        "f": int(node.feature),
        "t": float(node.threshold),
        "l": _node_to_obj(node.left),
        "r": _node_to_obj(node.right),
    }


def _node_from_obj(obj: dict) -> TreeNode:
    if "leaf" in obj:
        return Leaf([float(c) for c in obj["leaf"]], int(obj["y"]))
    if not {"f", "t", "l", "r"} <= obj.keys():
        raise ModelError(f"malformed tree node: {sorted(obj.keys())}")
    return Internal(
        int(obj["f"]),
        float(obj["t"]),
        _node_from_obj(obj["l"]),
        _node_from_obj(obj["r"]),
    )


def forest_to_doc(forest: Forest) -> dict:
    return {
        "version": MODEL_VERSION,
        "label_space": list(forest.label_space.classes),
        "features": [m.to_dict() for m in forest.feature_metas],
        "trees": [_node_to_obj(t) for t in forest.trees],
        "config": forest.training_config,
    }


def forest_from_doc(doc: dict) -> Forest:
    version = doc.get("version")
    if version != MODEL_VERSION:
        raise ModelVersionError(
            f"unsupported model version {version!r}, expected {MODEL_VERSION}"
        )
    return Forest(
        trees=[_node_from_obj(t) for t in doc["trees"]],
        feature_metas=[FeatureMeta.from_dict(m) for m in doc["features"]],
        label_space=LabelSpace([str(c) for c in doc["label_space"]]),
        training_config=doc.get("config", {}),
    )


def save_model(forest: Forest, path: str | Path) -> None:
    """Write the forest as canonical JSON (sorted keys, fixed separators),
    so re-saving a loaded model reproduces identical bytes."""
    doc = forest_to_doc(forest)
    Path(path).write_text(
        json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8",
    )


def load_model(path: str | Path) -> Forest:
    path = Path(path)
    if not path.exists():
        raise ModelError(f"model file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ModelError(f"corrupt model file {path}: {e}") from None
    if not isinstance(doc, dict):
        raise ModelError(f"corrupt model file {path}: not a JSON object")
    return forest_from_doc(doc)
