"""Evaluation metrics and repeated-experiment summaries."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace as dc_replace
from typing import Sequence

import numpy as np

from .dataset import DataShard, split_train_test
from .forest import predict_batch
from .protocol import SessionConfig, simulate
from .rand import repeat_seeds

F1_BINARY = "binary-positive"
F1_MICRO = "micro"


class MetricsError(Exception):
    pass


def accuracy(pred: Sequence[int] | np.ndarray, truth: Sequence[int] | np.ndarray) -> float:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise MetricsError(f"length mismatch: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise MetricsError("cannot score empty predictions")
    return float(np.mean(pred == truth))


def f1(
    pred: Sequence[int] | np.ndarray,
    truth: Sequence[int] | np.ndarray,
    n_classes: int,
    mode: str | None = None,
) -> float:
    """F1 score. Binary tasks use positive-class F1 (positive = class 1);
    multiclass tasks use micro-F1, which for single-label predictions
    pools to exactly the accuracy. Mode is selected from n_classes when
    not forced."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.size == 0:
        raise MetricsError("predictions and truth must be equal-length and non-empty")
    if mode is None:
        mode = F1_BINARY if n_classes == 2 else F1_MICRO
    if mode == F1_BINARY:
        if n_classes != 2:
            raise MetricsError("binary-positive F1 needs a two-class label space")
        tp = int(np.sum((pred == 1) & (truth == 1)))
        fp = int(np.sum((pred == 1) & (truth != 1)))
        fn = int(np.sum((pred != 1) & (truth == 1)))
        if tp == 0:
            return 0.0
        precision = tp / (tp + fp)
        recall = tp / (tp + fn)
        return 2 * precision * recall / (precision + recall)
    if mode == F1_MICRO:
        # single-label micro pooling: TP = matches, FP = FN = mismatches
        tp = int(np.sum(pred == truth))
        total = pred.size
        return tp / total
    raise MetricsError(f"unknown f1 mode {mode!r}")


def per_class_precision_recall(
    pred: np.ndarray, truth: np.ndarray, n_classes: int
) -> tuple[list[float], list[float]]:
    precision = []
    recall = []
    for c in range(n_classes):
        tp = int(np.sum((pred == c) & (truth == c)))
        fp = int(np.sum((pred == c) & (truth != c)))
        fn = int(np.sum((pred != c) & (truth == c)))
        precision.append(tp / (tp + fp) if tp + fp else 0.0)
        recall.append(tp / (tp + fn) if tp + fn else 0.0)
    return precision, recall


@dataclass
class EvalReport:
    accuracy: float
    f1: float
    accuracy_std: float
    f1_std: float
    precision: list[float]
    recall: list[float]
    classes: list[str]
    n_test: int
    repeats: int
    epsilon: float | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "accuracy": self.accuracy,
                "accuracy_std": self.accuracy_std,
                "f1": self.f1,
                "f1_std": self.f1_std,
                "precision": self.precision,
                "recall": self.recall,
                "classes": self.classes,
                "n_test": self.n_test,
                "repeats": self.repeats,
                "epsilon": self.epsilon,
            },
            indent=2,
            sort_keys=True,
        )

    def to_table(self) -> str:
        lines = [
            f"{'repeats':<12}{self.repeats}",
            f"{'n_test':<12}{self.n_test}",
            f"{'accuracy':<12}{self.accuracy:.4f} +/- {self.accuracy_std:.4f}",
            f"{'f1':<12}{self.f1:.4f} +/- {self.f1_std:.4f}",
            f"{'epsilon':<12}" + (f"{self.epsilon:.4f}" if self.epsilon is not None else "-"),
            f"{'class':<16}{'precision':>10}{'recall':>10}",
        ]
        for name, p, r in zip(self.classes, self.precision, self.recall):
            lines.append(f"{name:<16}{p:>10.4f}{r:>10.4f}")
        return "\n".join(lines)


def evaluate_forest(forest, test: DataShard) -> tuple[float, float, list[float], list[float]]:
    pred = predict_batch(forest, test.rows)
    n_classes = test.label_space.n_classes
    return (
        accuracy(pred, test.labels),
        f1(pred, test.labels, n_classes),
        *per_class_precision_recall(pred, test.labels, n_classes),
    )


def repeat_experiment(
    config: SessionConfig,
    shard: DataShard,
    train_fraction: float,
    repeats: int,
    base_seed: int | None = None,
) -> EvalReport:
    """Run split + federated training + evaluation ``repeats`` times with
    derived seeds; report means and sample standard deviations."""
    if repeats < 1:
        raise MetricsError(f"repeats must be >= 1, got {repeats}")
    base = config.master_seed if base_seed is None else base_seed
    accs, f1s = [], []
    precision = recall = None
    n_test = 0
    epsilon = None
    for r in range(repeats):
        split_seed, master_seed = repeat_seeds(base, r)
        train, test = split_train_test(shard, train_fraction, split_seed)
        run_config = dc_replace(config, master_seed=master_seed)
        result = simulate(run_config, train)
        acc, score, precision, recall = evaluate_forest(result.forest, test)
        accs.append(acc)
        f1s.append(score)
        n_test = test.n
        epsilon = result.epsilon
    accs_arr = np.asarray(accs)
    f1s_arr = np.asarray(f1s)
    return EvalReport(
        accuracy=float(accs_arr.mean()),
        f1=float(f1s_arr.mean()),
        accuracy_std=float(accs_arr.std(ddof=1)) if repeats > 1 else 0.0,
        f1_std=float(f1s_arr.std(ddof=1)) if repeats > 1 else 0.0,
        precision=precision,
        recall=recall,
        classes=list(shard.label_space.classes),
        n_test=n_test,
        repeats=repeats,
        epsilon=epsilon,
    )
