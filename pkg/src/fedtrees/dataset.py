"""CSV ingestion, feature/label encoding, splits, and client sharding."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical-ordinal"


class DatasetError(Exception):
    """Raised for unreadable, malformed, or inconsistent datasets."""


@dataclass
class FeatureMeta:
    name: str
    index: int
    kind: str = NUMERIC
    # Ordinal decode table for categorical features: code -> original string.
    categories: list[str] | None = None

    def to_dict(self) -> dict:
        d = {"name": self.name, "index": self.index, "kind": self.kind}
        if self.categories is not None:
            d["categories"] = list(self.categories)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureMeta":
        return cls(
            name=d["name"],
            index=int(d["index"]),
            kind=d.get("kind", NUMERIC),
            categories=list(d["categories"]) if d.get("categories") is not None else None,
        )


@dataclass
class LabelSpace:
    classes: list[str]

    def __post_init__(self):
        if len(self.classes) != len(set(self.classes)):
            raise DatasetError("duplicate class names in label space")

    @property
    def n_classes(self) -> int:
        return len(self.classes)


@dataclass
class DataShard:
    """One participant's horizontally partitioned rows and encoded labels."""

    rows: np.ndarray  # (n, n_features) float64
    labels: np.ndarray  # (n,) int64 class indices
    client_id: int
    feature_metas: list[FeatureMeta] = field(repr=False)
    label_space: LabelSpace = field(repr=False)

    def __post_init__(self):
        if self.rows.shape[0] != self.labels.shape[0]:
            raise DatasetError("rows and labels length mismatch")
        if self.labels.size and int(self.labels.max()) >= self.label_space.n_classes:
            raise DatasetError("label index outside label space")

    @property
    def n(self) -> int:
        return int(self.rows.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.rows.shape[1])

    def take(self, indices: np.ndarray, client_id: int | None = None) -> "DataShard":
        return DataShard(
            rows=self.rows[indices],
            labels=self.labels[indices],
            client_id=self.client_id if client_id is None else client_id,
            feature_metas=self.feature_metas,
            label_space=self.label_space,
        )


def load_csv(
    path: str | Path,
    label_column: str,
    has_header: bool = True,
    categorical: Sequence[str] = (),
    classes: Sequence[str] | None = None,
) -> DataShard:
    """Load a CSV file into a single shard.

    Non-label columns must parse as floats unless named in ``categorical``,
    in which case values are ordinal-encoded by first appearance. Labels
    are encoded by first appearance unless an explicit ``classes`` order
    is given (required when independently loaded shards must agree on the
    encoding).
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise DatasetError(f"empty dataset: {path}") from None
        if has_header:
            names = [c.strip() for c in first]
            data_rows = list(reader)
            header_offset = 1
        else:
            names = [f"col{i}" for i in range(len(first))]
            data_rows = [first] + list(reader)
            header_offset = 0
    if label_column not in names:
        raise DatasetError(f"label column {label_column!r} not in columns {names}")
    if not data_rows:
        raise DatasetError(f"empty dataset: {path}")

    label_pos = names.index(label_column)
    feature_names = [n for n in names if n != label_column]
    cat_set = set(categorical)
    unknown_cats = cat_set - set(feature_names)
    if unknown_cats:
        raise DatasetError(f"categorical columns not in dataset: {sorted(unknown_cats)}")

    n = len(data_rows)
    x = np.empty((n, len(feature_names)), dtype=np.float64)
    cat_tables: dict[str, dict[str, int]] = {name: {} for name in cat_set}
    class_table: dict[str, int] = (
        {c: i for i, c in enumerate(classes)} if classes is not None else {}
    )
    explicit_classes = classes is not None
    y = np.empty(n, dtype=np.int64)

    col_positions = [names.index(f) for f in feature_names]
    for r, row in enumerate(data_rows):
        line_no = r + 1 + header_offset
        if len(row) != len(names):
            raise DatasetError(
                f"line {line_no}: expected {len(names)} cells, got {len(row)}"
            )
        for j, (fname, pos) in enumerate(zip(feature_names, col_positions)):
            cell = row[pos].strip()
            if fname in cat_set:
                table = cat_tables[fname]
                if cell not in table:
                    table[cell] = len(table)
                x[r, j] = table[cell]
            else:
                try:
                    x[r, j] = float(cell)
                except ValueError:
                    raise DatasetError(
                        f"line {line_no}, column {fname!r}: "
                        f"cannot parse {cell!r} as a number"
                    ) from None
        label = row[label_pos].strip()
        if label not in class_table:
            if explicit_classes:
                raise DatasetError(
                    f"line {line_no}: label {label!r} not in declared classes"
                )
            class_table[label] = len(class_table)
        y[r] = class_table[label]

    metas = []
    for j, fname in enumerate(feature_names):
        if fname in cat_set:
            table = cat_tables[fname]
            codes = sorted(table, key=table.get)
            metas.append(FeatureMeta(fname, j, CATEGORICAL, codes))
        else:
            metas.append(FeatureMeta(fname, j))
    class_names = sorted(class_table, key=class_table.get)
    if len(class_names) < 2:
        log.warning("label column %r has a single class", label_column)
    return DataShard(
        rows=x,
        labels=y,
        client_id=0,
        feature_metas=metas,
        label_space=LabelSpace(class_names),
    )


def split_train_test(
    shard: DataShard, train_fraction: float, seed: int
) -> tuple[DataShard, DataShard]:
    """Seeded row-disjoint train/test partition with |train| = round(f*n)."""
    if not 0.0 < train_fraction < 1.0:
        raise DatasetError(f"train_fraction must be in (0,1), got {train_fraction}")
    if shard.n < 2:
        raise DatasetError("need at least 2 rows to split")
    k = int(round(train_fraction * shard.n))
    perm = np.random.default_rng(seed).permutation(shard.n)
    train_idx = np.sort(perm[:k])
    test_idx = np.sort(perm[k:])
    return shard.take(train_idx), shard.take(test_idx)


def shard_rows(shard: DataShard, n_clients: int, seed: int) -> list[DataShard]:
    """Randomly partition rows into n_clients shards with sizes differing by at most 1."""
    if n_clients < 1:
        raise DatasetError(f"client count must be >= 1, got {n_clients}")
    if n_clients > shard.n:
        raise DatasetError(f"cannot split {shard.n} rows across {n_clients} clients")
    perm = np.random.default_rng(seed).permutation(shard.n)
    base, extra = divmod(shard.n, n_clients)
    shards = []
    start = 0
    for i in range(n_clients):
        size = base + (1 if i < extra else 0)
        idx = np.sort(perm[start : start + size])
        shards.append(shard.take(idx, client_id=i))
        start += size
    return shards


def subsample_indices(n: int, fraction: float, seed: int) -> np.ndarray:
    """Sorted without-replacement sample of ceil(fraction*n) row indices."""
    if not 0.0 < fraction <= 1.0:
        raise DatasetError(f"subsample fraction must be in (0,1], got {fraction}")
    if n == 0:
        return np.empty(0, dtype=np.int64)
    k = math.ceil(fraction * n)
    if k >= n:
        return np.arange(n, dtype=np.int64)
    idx = np.random.default_rng(seed).choice(n, size=k, replace=False)
    return np.sort(idx.astype(np.int64))


def subsample(shard: DataShard, fraction: float, seed: int) -> DataShard:
    """Per-tree without-replacement row subsample of a shard."""
    if shard.n < 1:
        raise DatasetError("cannot subsample an empty shard")
    return shard.take(subsample_indices(shard.n, fraction, seed))


def decode_labels(shard: DataShard, labels: np.ndarray) -> list[str]:
    return [shard.label_space.classes[int(i)] for i in labels]
