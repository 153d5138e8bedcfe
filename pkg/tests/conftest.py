import csv
import os
from pathlib import Path

import pytest

from fedtrees.dataset import DataShard

REPO_ROOT = Path(__file__).resolve().parent.parent


def data_dir() -> Path:
    return Path(os.environ.get("FET_DATA_DIR", REPO_ROOT / "data"))


def require_dataset(name: str) -> Path:
    """Resolve a prepared benchmark CSV or skip with fetch instructions."""
    path = data_dir() / name
    if not path.exists():
        pytest.skip(
            f"{name} not found under {data_dir()}; run scripts/fetch_datasets.py "
            "on a machine with network access (or set FET_DATA_DIR)"
        )
    return path


def write_shard_csv(shard: DataShard, path: Path) -> None:
    """Write a shard with full float precision so reloading is lossless."""
    classes = shard.label_space.classes
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([m.name for m in shard.feature_metas] + ["label"])
        for row, y in zip(shard.rows, shard.labels):
            writer.writerow([repr(float(v)) for v in row] + [classes[int(y)]])
