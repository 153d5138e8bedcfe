"""Federated extremely randomized trees with locally differentially
private label aggregation over a master/client protocol."""

__version__ = "0.1.0"

from .dataset import DataShard, FeatureMeta, LabelSpace, load_csv, shard_rows, split_train_test, subsample
from .forest import Forest, gini, gini_gain, load_model, predict, predict_batch, save_model
from .ldp import BloomParams, PrivacyBudget, RrParams
from .protocol import SessionConfig, simulate

__all__ = [
    "BloomParams",
    "DataShard",
    "FeatureMeta",
    "Forest",
    "LabelSpace",
    "PrivacyBudget",
    "RrParams",
    "SessionConfig",
    "__version__",
    "gini",
    "gini_gain",
    "load_csv",
    "load_model",
    "predict",
    "predict_batch",
    "save_model",
    "shard_rows",
    "simulate",
    "split_train_test",
    "subsample",
]
