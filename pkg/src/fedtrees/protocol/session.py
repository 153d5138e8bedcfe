"""Session configuration shared by master and clients."""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field

from ..ldp import MODE_GDP, MODE_LDP, MODE_NONE, PRIVACY_MODES, BloomParams, RrParams

log = logging.getLogger(__name__)

SOFT_CLIENT_LIMIT = 10


class SessionConfigError(Exception):
    pass


@dataclass(frozen=True)
class SessionConfig:
    clients: int
    trees: int = 20
    max_depth: int = 20
    min_samples_leaf: int = 2
    candidate_count: int | None = None  # None: ceil(sqrt(n_features))
    privacy_mode: str = MODE_NONE
    bloom: BloomParams = field(default=None)
    rr: RrParams = field(default=None)
    epsilon_node: float = 1.0
    subsample_fraction: float = 0.8
    master_seed: int = 0
    timeout_s: float = 30.0

    def __post_init__(self):
        if self.clients < 1:
            raise SessionConfigError(f"client count must be >= 1, got {self.clients}")
        if self.clients > SOFT_CLIENT_LIMIT:
            log.warning(
                "session configured with %d clients; the protocol targets at most %d",
                self.clients,
                SOFT_CLIENT_LIMIT,
            )
        if self.trees < 1:
            raise SessionConfigError(f"tree count must be >= 1, got {self.trees}")
        if self.max_depth < 1:
            raise SessionConfigError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_samples_leaf < 1:
            raise SessionConfigError("min_samples_leaf must be >= 1")
        if self.candidate_count is not None and self.candidate_count < 1:
            raise SessionConfigError("candidate_count must be >= 1")
        if self.privacy_mode not in PRIVACY_MODES:
            raise SessionConfigError(f"unknown privacy mode {self.privacy_mode!r}")
        if not 0.0 < self.subsample_fraction <= 1.0:
            raise SessionConfigError("subsample_fraction must be in (0, 1]")
        if self.timeout_s <= 0:
            raise SessionConfigError("timeout_s must be > 0")
        if self.privacy_mode == MODE_LDP:
            if self.bloom is None or self.rr is None:
                raise SessionConfigError("ldp mode needs bloom and rr parameters")
        if self.privacy_mode in (MODE_LDP, MODE_GDP) and self.epsilon_node <= 0:
            raise SessionConfigError("epsilon_node must be > 0 in private modes")

    def session_id(self) -> str:
        return hashlib.sha256(f"fet:{self.master_seed}".encode()).hexdigest()[:12]

    def resolve_candidates(self, n_features: int) -> int:
        if self.candidate_count is None:
            return min(n_features, max(1, math.ceil(math.sqrt(n_features))))
        if self.candidate_count > n_features:
            raise SessionConfigError(
                f"candidate_count {self.candidate_count} exceeds {n_features} features"
            )
        return self.candidate_count

    def snapshot(self) -> dict:
        """Canonical dict stored in trained models; identical across
        transports for the same configuration."""
        snap = {
            "clients": self.clients,
            "trees": self.trees,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "candidate_count": self.candidate_count,
            "privacy_mode": self.privacy_mode,
            "subsample_fraction": self.subsample_fraction,
            "master_seed": self.master_seed,
        }
        if self.privacy_mode == MODE_LDP:
            snap["bloom"] = {"h": self.bloom.h, "m": self.bloom.m, "hash_seed": self.bloom.hash_seed}
            snap["rr"] = {"pr": self.rr.pr, "xi": self.rr.xi, "zeta": self.rr.zeta}
        if self.privacy_mode in (MODE_LDP, MODE_GDP):
            snap["epsilon_node"] = self.epsilon_node
        return snap


def default_ldp_params(master_seed: int) -> tuple[BloomParams, RrParams]:
    """Default experiment parameters; fully configurable per session."""
    return BloomParams(h=32, m=2, hash_seed=master_seed), RrParams(pr=0.5, xi=0.75, zeta=0.25)
