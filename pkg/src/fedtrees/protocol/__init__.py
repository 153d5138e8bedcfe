"""Lockstep master/client training protocol."""

from .client import ClientEngine
from .master import MasterEngine, MasterResult, stopping_condition


def master_run(config, links) -> "MasterResult":
    """Coordinate one training session over already-connected links."""
    return MasterEngine(config, links).run()


def client_run(config, shard, link):
    """Participate in one training session with a local shard; returns the
    forest this client ends up holding."""
    return ClientEngine(config, shard, link).run()



from .messages import (
    FrameError,
    NodeId,
    ProtocolViolation,
    frame_decode,
    frame_encode,
)
from .session import SessionConfig, SessionConfigError, default_ldp_params
from .simulate import SimulationResult, run_session, simulate
from .transport import (
    InProcessLink,
    LinkClosed,
    LinkError,
    LinkTimeout,
    RecordingLink,
    TcpLink,
    TranscriptEntry,
    make_link_pair,
)

__all__ = [
    "ClientEngine",
    "FrameError",
    "client_run",
    "master_run",
    "InProcessLink",
    "LinkClosed",
    "LinkError",
    "LinkTimeout",
    "MasterEngine",
    "MasterResult",
    "NodeId",
    "ProtocolViolation",
    "RecordingLink",
    "SessionConfig",
    "SessionConfigError",
    "SimulationResult",
    "TcpLink",
    "TranscriptEntry",
    "default_ldp_params",
    "frame_decode",
    "frame_encode",
    "make_link_pair",
    "run_session",
    "simulate",
    "stopping_condition",
]
