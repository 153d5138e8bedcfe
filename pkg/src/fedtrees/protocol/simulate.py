"""Single-process simulation: master plus O client engines in one thread,
with a full message transcript for auditing.

The protocol is strictly lockstep, so client engines can run inline: a
"send" to a simulated client dispatches the message synchronously and the
replies land in a deque the master reads back. That keeps semantics
identical to the wire transports while avoiding any thread scheduling
overhead, and makes transcripts trivially deterministic.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass

from ..dataset import DataShard, shard_rows
from ..forest import Forest
from ..rand import shard_seed
from .client import ClientEngine
from .master import MasterEngine, MasterResult
from .transport import LinkError, RecordingLink, TranscriptEntry

log = logging.getLogger(__name__)


@dataclass
class SimulationResult:
    forest: Forest
    transcript: list[TranscriptEntry]
    client_forests: list[Forest]
    tree_depths: list[int]
    epsilon: float | None


class _OutboxLink:
    """Client-side link whose sends accumulate for the inline master."""

    def __init__(self):
        self.outbox: deque = deque()

    def send(self, msg) -> None:
        self.outbox.append(msg)

    def recv(self, timeout: float | None = None):
        raise LinkError("inline client links are write-only")

    def close(self) -> None:
        pass


class InlineClientLink:
    """Master-side endpoint that drives one client engine synchronously."""

    def __init__(self, engine: ClientEngine, outbox: deque):
        self._engine = engine
        self._outbox = outbox
        self.forest: Forest | None = None

    def send(self, msg) -> None:
        forest = self._engine.handle(msg)
        if forest is not None:
            self.forest = forest

    def recv(self, timeout: float | None = None):
        if not self._outbox:
            raise LinkError("client engine produced no reply")
        return self._outbox.popleft()

    def close(self) -> None:
        pass


def run_session(config, shards: list[DataShard]) -> SimulationResult:
    """Run one session over inline links with pre-assigned shards."""
    if len(shards) != config.clients:
        raise ValueError(f"need {config.clients} shards, got {len(shards)}")
    for i, shard in enumerate(shards):
        if shard.client_id != i:
            raise ValueError(f"shard {i} carries client_id {shard.client_id}")

    transcript: list[TranscriptEntry] = []
    inline_links: list[InlineClientLink] = []
    master_links = []
    for cid, shard in enumerate(shards):
        client_link = _OutboxLink()
        engine = ClientEngine(config, shard, client_link)
        engine.start()
        inline = InlineClientLink(engine, client_link.outbox)
        inline_links.append(inline)
        master_links.append(RecordingLink(inline, cid, transcript))

    result: MasterResult = MasterEngine(config, master_links).run()
    client_forests = []
    for cid, inline in enumerate(inline_links):
        if inline.forest is None:
            raise LinkError(f"client {cid} never completed the session")
        client_forests.append(inline.forest)
    return SimulationResult(
        forest=result.forest,
        transcript=transcript,
        client_forests=client_forests,
        tree_depths=result.tree_depths,
        epsilon=result.epsilon,
    )


def simulate(config, shard: DataShard) -> SimulationResult:
    """Shard a dataset across config.clients simulated participants and
    train one forest, returning the model and the full transcript."""
    shards = shard_rows(shard, config.clients, shard_seed(config.master_seed))
    return run_session(config, shards)
