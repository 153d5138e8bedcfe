"""Transports: paired in-process duplex channels and framed TCP links."""

from __future__ import annotations

import queue
import socket
import struct
from dataclasses import dataclass

from .messages import MAX_FRAME_BYTES, FrameError, frame_decode, frame_encode


class LinkError(Exception):
    pass


class LinkClosed(LinkError):
    pass


class LinkTimeout(LinkError):
    pass


_CLOSED = object()


class InProcessLink:
    """One endpoint of a lossless FIFO duplex channel. Messages cross as
    already-validated objects; semantics match the TCP framing minus the
    byte encoding."""

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue):
        self._inbox = inbox
        self._outbox = outbox
        self._closed = False

    def send(self, msg) -> None:
        if self._closed:
            raise LinkClosed("link is closed")
        self._outbox.put(msg)

    def recv(self, timeout: float | None = None):
        try:
            msg = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise LinkTimeout(f"no message within {timeout}s") from None
        if msg is _CLOSED:
            raise LinkClosed("peer closed the link")
        return msg

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._outbox.put(_CLOSED)


def make_link_pair() -> tuple[InProcessLink, InProcessLink]:
    a_to_b: queue.Queue = queue.Queue()
    b_to_a: queue.Queue = queue.Queue()
    return InProcessLink(b_to_a, a_to_b), InProcessLink(a_to_b, b_to_a)


class TcpLink:
    """Framed messages over a connected TCP socket."""

    def __init__(self, sock: socket.socket):
        self._sock = sock
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def send(self, msg) -> None:
        try:
            self._sock.sendall(frame_encode(msg))
        except OSError as e:
            raise LinkClosed(f"send failed: {e}") from None

    def _recv_exact(self, count: int) -> bytes:
        buf = bytearray()
        while len(buf) < count:
            try:
                chunk = self._sock.recv(count - len(buf))
            except socket.timeout:
                raise LinkTimeout("socket receive timed out") from None
            except OSError as e:
                raise LinkClosed(f"receive failed: {e}") from None
            if not chunk:
                raise LinkClosed("connection closed mid-frame" if buf else "connection closed")
            buf.extend(chunk)
        return bytes(buf)

    def recv(self, timeout: float | None = None):
        self._sock.settimeout(timeout)
        header = self._recv_exact(4)
        (length,) = struct.unpack(">I", header)
        if length > MAX_FRAME_BYTES:
            raise FrameError(f"frame of {length} bytes exceeds {MAX_FRAME_BYTES}")
        return frame_decode(header + self._recv_exact(length))

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


@dataclass(frozen=True)
class TranscriptEntry:
    direction: str  # "send" (master to client) or "recv" (client to master)
    client_id: int
    message: object


class RecordingLink:
    """Master-side wrapper that appends every message to a shared transcript."""

    def __init__(self, inner, client_id: int, transcript: list):
        self._inner = inner
        self._client_id = client_id
        self._transcript = transcript

    def send(self, msg) -> None:
        self._transcript.append(TranscriptEntry("send", self._client_id, msg))
        self._inner.send(msg)

    def recv(self, timeout: float | None = None):
        msg = self._inner.recv(timeout)
        self._transcript.append(TranscriptEntry("recv", self._client_id, msg))
        return msg

    def close(self) -> None:
        self._inner.close()
