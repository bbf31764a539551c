"""Simulated pairing channels.

The visual channel is a one-way delivery of a 32-byte public-key hash (the
QR code of the real system); it cannot be tampered with here, mirroring the
seeing-is-believing assumption.  The insecure channel is a duplex framed
byte pipe (tag u8 || length u32-be || body) with an interposable adversary
hook that sees, and may rewrite, redirect, swallow, or inject, every
message.  A file/socket flavor of each exists so two processes can pair.
"""

from __future__ import annotations

import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import ChannelClosed, MalformedMessage

SIDE_A = "a"  # camera (init) / delegating owner (delegation)
SIDE_B = "b"  # owner (init) / delegatee (delegation)
FORWARD = "forward"  # shown by side A, scanned by side B
BACK = "back"  # shown by side B, scanned by side A

_CLOSE = object()


@dataclass(frozen=True)
class VisualPayload:
    """SHA-256 of a public-key bundle, carried over the visual channel."""

    hash: bytes

    def __post_init__(self):
        if len(self.hash) != 32:
            raise ValueError("visual payloads are exactly 32 bytes")


def write_vch(path: str | Path, payload: VisualPayload):
    """.vch file: lowercase hex text (32 raw bytes also accepted on read)."""
    Path(path).write_text(payload.hash.hex() + "\n")


def read_vch(path: str | Path) -> VisualPayload:
    raw = Path(path).read_bytes()
    if len(raw) == 32:
        return VisualPayload(raw)
    text = raw.decode("ascii").strip()
    if len(text) != 64 or text != text.lower():
        raise MalformedMessage("vch files hold 32 raw bytes or 32 lowercase hex bytes")
    return VisualPayload(bytes.fromhex(text))


class VisualChannel:
    """Two one-shot slots: forward (A shows, B scans) and back (B shows, A scans)."""

    def __init__(self, timeout: float = 10.0):
        self.timeout = timeout
        self._slots = {FORWARD: queue.Queue(), BACK: queue.Queue()}

    def show(self, direction: str, payload: VisualPayload):
        self._slots[direction].put(payload)

    def scan(self, direction: str) -> VisualPayload:
        try:
            return self._slots[direction].get(timeout=self.timeout)
        except queue.Empty:
            raise ChannelClosed("no visual payload presented") from None


class FileVisualChannel:
    """Visual channel backed by .vch files, for cross-process pairing."""

    def __init__(self, directory: str | Path, timeout: float = 30.0):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.timeout = timeout

    def _path(self, direction: str) -> Path:
        return self.dir / f"{direction}.vch"

    def show(self, direction: str, payload: VisualPayload):
        write_vch(self._path(direction), payload)

    def scan(self, direction: str) -> VisualPayload:
        deadline = time.monotonic() + self.timeout
        path = self._path(direction)
        while time.monotonic() < deadline:
            if path.exists():
                return read_vch(path)
            time.sleep(0.02)
        raise ChannelClosed(f"no visual payload at {path}")


class Adversary:
    """Base adversary: sees every insecure-channel message, default passthrough.

    Return None to deliver unchanged to the peer, or a list of
    (destination_side, tag, body) deliveries (possibly empty to swallow).
    """

    def on_message(self, sender: str, tag: int, body: bytes):
        return None


class Endpoint:
    def __init__(self, channel: "InsecureChannel", side: str):
        self._channel = channel
        self.side = side

    def send(self, tag: int, body: bytes):
        self._channel._dispatch(self.side, tag, body)

    def recv(self) -> tuple[int, bytes]:
        return self._channel._collect(self.side)

    def close(self):
        self._channel.close()


class InsecureChannel:
    """In-process duplex framed pipe with an inline adversary hook."""

    def __init__(self, adversary: Adversary | None = None, timeout: float = 10.0):
        self.adversary = adversary
        self.timeout = timeout
        self._inbox = {SIDE_A: queue.Queue(), SIDE_B: queue.Queue()}
        self._closed = threading.Event()

    def endpoint(self, side: str) -> Endpoint:
        if side not in (SIDE_A, SIDE_B):
            raise ValueError("side must be 'a' or 'b'")
        return Endpoint(self, side)

    def _dispatch(self, sender: str, tag: int, body: bytes):
        if self._closed.is_set():
            raise ChannelClosed("channel closed")
        deliveries = None
        if self.adversary is not None:
            deliveries = self.adversary.on_message(sender, tag, body)
        if deliveries is None:
            deliveries = [(SIDE_B if sender == SIDE_A else SIDE_A, tag, body)]
        for dest, d_tag, d_body in deliveries:
            self._inbox[dest].put((d_tag, d_body))

    def _collect(self, side: str) -> tuple[int, bytes]:
        try:
            item = self._inbox[side].get(timeout=self.timeout)
        except queue.Empty:
            raise ChannelClosed("recv timed out") from None
        if item is _CLOSE:
            raise ChannelClosed("channel closed by peer")
        return item

    def close(self):
        if not self._closed.is_set():
            self._closed.set()
            self._inbox[SIDE_A].put(_CLOSE)
            self._inbox[SIDE_B].put(_CLOSE)


# --- framing over a real socket ----------------------------------------------

def _frame(tag: int, body: bytes) -> bytes:
    return struct.pack(">BI", tag, len(body)) + body


class SocketEndpoint:
    """The same framed message surface over a connected TCP socket."""

    def __init__(self, sock: socket.socket, timeout: float = 30.0):
        self._sock = sock
        self._sock.settimeout(timeout)

    def send(self, tag: int, body: bytes):
        try:
            self._sock.sendall(_frame(tag, body))
        except OSError:
            raise ChannelClosed("socket send failed") from None

    def _read_exact(self, n: int) -> bytes:
        buf = b""
        while len(buf) < n:
            try:
                chunk = self._sock.recv(n - len(buf))
            except OSError:
                raise ChannelClosed("socket recv failed") from None
            if not chunk:
                raise ChannelClosed("socket closed")
            buf += chunk
        return buf

    def recv(self) -> tuple[int, bytes]:
        tag, length = struct.unpack(">BI", self._read_exact(5))
        return tag, self._read_exact(length)

    def close(self):
        try:
            self._sock.close()
        except OSError:
            pass
