"""Post-pairing device state for the camera and the owner's handset.

The camera's factory keypair outlives factory resets (the device stays
re-sellable); everything else is wiped.  State files carry a leading magic
and version and are written with owner-only permissions by the CLI.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field

from .errors import MalformedMessage
from .escrow import EscrowMaterial
from .framecrypto import CameraIdentity
from .identity import IdentityBundle, PublicBundle
from .keytree import KeyTree

CAMERA_STATE_MAGIC = b"CCST"
OWNER_STATE_MAGIC = b"COST"
STATE_VERSION = 1


def _now_ms() -> int:
    return int(time.time() * 1000)


def _lp(data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + data


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.off = data, 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise MalformedMessage("truncated state file")
        out = self.data[self.off : self.off + n]
        self.off += n
        return out

    def take_lp(self) -> bytes:
        (n,) = struct.unpack(">I", self.take(4))
        return self.take(n)

    def take_u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def done(self):
        if self.off != len(self.data):
            raise MalformedMessage("trailing bytes in state file")


@dataclass
class CameraState:
    """Everything an initialized camera holds besides its factory keypair."""

    identity: IdentityBundle
    owner_public: PublicBundle
    tree: KeyTree
    escrow: EscrowMaterial
    wifi_credentials: str = ""
    last_admin_ts: int = 0
    next_sequence: int = 0
    last_frame_t: int = 0

    @property
    def block_identity(self) -> CameraIdentity:
        return CameraIdentity(
            "ed25519", self.identity.ed25519_private, self.identity.public.ed25519
        )


@dataclass
class CameraDevice:
    factory_keys: IdentityBundle
    state: CameraState | None = None
    clock: object = field(default=_now_ms, repr=False)

    @property
    def initialized(self) -> bool:
        return self.state is not None

    def install(self, identity, owner_public, tree, escrow, wifi=""):
        self.state = CameraState(identity, owner_public, tree, escrow, wifi)

    def factory_reset(self):
        """Wipe tree, escrow, and identity; the factory keypair persists."""
        if self.state is not None:
            self.state.tree.wipe()
            self.state = None

    def to_bytes(self) -> bytes:
        parts = [CAMERA_STATE_MAGIC, bytes([STATE_VERSION]), _lp(self.factory_keys.to_bytes())]
        if self.state is None:
            parts.append(b"\x00")
        else:
            s = self.state
            parts += [
                b"\x01",
                _lp(s.identity.to_bytes()),
                _lp(s.owner_public.to_bytes()),
                _lp(s.tree.to_bytes()),
                _lp(s.escrow.to_bytes()),
                _lp(s.wifi_credentials.encode()),
                struct.pack(">QQQ", s.last_admin_ts, s.next_sequence, s.last_frame_t),
            ]
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes, clock=_now_ms) -> "CameraDevice":
        r = _Reader(data)
        if r.take(4) != CAMERA_STATE_MAGIC or r.take(1) != bytes([STATE_VERSION]):
            raise MalformedMessage("not a camera state file")
        device = cls(IdentityBundle.from_bytes(r.take_lp()), clock=clock)
        if r.take(1) == b"\x01":
            identity = IdentityBundle.from_bytes(r.take_lp())
            owner_pub = PublicBundle.from_bytes(r.take_lp())
            tree = KeyTree.from_bytes(r.take_lp())
            escrow = EscrowMaterial.from_bytes(r.take_lp())
            wifi = r.take_lp().decode()
            last_admin_ts, next_seq, last_t = struct.unpack(">QQQ", r.take(24))
            device.state = CameraState(
                identity, owner_pub, tree, escrow, wifi, last_admin_ts, next_seq, last_t
            )
        r.done()
        return device


@dataclass
class OwnerDevice:
    keys: IdentityBundle
    camera_public: PublicBundle
    tree: KeyTree
    last_sent_ts: int = 0
    clock: object = field(default=_now_ms, repr=False)

    @property
    def camera_block_pub(self) -> bytes:
        return self.camera_public.ed25519

    def next_timestamp(self) -> int:
        """Strictly increasing request timestamps, even within one millisecond."""
        ts = max(self.clock(), self.last_sent_ts + 1)
        self.last_sent_ts = ts
        return ts

    def wipe_association(self):
        self.tree.wipe()

    def to_bytes(self) -> bytes:
        return (
            OWNER_STATE_MAGIC
            + bytes([STATE_VERSION])
            + _lp(self.keys.to_bytes())
            + _lp(self.camera_public.to_bytes())
            + _lp(self.tree.to_bytes())
            + struct.pack(">Q", self.last_sent_ts)
        )

    @classmethod
    def from_bytes(cls, data: bytes, clock=_now_ms) -> "OwnerDevice":
        r = _Reader(data)
        if r.take(4) != OWNER_STATE_MAGIC or r.take(1) != bytes([STATE_VERSION]):
            raise MalformedMessage("not an owner state file")
        keys = IdentityBundle.from_bytes(r.take_lp())
        camera_pub = PublicBundle.from_bytes(r.take_lp())
        tree = KeyTree.from_bytes(r.take_lp())
        (last_sent,) = struct.unpack(">Q", r.take(8))
        r.done()
        return cls(keys, camera_pub, tree, last_sent, clock=clock)
