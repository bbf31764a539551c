"""Encrypt, authenticate, sign, verify, and decrypt frame blocks.

Per frame: AES-256-GCM under the epoch key with a fresh 16-byte IV (the
AEAD is invoked with the full 16-byte nonce), then an HMAC-SHA256 over
ciphertext || IV || timestamp.  A block of N frames carries one asymmetric
signature over the concatenated MACs.  The GCM tag authenticates only the
frame payload; metadata integrity rides on the MAC and the block signature.

The one-time-signature variant signs every frame: frame i carries the
public key that verifies frame i+1, bootstrapped by one conventional
signature, so a viewer can authenticate a live stream frame by frame.

Wire layouts (big-endian, bit-exact):
  frame record:   "CFR1" | t u64 | iv 16 | ct_len u32 | ct | hmac 32
  block manifest: "CBM1" | camera_id 32 | first_epoch u64 | frame_count u32
                  | frame records | sig_len u16 | sig
  ots frame:      "COT1" | t u64 | iv 16 | ct_len u32 | ct
                  | pk_len u16 | next_pk | sig_len u16 | sig
"""

from __future__ import annotations

import hashlib
import hmac as hmac_mod
import os
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator

from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import (
    AuthenticityFailure,
    ChainBroken,
    DecryptionFailure,
    IntegrityFailure,
    MalformedMessage,
    OrderingViolation,
)
from .keytree import KeyTree, epoch_of
from .sigscheme import OneTimeKeyPool, get_scheme

FRAME_MAGIC = b"CFR1"
BLOCK_MAGIC = b"CBM1"
OTS_MAGIC = b"COT1"
IV_BYTES = 16
MAX_FRAME_BYTES = 8 * 1024 * 1024
MAX_BLOCK_FRAMES = 1024
DEFAULT_BLOCK_FRAMES = 10


@dataclass(frozen=True)
class PlainFrame:
    t: int
    payload: bytes

    def __post_init__(self):
        if not 1 <= len(self.payload) <= MAX_FRAME_BYTES:
            raise ValueError("frame payload must be 1 byte to 8 MiB")


@dataclass(frozen=True)
class FrameRecord:
    t: int
    iv: bytes
    ciphertext: bytes
    hmac: bytes

    def __post_init__(self):
        if len(self.iv) != IV_BYTES or len(self.hmac) != 32:
            raise ValueError("iv must be 16 bytes and hmac 32 bytes")

    def to_bytes(self) -> bytes:
        return (
            FRAME_MAGIC
            + struct.pack(">Q", self.t)
            + self.iv
            + struct.pack(">I", len(self.ciphertext))
            + self.ciphertext
            + self.hmac
        )


@dataclass(frozen=True)
class BlockManifest:
    camera_id: bytes
    first_epoch: int
    frames: tuple[FrameRecord, ...]
    signature: bytes

    def __post_init__(self):
        if len(self.camera_id) != 32:
            raise ValueError("camera_id is 32 bytes")
        if not 1 <= len(self.frames) <= MAX_BLOCK_FRAMES:
            raise ValueError("blocks hold 1..1024 frames")
        ts = [f.t for f in self.frames]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("frame timestamps must strictly increase")

    def to_bytes(self) -> bytes:
        body = b"".join(f.to_bytes() for f in self.frames)
        return (
            BLOCK_MAGIC
            + self.camera_id
            + struct.pack(">QI", self.first_epoch, len(self.frames))
            + body
            + struct.pack(">H", len(self.signature))
            + self.signature
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "BlockManifest":
        try:
            if data[:4] != BLOCK_MAGIC:
                raise MalformedMessage("bad block magic")
            camera_id = data[4:36]
            first_epoch, count = struct.unpack(">QI", data[36:48])
            off = 48
            frames = []
            for _ in range(count):
                frame, off = _parse_frame(data, off)
                frames.append(frame)
            (sig_len,) = struct.unpack(">H", data[off : off + 2])
            off += 2
            signature = data[off : off + sig_len]
            if len(signature) != sig_len:
                raise MalformedMessage("truncated signature")
            off += sig_len
            if off != len(data):
                raise MalformedMessage("trailing bytes after manifest")
            return cls(camera_id, first_epoch, tuple(frames), signature)
        except (MalformedMessage, ValueError):
            raise
        except Exception:
            raise MalformedMessage("truncated manifest") from None


def _parse_frame(data: bytes, off: int) -> tuple[FrameRecord, int]:
    if data[off : off + 4] != FRAME_MAGIC:
        raise MalformedMessage("bad frame magic")
    (t,) = struct.unpack(">Q", data[off + 4 : off + 12])
    iv = data[off + 12 : off + 28]
    (ct_len,) = struct.unpack(">I", data[off + 28 : off + 32])
    start = off + 32
    ct = data[start : start + ct_len]
    if len(ct) != ct_len:
        raise MalformedMessage("truncated ciphertext")
    mac = data[start + ct_len : start + ct_len + 32]
    if len(mac) != 32:
        raise MalformedMessage("truncated frame MAC")
    return FrameRecord(t, iv, ct, mac), start + ct_len + 32


class CameraIdentity:
    """Block-signing identity; camera_id is the hash of the public key."""

    def __init__(self, scheme_name: str, signing_key, public_key: bytes):
        self.scheme = get_scheme(scheme_name)
        self.signing_key = signing_key
        self.public_key = public_key

    @classmethod
    def generate(cls, scheme_name: str = "ed25519") -> "CameraIdentity":
        scheme = get_scheme(scheme_name)
        priv, pub = scheme.generate()
        return cls(scheme_name, priv, pub)

    @property
    def camera_id(self) -> bytes:
        return camera_id_of(self.public_key)


def camera_id_of(public_key: bytes) -> bytes:
    return hashlib.sha256(public_key).digest()


def _frame_mac(key: bytes, ciphertext: bytes, iv: bytes, t: int, extra: bytes = b"") -> bytes:
    msg = ciphertext + iv + struct.pack(">Q", t) + extra
    return hmac_mod.new(key, msg, hashlib.sha256).digest()


def encrypt_block(
    frames: list[PlainFrame], tree: KeyTree, camera: CameraIdentity
) -> BlockManifest:
    """Encrypt and MAC each frame under its epoch key, sign the MAC chain."""
    if not frames:
        raise ValueError("a block needs at least one frame")
    ts = [f.t for f in frames]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise OrderingViolation("frame timestamps must strictly increase")
    records = []
    macs = []
    for frame in frames:
        key = tree.key_for_time(frame.t)
        iv = os.urandom(IV_BYTES)
        ct = AESGCM(key).encrypt(iv, frame.payload, None)
        mac = _frame_mac(key, ct, iv, frame.t)
        records.append(FrameRecord(frame.t, iv, ct, mac))
        macs.append(mac)
    signature = camera.scheme.sign(camera.signing_key, b"".join(macs))
    first_epoch = epoch_of(frames[0].t, tree.params)
    return BlockManifest(camera.camera_id, first_epoch, tuple(records), signature)


def verify_decrypt_block(
    block: BlockManifest,
    tree: KeyTree,
    camera_pub: bytes,
    scheme_name: str = "ed25519",
) -> list[PlainFrame]:
    """Authenticate a block, then decrypt it.

    Order matters: epoch keys are derived (missing grant surfaces as
    KeyUnavailable before anything else), the block signature is checked
    over the locally recomputed MACs, stored MACs are compared, and only
    then is any ciphertext decrypted.
    """
    if block.camera_id != camera_id_of(camera_pub):
        raise AuthenticityFailure("camera_id does not match the verifying key")
    keys = [tree.key_for_time(f.t) for f in block.frames]
    if block.first_epoch != epoch_of(block.frames[0].t, tree.params):
        raise AuthenticityFailure("first_epoch does not match the first frame")
    recomputed = [
        _frame_mac(key, f.ciphertext, f.iv, f.t) for key, f in zip(keys, block.frames)
    ]
    scheme = get_scheme(scheme_name)
    if not scheme.verify(camera_pub, block.signature, b"".join(recomputed)):
        raise AuthenticityFailure("block signature invalid")
    for i, (mac, f) in enumerate(zip(recomputed, block.frames)):
        if not hmac_mod.compare_digest(mac, f.hmac):
            raise IntegrityFailure(i)
    out = []
    for i, (key, f) in enumerate(zip(keys, block.frames)):
        try:
            payload = AESGCM(key).decrypt(f.iv, f.ciphertext, None)
        except Exception:
            raise DecryptionFailure(i) from None
        out.append(PlainFrame(f.t, payload))
    return out


# --- one-time-signature streaming -------------------------------------------

@dataclass(frozen=True)
class OtsFrame:
    t: int
    iv: bytes
    ciphertext: bytes
    next_public_key: bytes
    signature: bytes

    def to_bytes(self) -> bytes:
        return (
            OTS_MAGIC
            + struct.pack(">Q", self.t)
            + self.iv
            + struct.pack(">I", len(self.ciphertext))
            + self.ciphertext
            + struct.pack(">H", len(self.next_public_key))
            + self.next_public_key
            + struct.pack(">H", len(self.signature))
            + self.signature
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "OtsFrame":
        try:
            if data[:4] != OTS_MAGIC:
                raise MalformedMessage("bad ots frame magic")
            (t,) = struct.unpack(">Q", data[4:12])
            iv = data[12:28]
            (ct_len,) = struct.unpack(">I", data[28:32])
            off = 32
            ct = data[off : off + ct_len]
            if len(ct) != ct_len:
                raise MalformedMessage("truncated ciphertext")
            off += ct_len
            (pk_len,) = struct.unpack(">H", data[off : off + 2])
            off += 2
            pk = data[off : off + pk_len]
            if len(pk) != pk_len:
                raise MalformedMessage("truncated next key")
            off += pk_len
            (sig_len,) = struct.unpack(">H", data[off : off + 2])
            off += 2
            sig = data[off : off + sig_len]
            if len(sig) != sig_len:
                raise MalformedMessage("truncated signature")
            off += sig_len
            if off != len(data):
                raise MalformedMessage("trailing bytes after ots frame")
            return cls(t, iv, ct, pk, sig)
        except MalformedMessage:
            raise
        except Exception:
            raise MalformedMessage("truncated ots frame") from None


def ots_encrypt_stream(
    frames: Iterable[PlainFrame],
    tree: KeyTree,
    camera: CameraIdentity,
    ots_scheme: str = "ed25519",
    pool: OneTimeKeyPool | None = None,
) -> Iterator[OtsFrame]:
    """Per-frame signing: each frame carries the key verifying the next one.

    Emission is incremental; frame i is yielded before frame i+1 exists.
    """
    pool = pool or OneTimeKeyPool(ots_scheme)
    scheme = get_scheme(ots_scheme)
    signer_key = camera.signing_key
    signer_scheme = camera.scheme
    last_t = None
    for frame in frames:
        if last_t is not None and frame.t <= last_t:
            raise OrderingViolation("frame timestamps must strictly increase")
        last_t = frame.t
        key = tree.key_for_time(frame.t)
        iv = os.urandom(IV_BYTES)
        ct = AESGCM(key).encrypt(iv, frame.payload, None)
        next_priv, next_pub = pool.take()
        mac = _frame_mac(key, ct, iv, frame.t, extra=next_pub)
        signature = signer_scheme.sign(signer_key, mac)
        yield OtsFrame(frame.t, iv, ct, next_pub, signature)
        signer_key, signer_scheme = next_priv, scheme


def ots_verify_stream(
    frames: Iterable[OtsFrame],
    tree: KeyTree,
    camera_pub: bytes,
    camera_scheme: str = "ed25519",
    ots_scheme: str = "ed25519",
) -> Iterator[PlainFrame]:
    """Verify and decrypt an OTS stream incrementally, never buffering it.

    The first frame must verify under the camera key; each later frame
    under the key carried by its predecessor.  A failed link raises
    ChainBroken, which also covers dropped frames (their key went missing
    with them).
    """
    running_pub = camera_pub
    running_scheme = get_scheme(camera_scheme)
    chained = False
    for i, frame in enumerate(frames):
        key = tree.key_for_time(frame.t)
        mac = _frame_mac(key, frame.ciphertext, frame.iv, frame.t, extra=frame.next_public_key)
        if not running_scheme.verify(running_pub, frame.signature, mac):
            if chained:
                raise ChainBroken(i)
            raise AuthenticityFailure("first frame signature invalid")
        try:
            payload = AESGCM(key).decrypt(frame.iv, frame.ciphertext, None)
        except Exception:
            raise DecryptionFailure(i) from None
        yield PlainFrame(frame.t, payload)
        running_pub = frame.next_public_key
        running_scheme = get_scheme(ots_scheme)
        chained = True
