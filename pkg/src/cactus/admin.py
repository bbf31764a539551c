"""Authenticated owner-to-camera control plane.

Requests travel over the same framed insecure channel as everything else;
no transport security is assumed.  Protection is the owner's RSA-PSS
signature over tag || timestamp || body, plus a freshness window: a request
is applied only if its timestamp is within two minutes of the camera clock
AND strictly greater than the last accepted one.  Confidential payloads
(updated key material) are sealed to the owner's own public key before
signing, so the camera relays them without ever reading the tree.

Request wire format: tag u8 || ts u64-be || body || sig (len-prefixed).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .devices import CameraDevice, OwnerDevice
from .errors import (
    CactusError,
    MalformedMessage,
    Rejected,
    ReplayRejected,
)
from .escrow import EscrowMaterial, Passphrase, open_escrow, seal_key_material
from .identity import PublicBundle, rsa_verify
from .keytree import EpochRange, KeyTree

T_ADMIN_DELETE = 0x10
T_ADMIN_RESET = 0x11
T_ADMIN_UPDATE_KM = 0x12
T_ADMIN_ACK = 0x13
T_ESCROW_REQUEST = 0x20
T_ESCROW_BLOB = 0x21

ADMIN_TAGS = (T_ADMIN_DELETE, T_ADMIN_RESET, T_ADMIN_UPDATE_KM)
KIND_BY_TAG = {
    T_ADMIN_DELETE: "delete_range",
    T_ADMIN_RESET: "factory_reset",
    T_ADMIN_UPDATE_KM: "update_key_material",
}
TAG_BY_KIND = {v: k for k, v in KIND_BY_TAG.items()}

ACK_APPLIED = 0
ACK_ALREADY_RESET = 1
ACK_REJECTED = 2
ACK_REPLAY = 3

REPLAY_WINDOW_MS = 120_000


@dataclass(frozen=True)
class AdminRequest:
    kind: str
    timestamp: int
    range: EpochRange | None
    payload: bytes
    signature: bytes

    @property
    def tag(self) -> int:
        return TAG_BY_KIND[self.kind]

    def body(self) -> bytes:
        if self.kind == "delete_range":
            return (
                struct.pack(">QQ", self.range.start, self.range.end)
                + struct.pack(">I", len(self.payload))
                + self.payload
            )
        if self.kind == "update_key_material":
            return struct.pack(">I", len(self.payload)) + self.payload
        return b""

    def signing_input(self) -> bytes:
        return bytes([self.tag]) + struct.pack(">Q", self.timestamp) + self.body()

    def to_wire(self) -> bytes:
        return (
            struct.pack(">Q", self.timestamp)
            + self.body()
            + struct.pack(">I", len(self.signature))
            + self.signature
        )


def make_request(
    owner: OwnerDevice,
    kind: str,
    rng: EpochRange | None = None,
    payload: bytes = b"",
    timestamp: int | None = None,
) -> AdminRequest:
    ts = owner.next_timestamp() if timestamp is None else timestamp
    unsigned = AdminRequest(kind, ts, rng, payload, b"")
    return AdminRequest(kind, ts, rng, payload, owner.keys.rsa_sign(unsigned.signing_input()))


def parse_request(tag: int, wire: bytes) -> AdminRequest:
    try:
        kind = KIND_BY_TAG[tag]
        (ts,) = struct.unpack(">Q", wire[:8])
        off = 8
        rng = None
        payload = b""
        if kind == "delete_range":
            start, end = struct.unpack(">QQ", wire[off : off + 16])
            rng = EpochRange(start, end)
            off += 16
        if kind in ("delete_range", "update_key_material"):
            (n,) = struct.unpack(">I", wire[off : off + 4])
            off += 4
            payload = wire[off : off + n]
            if len(payload) != n:
                raise MalformedMessage("truncated payload")
            off += n
        (sig_len,) = struct.unpack(">I", wire[off : off + 4])
        off += 4
        signature = wire[off : off + sig_len]
        if len(signature) != sig_len or off + sig_len != len(wire):
            raise MalformedMessage("bad signature framing")
        return AdminRequest(kind, ts, rng, payload, signature)
    except (MalformedMessage, ValueError):
        raise
    except Exception:
        raise MalformedMessage("malformed admin request") from None


def verify_request(owner_pub: PublicBundle, request: AdminRequest) -> bool:
    return rsa_verify(owner_pub, request.signature, request.signing_input())


# --- camera side --------------------------------------------------------------

def camera_apply(camera: CameraDevice, tag: int, wire: bytes) -> int:
    """Validate and apply one admin request; returns an ACK code.

    Every state-mutating operation on an initialized camera demands a valid
    owner signature and a fresh, strictly newer timestamp.  A reset on an
    uninitialized camera is an acknowledged no-op.
    """
    if camera.state is None:
        return ACK_ALREADY_RESET if tag == T_ADMIN_RESET else ACK_REJECTED
    try:
        request = parse_request(tag, wire)
    except (MalformedMessage, ValueError):
        return ACK_REJECTED
    if not verify_request(camera.state.owner_public, request):
        return ACK_REJECTED
    now = camera.clock()
    if request.timestamp <= camera.state.last_admin_ts:
        return ACK_REPLAY
    if abs(request.timestamp - now) > REPLAY_WINDOW_MS:
        return ACK_REPLAY
    camera.state.last_admin_ts = request.timestamp
    if request.kind == "delete_range":
        if request.range.end > camera.state.tree.params.num_epochs:
            return ACK_REJECTED
        camera.state.tree.puncture(request.range)
        camera.state.escrow.enc_key_material = request.payload
    elif request.kind == "update_key_material":
        camera.state.escrow.enc_key_material = request.payload
    elif request.kind == "factory_reset":
        camera.factory_reset()
    return ACK_APPLIED


def camera_handle_message(camera: CameraDevice, tag: int, body: bytes):
    """Dispatch one inbound message; returns the (tag, body) reply or None."""
    if tag in ADMIN_TAGS:
        return T_ADMIN_ACK, bytes([camera_apply(camera, tag, body)])
    if tag == T_ESCROW_REQUEST:
        # escrow is served to anyone in range; the passphrase is the lock
        if camera.state is None:
            return T_ESCROW_BLOB, b""
        return T_ESCROW_BLOB, camera.state.escrow.to_bytes()
    return None

def camera_serve(camera: CameraDevice, endpoint, max_messages: int | None = None):
    """Serve admin/escrow requests until the channel closes.

    Requests are applied strictly serially in arrival order.
    """
    served = 0
    while max_messages is None or served < max_messages:
        try:
            tag, body = endpoint.recv()
        except CactusError:
            return
        reply = camera_handle_message(camera, tag, body)
        if reply is not None:
            endpoint.send(*reply)
        served += 1


# --- owner side -----------------------------------------------------------------

def _send_and_check(owner_endpoint, request: AdminRequest) -> str:
    owner_endpoint.send(request.tag, request.to_wire())
    tag, body = owner_endpoint.recv()
    if tag != T_ADMIN_ACK or len(body) != 1:
        raise MalformedMessage("bad admin ack")
    code = body[0]
    if code == ACK_APPLIED:
        return "applied"
    if code == ACK_ALREADY_RESET:
        return "already_reset"
    if code == ACK_REPLAY:
        raise ReplayRejected("camera rejected the request timestamp")
    raise Rejected("camera rejected the request signature")


def delete_videos(owner: OwnerDevice, endpoint, rng: EpochRange) -> str:
    """Puncture the owner tree, then order the camera to do the same.

    The updated key material (sealed to the owner key) replaces the escrow
    copy, so the deleted epochs are unrecoverable from owner, camera, and
    escrow combined.  Delegatees who already hold keys are out of scope.
    """
    owner.tree.puncture(rng)
    key_material = seal_key_material(owner.keys.public, owner.tree)
    request = make_request(owner, "delete_range", rng=rng, payload=key_material)
    return _send_and_check(endpoint, request)


def update_escrow(owner: OwnerDevice, endpoint, tree: KeyTree | None = None) -> str:
    key_material = seal_key_material(owner.keys.public, tree or owner.tree)
    request = make_request(owner, "update_key_material", payload=key_material)
    return _send_and_check(endpoint, request)


def factory_reset(owner: OwnerDevice, endpoint) -> str:
    result = _send_and_check(endpoint, make_request(owner, "factory_reset"))
    owner.wipe_association()
    return result


# --- recovery -----------------------------------------------------------------

def fetch_escrow(endpoint) -> EscrowMaterial:
    """Unauthenticated escrow fetch: anyone in range may ask."""
    endpoint.send(T_ESCROW_REQUEST, b"")
    tag, body = endpoint.recv()
    if tag != T_ESCROW_BLOB or not body:
        raise MalformedMessage("camera did not return escrow material")
    return EscrowMaterial.from_bytes(body)


def recover(endpoint, passphrase: Passphrase, clock=None) -> OwnerDevice:
    """Rebuild an owner device from the camera's escrow blob.

    The blob is always delivered; without the right passphrase this raises
    EscrowLocked and the caller learned nothing but the camera public key.
    """
    material = fetch_escrow(endpoint)
    owner_keys, tree, camera_pub = open_escrow(material, passphrase)
    kwargs = {"clock": clock} if clock is not None else {}
    return OwnerDevice(owner_keys, camera_pub, tree, **kwargs)
