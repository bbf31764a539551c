"""Initialization and delegation pairing state machines.

Both protocols follow the same seven-step shape: cross-checked public-key
hashes over the visual channel, a Diffie-Hellman knowledge proof over the
insecure channel, then RSA sign-then-encrypt transfers of the session
outputs (the camera's fresh identity and the owner's secrets, or the
delegation grant).  Any out-of-order, malformed, or failed message aborts
the session at its current step and wipes all session secrets.

Sessions are single-threaded state machines; the in-process driver runs the
two sides on two threads joined over one channel, which is where a scripted
adversary can interpose.
"""

from __future__ import annotations

import hashlib
import hmac as hmac_mod
import secrets
import struct
import threading
import time
from dataclasses import dataclass

from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .channels import BACK, FORWARD, SIDE_A, SIDE_B, VisualPayload
from .errors import ChannelClosed, MalformedMessage, PairingAborted
from .escrow import EscrowMaterial, Passphrase, build_escrow
from .identity import IdentityBundle, PublicBundle, rsa_open, rsa_seal
from .keytree import KeyTree, NodeKey, TreeParams

# message tags on the insecure channel
T_KEY_A = 0x01  # side A's public bundle (factory key / delegating owner key)
T_KEY_B = 0x02  # side B's public bundle (owner key / delegatee key)
T_KP_CHALLENGE_A = 0x03
T_KP_RESPONSE_B = 0x04
T_KP_CHALLENGE_B = 0x05
T_KP_RESPONSE_A = 0x06
T_IDENTITY = 0x07  # sealed camera identity bundle (init step 6)
T_SECRETS = 0x08  # sealed owner secrets (init step 7)
T_GRANT = 0x09  # sealed delegation grant (delegation step 6)

KP_SALT = b"cactus-pairing-v1"
KP_INFO = b"knowledge-proof"
GRANT_MAGIC = b"CGRT"


def _now_ms() -> int:
    return int(time.time() * 1000)


def kp_shared_secret(own: IdentityBundle, peer: PublicBundle) -> bytes:
    return HKDF(algorithm=hashes.SHA256(), length=32, salt=KP_SALT, info=KP_INFO).derive(
        own.dh(peer)
    )


def kp_response(shared: bytes, nonce: bytes, responder: str, challenger: str) -> bytes:
    """Role labels bind the response direction, blocking reflection."""
    label = f"{responder}-to-{challenger}".encode()
    return hmac_mod.new(shared, nonce + label, hashlib.sha256).digest()


@dataclass
class InitSecrets:
    """Owner-to-camera payload of init step 7."""

    wifi_credentials: str
    seed_key: bytes
    escrow_blob: bytes
    tree_params: TreeParams  # the camera must learn the negotiated geometry

    def pack(self) -> bytes:
        wifi = self.wifi_credentials.encode()
        return (
            struct.pack(">I", len(wifi))
            + wifi
            + self.seed_key
            + self.tree_params.pack()
            + struct.pack(">I", len(self.escrow_blob))
            + self.escrow_blob
        )

    @classmethod
    def unpack(cls, data: bytes) -> "InitSecrets":
        try:
            (wlen,) = struct.unpack(">I", data[:4])
            wifi = data[4 : 4 + wlen].decode()
            off = 4 + wlen
            seed = data[off : off + 32]
            params = TreeParams.unpack(data[off + 32 : off + 45])
            (elen,) = struct.unpack(">I", data[off + 45 : off + 49])
            blob = data[off + 49 : off + 49 + elen]
            if len(seed) != 32 or len(blob) != elen or off + 49 + elen != len(data):
                raise MalformedMessage("truncated secrets")
            return cls(wifi, seed, blob, params)
        except MalformedMessage:
            raise
        except Exception:
            raise MalformedMessage("malformed secrets payload") from None


def pack_grant(camera_block_pub: bytes, tree: KeyTree) -> bytes:
    return (
        GRANT_MAGIC
        + struct.pack(">I", len(camera_block_pub))
        + camera_block_pub
        + tree.to_bytes()
    )


def unpack_grant(data: bytes) -> tuple[bytes, KeyTree]:
    if data[:4] != GRANT_MAGIC:
        raise MalformedMessage("not a grant")
    (n,) = struct.unpack(">I", data[4:8])
    pub = data[8 : 8 + n]
    if len(pub) != n:
        raise MalformedMessage("truncated grant")
    return pub, KeyTree.from_bytes(data[8 + n :])


class PairingSession:
    """One side of a pairing run.

    State advances strictly in protocol-table row order; the step number is
    what PairingAborted reports.  verify_visual=False models a user who
    skips the hash comparison (used by the adversarial harness only).
    """

    def __init__(
        self,
        role: str,
        keys: IdentityBundle | None = None,
        verify_visual: bool = True,
        rng=None,
        clock=None,
    ):
        if role not in ("camera", "owner", "delegator", "delegatee"):
            raise ValueError(f"unknown role {role!r}")
        self.role = role
        self.state = 0
        self.own_keys = keys
        self.peer_public: PublicBundle | None = None
        self.shared_secret: bytearray | None = None
        self.transcript: list[tuple[str, int, bytes]] = []
        self.verify_visual = verify_visual
        self.rand = rng or (lambda n: secrets.token_bytes(n))
        self.clock = clock or _now_ms
        self.aborted = False
        # init-owner configuration
        self.tree_depth = 32
        self.epoch_seconds = 10
        self.wifi = ""

    # --- bookkeeping -----------------------------------------------------

    def _log(self, direction: str, tag: int, body: bytes):
        self.transcript.append((direction, tag, body))

    def _send(self, endpoint, tag: int, body: bytes):
        self._log("send", tag, body)
        endpoint.send(tag, body)

    def _recv(self, endpoint, expect_tag: int) -> bytes:
        tag, body = endpoint.recv()
        self._log("recv", tag, body)
        if tag != expect_tag:
            self._abort(f"unexpected message tag {tag:#x}")
        return body

    def _abort(self, reason: str):
        step = self.state
        self.wipe()
        raise PairingAborted(step, reason)

    def wipe(self):
        """Drop every secret this session holds."""
        self.aborted = True
        self.own_keys = None
        self.peer_public = None
        if self.shared_secret is not None:
            for i in range(len(self.shared_secret)):
                self.shared_secret[i] = 0
            self.shared_secret = None

    def secret_material(self) -> bytes:
        """Everything secret still referenced; empty after wipe()."""
        parts = []
        if self.own_keys is not None:
            parts.append(self.own_keys.to_bytes())
        if self.shared_secret is not None:
            parts.append(bytes(self.shared_secret))
        return b"".join(parts)

    # --- knowledge proof (step 5 of both tables) --------------------------

    def _kp_roles(self) -> tuple[str, str]:
        pairs = {
            "camera": ("camera", "owner"),
            "owner": ("owner", "camera"),
            "delegator": ("owner", "delegatee"),
            "delegatee": ("delegatee", "owner"),
        }
        return pairs[self.role]

    def run_knowledge_proof(self, endpoint) -> bool:
        """Mutual proof that each side holds the private half of its advertised key.

        Side A (camera / delegating owner) challenges first.  Returns False
        on a wrong response instead of raising; callers abort on False.
        """
        me, peer = self._kp_roles()
        shared = bytes(self.shared_secret)
        first = self.role in ("camera", "delegator")
        my_challenge, my_response = (
            (T_KP_CHALLENGE_A, T_KP_RESPONSE_A) if first else (T_KP_CHALLENGE_B, T_KP_RESPONSE_B)
        )
        peer_challenge, peer_response = (
            (T_KP_CHALLENGE_B, T_KP_RESPONSE_B) if first else (T_KP_CHALLENGE_A, T_KP_RESPONSE_A)
        )
        if first:
            nonce = self.rand(32)
            self._send(endpoint, my_challenge, nonce)
            resp = self._recv(endpoint, peer_response)
            if not hmac_mod.compare_digest(resp, kp_response(shared, nonce, peer, me)):
                return False
            peer_nonce = self._recv(endpoint, peer_challenge)
            self._send(endpoint, my_response, kp_response(shared, peer_nonce, me, peer))
        else:
            peer_nonce = self._recv(endpoint, peer_challenge)
            self._send(endpoint, my_response, kp_response(shared, peer_nonce, me, peer))
            nonce = self.rand(32)
            self._send(endpoint, my_challenge, nonce)
            resp = self._recv(endpoint, peer_response)
            if not hmac_mod.compare_digest(resp, kp_response(shared, nonce, peer, me)):
                return False
        return True


def knowledge_proof(session: PairingSession, endpoint) -> bool:
    """Standalone step-5 exchange for a session with peer key and DH secret set."""
    return session.run_knowledge_proof(endpoint)


# --- results -------------------------------------------------------------------

@dataclass
class CameraInitResult:
    identity: IdentityBundle
    owner_public: PublicBundle
    tree: KeyTree
    escrow: EscrowMaterial
    wifi_credentials: str  # carried, never acted upon


@dataclass
class OwnerInitResult:
    keys: IdentityBundle
    camera_public: PublicBundle
    tree: KeyTree
    passphrase: Passphrase
    escrow: EscrowMaterial


@dataclass
class DelegationResult:
    camera_block_pub: bytes
    grant: KeyTree


# --- per-side procedures ---------------------------------------------------------

def run_init_camera(
    session: PairingSession, visual, endpoint, factory_keys: IdentityBundle
) -> CameraInitResult:
    session.own_keys = factory_keys
    try:
        session.state = 1  # QR on the device back
        pub_bytes = factory_keys.public.to_bytes()
        visual.show(FORWARD, VisualPayload(hashlib.sha256(pub_bytes).digest()))
        session.state = 2
        session._send(endpoint, T_KEY_A, pub_bytes)
        session.state = 3
        body = session._recv(endpoint, T_KEY_B)
        try:
            session.peer_public = PublicBundle.from_bytes(body)
        except MalformedMessage:
            session._abort("unparseable owner key")
        peer_hash = hashlib.sha256(body).digest()
        session.state = 4
        if session.verify_visual:
            seen = visual.scan(BACK)
            if not hmac_mod.compare_digest(seen.hash, peer_hash):
                session._abort("owner key hash does not match the visual channel")
        session.state = 5
        session.shared_secret = bytearray(kp_shared_secret(factory_keys, session.peer_public))
        if not session.run_knowledge_proof(endpoint):
            session._abort("owner failed the knowledge proof")
        session.state = 6
        identity = IdentityBundle.generate()
        session._send(
            endpoint,
            T_IDENTITY,
            rsa_seal(factory_keys, session.peer_public, identity.public.to_bytes()),
        )
        session.state = 7
        blob = session._recv(endpoint, T_SECRETS)
        try:
            secrets_payload = InitSecrets.unpack(rsa_open(identity, session.peer_public, blob))
            escrow = EscrowMaterial.from_bytes(secrets_payload.escrow_blob)
        except MalformedMessage:
            session._abort("secrets transfer failed authentication")
        tree = KeyTree.from_seed(secrets_payload.tree_params, secrets_payload.seed_key)
        return CameraInitResult(
            identity,
            session.peer_public,
            tree,
            escrow,
            secrets_payload.wifi_credentials,
        )
    except ChannelClosed:
        session._abort("channel closed")


def run_init_owner(session: PairingSession, visual, endpoint) -> OwnerInitResult:
    try:
        session.state = 1  # scan the device QR
        expected = visual.scan(FORWARD) if session.verify_visual else None
        session.state = 2
        body = session._recv(endpoint, T_KEY_A)
        if session.verify_visual and not hmac_mod.compare_digest(
            hashlib.sha256(body).digest(), expected.hash
        ):
            session._abort("camera key hash does not match the scanned code")
        try:
            session.peer_public = PublicBundle.from_bytes(body)
        except MalformedMessage:
            session._abort("unparseable camera key")
        session.state = 3
        if session.own_keys is None:
            session.own_keys = IdentityBundle.generate()
        own_pub_bytes = session.own_keys.public.to_bytes()
        session._send(endpoint, T_KEY_B, own_pub_bytes)
        session.state = 4  # hold our QR up to the camera
        visual.show(BACK, VisualPayload(hashlib.sha256(own_pub_bytes).digest()))
        session.state = 5
        session.shared_secret = bytearray(kp_shared_secret(session.own_keys, session.peer_public))
        if not session.run_knowledge_proof(endpoint):
            session._abort("camera failed the knowledge proof")
        session.state = 6
        blob = session._recv(endpoint, T_IDENTITY)
        try:
            camera_public = PublicBundle.from_bytes(
                rsa_open(session.own_keys, session.peer_public, blob)
            )
        except MalformedMessage:
            session._abort("camera identity failed authentication")
        session.state = 7
        t0 = session.clock()
        params = TreeParams(session.tree_depth, session.epoch_seconds, t0)
        seed = session.rand(32)
        tree = KeyTree.from_seed(params, seed)
        escrow, passphrase = build_escrow(session.own_keys, tree, camera_public)
        payload = InitSecrets(session.wifi, seed, escrow.to_bytes(), params).pack()
        session._send(endpoint, T_SECRETS, rsa_seal(session.own_keys, camera_public, payload))
        return OwnerInitResult(session.own_keys, camera_public, tree, passphrase, escrow)
    except ChannelClosed:
        session._abort("channel closed")


def run_delegation_owner(
    session: PairingSession,
    visual,
    endpoint,
    grant: list[NodeKey],
    params: TreeParams,
    camera_block_pub: bytes = b"",
) -> None:
    if session.own_keys is None:
        raise ValueError("the delegating owner pairs with its existing keys")
    try:
        session.state = 1
        own_pub_bytes = session.own_keys.public.to_bytes()
        visual.show(FORWARD, VisualPayload(hashlib.sha256(own_pub_bytes).digest()))
        session.state = 2
        session._send(endpoint, T_KEY_A, own_pub_bytes)
        session.state = 3
        body = session._recv(endpoint, T_KEY_B)
        try:
            session.peer_public = PublicBundle.from_bytes(body)
        except MalformedMessage:
            session._abort("unparseable delegatee key")
        peer_hash = hashlib.sha256(body).digest()
        session.state = 4
        if session.verify_visual:
            seen = visual.scan(BACK)
            if not hmac_mod.compare_digest(seen.hash, peer_hash):
                session._abort("delegatee key hash does not match the visual channel")
        session.state = 5
        session.shared_secret = bytearray(
            kp_shared_secret(session.own_keys, session.peer_public)
        )
        if not session.run_knowledge_proof(endpoint):
            session._abort("delegatee failed the knowledge proof")
        session.state = 6
        grant_bytes = pack_grant(camera_block_pub, KeyTree(params, grant))
        session._send(
            endpoint, T_GRANT, rsa_seal(session.own_keys, session.peer_public, grant_bytes)
        )
    except ChannelClosed:
        session._abort("channel closed")


def run_delegation_delegatee(session: PairingSession, visual, endpoint) -> DelegationResult:
    try:
        session.state = 1
        expected = visual.scan(FORWARD) if session.verify_visual else None
        session.state = 2
        body = session._recv(endpoint, T_KEY_A)
        if session.verify_visual and not hmac_mod.compare_digest(
            hashlib.sha256(body).digest(), expected.hash
        ):
            session._abort("owner key hash does not match the scanned code")
        try:
            session.peer_public = PublicBundle.from_bytes(body)
        except MalformedMessage:
            session._abort("unparseable owner key")
        session.state = 3
        if session.own_keys is None:
            session.own_keys = IdentityBundle.generate()
        own_pub_bytes = session.own_keys.public.to_bytes()
        session._send(endpoint, T_KEY_B, own_pub_bytes)
        session.state = 4
        visual.show(BACK, VisualPayload(hashlib.sha256(own_pub_bytes).digest()))
        session.state = 5
        session.shared_secret = bytearray(
            kp_shared_secret(session.own_keys, session.peer_public)
        )
        if not session.run_knowledge_proof(endpoint):
            session._abort("owner failed the knowledge proof")
        session.state = 6
        blob = session._recv(endpoint, T_GRANT)
        try:
            camera_pub, tree = unpack_grant(
                rsa_open(session.own_keys, session.peer_public, blob)
            )
        except MalformedMessage:
            session._abort("grant failed authentication")
        return DelegationResult(camera_pub, tree)
    except ChannelClosed:
        session._abort("channel closed")


# --- in-process drivers -----------------------------------------------------------

def _drive(side_a, side_b, channel) -> tuple:
    """Run both sides on threads; re-raise the earliest-step abort, if any."""
    results: dict[str, object] = {}

    def runner(name, fn):
        try:
            results[name] = fn()
        except PairingAborted as exc:
            results[name] = exc
            channel.close()
        except Exception as exc:  # pragma: no cover - defensive
            results[name] = exc
            channel.close()

    threads = [
        threading.Thread(target=runner, args=("a", side_a), daemon=True),
        threading.Thread(target=runner, args=("b", side_b), daemon=True),
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    aborts = [r for r in results.values() if isinstance(r, PairingAborted)]
    if aborts:
        primary = min(aborts, key=lambda e: e.step)
        primary.side_results = dict(results)
        raise primary
    for r in results.values():
        if isinstance(r, Exception):
            raise r
    return results["a"], results["b"]


def init_pairing(
    camera_session: PairingSession,
    owner_session: PairingSession,
    visual_channel,
    insecure_channel,
    factory_keys: IdentityBundle,
) -> tuple[CameraInitResult, OwnerInitResult]:
    """Run the full initialization table; raises PairingAborted on any attack."""
    return _drive(
        lambda: run_init_camera(
            camera_session, visual_channel, insecure_channel.endpoint(SIDE_A), factory_keys
        ),
        lambda: run_init_owner(
            owner_session, visual_channel, insecure_channel.endpoint(SIDE_B)
        ),
        insecure_channel,
    )


def delegation_pairing(
    owner_session: PairingSession,
    delegatee_session: PairingSession,
    visual_channel,
    insecure_channel,
    grant: list[NodeKey],
    params: TreeParams,
    camera_block_pub: bytes = b"",
) -> tuple[None, DelegationResult]:
    return _drive(
        lambda: run_delegation_owner(
            owner_session,
            visual_channel,
            insecure_channel.endpoint(SIDE_A),
            grant,
            params,
            camera_block_pub,
        ),
        lambda: run_delegation_delegatee(
            delegatee_session, visual_channel, insecure_channel.endpoint(SIDE_B)
        ),
        insecure_channel,
    )
