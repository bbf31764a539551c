"""Scripted man-in-the-middle strategies for the pairing adversary hook.

Each class rides the inline channel hook and models one attack from the
threat analysis:

  * KeySubstitution: swap the first public key for the attacker's own.
    Defeated by the visual hash cross-check (abort at step 2).
  * RelayHijack: forward the keys untouched, then answer the knowledge
    proof without the matching private key (abort at step 5).
  * ReflectChallenge: bounce a side's own challenge back at it; role
    labels and strict message ordering kill it (abort at step 5).
  * FakeCameraMitm / FakeOwnerMitm: full impersonation of one end.  These
    only succeed when the victim skips its visual verification, which is
    exactly the property the visual channel buys.
"""

from __future__ import annotations

import hashlib
import secrets

from .channels import Adversary, SIDE_A, SIDE_B
from .identity import IdentityBundle, PublicBundle, rsa_open, rsa_seal
from .keytree import KeyTree, TreeParams
from .pairing import (
    InitSecrets,
    T_IDENTITY,
    T_KEY_A,
    T_KEY_B,
    T_KP_CHALLENGE_A,
    T_KP_CHALLENGE_B,
    T_KP_RESPONSE_A,
    T_KP_RESPONSE_B,
    T_SECRETS,
    kp_response,
    kp_shared_secret,
)

_JUNK = 0xFF  # nudges a starved victim out of recv so it aborts immediately


def _other(side: str) -> str:
    return SIDE_B if side == SIDE_A else SIDE_A


class KeySubstitution(Adversary):
    """Replace side A's advertised key with the attacker's well-formed key."""

    def __init__(self, attacker_keys: IdentityBundle):
        self.keys = attacker_keys

    def on_message(self, sender, tag, body):
        if sender == SIDE_A and tag == T_KEY_A:
            return [(SIDE_B, T_KEY_A, self.keys.public.to_bytes())]
        return None


class RelayHijack(Adversary):
    """Forward the real keys, then answer the proof with guesses.

    Models an attacker who cannot substitute keys (the hashes would give it
    away) and therefore never learns the DH secret.
    """

    def on_message(self, sender, tag, body):
        if tag in (T_KP_RESPONSE_A, T_KP_RESPONSE_B):
            return [(_other(sender), tag, secrets.token_bytes(len(body)))]
        return None


class ReflectChallenge(Adversary):
    """Send side A's own knowledge-proof challenge back to it, relabeled."""

    def on_message(self, sender, tag, body):
        if sender == SIDE_A and tag == T_KP_CHALLENGE_A:
            return [(SIDE_A, T_KP_CHALLENGE_B, body)]
        return None


class FakeCameraMitm(Adversary):
    """Impersonate the camera toward the owner and steal the init secrets.

    Succeeds exactly when the owner does not compare the camera key hash
    against the visual channel.  The real camera is starved and nudged into
    an abort once the secrets are in hand.
    """

    def __init__(self, attacker_keys: IdentityBundle):
        self.keys = attacker_keys
        self.identity = None
        self.owner_public: PublicBundle | None = None
        self.captured: InitSecrets | None = None

    def on_message(self, sender, tag, body):
        if sender == SIDE_A:
            if tag == T_KEY_A:
                return [(SIDE_B, T_KEY_A, self.keys.public.to_bytes())]
            return []  # starve the real camera
        if tag == T_KEY_B:
            self.owner_public = PublicBundle.from_bytes(body)
            return [(SIDE_B, T_KP_CHALLENGE_A, secrets.token_bytes(32))]
        if tag == T_KP_RESPONSE_B:
            return []
        if tag == T_KP_CHALLENGE_B:
            shared = kp_shared_secret(self.keys, self.owner_public)
            self.identity = IdentityBundle.generate()
            sealed = rsa_seal(self.keys, self.owner_public, self.identity.public.to_bytes())
            return [
                (SIDE_B, T_KP_RESPONSE_A, kp_response(shared, body, "camera", "owner")),
                (SIDE_B, T_IDENTITY, sealed),
            ]
        if tag == T_SECRETS:
            self.captured = InitSecrets.unpack(
                rsa_open(self.identity, self.owner_public, body)
            )
            return [(SIDE_A, _JUNK, b"")]
        return []


class FakeOwnerMitm(Adversary):
    """Impersonate the owner toward the camera and plant attacker secrets.

    Succeeds exactly when the camera skips the visual check of the owner
    key hash.  The real owner is starved and nudged into an abort.
    """

    def __init__(self, attacker_keys: IdentityBundle, depth: int = 4, epoch_seconds: int = 10):
        self.keys = attacker_keys
        self.params = TreeParams(depth, epoch_seconds, 0)
        self.seed = secrets.token_bytes(32)
        self.camera_factory: PublicBundle | None = None
        self.camera_identity: PublicBundle | None = None

    def on_message(self, sender, tag, body):
        if sender == SIDE_B:
            return []  # starve the real owner
        if tag == T_KEY_A:
            self.camera_factory = PublicBundle.from_bytes(body)
            return [(SIDE_A, T_KEY_B, self.keys.public.to_bytes())]
        if tag == T_KP_CHALLENGE_A:
            shared = kp_shared_secret(self.keys, self.camera_factory)
            return [
                (SIDE_A, T_KP_RESPONSE_B, kp_response(shared, body, "owner", "camera")),
                (SIDE_A, T_KP_CHALLENGE_B, secrets.token_bytes(32)),
            ]
        if tag == T_KP_RESPONSE_A:
            return []
        if tag == T_IDENTITY:
            self.camera_identity = PublicBundle.from_bytes(
                rsa_open(self.keys, self.camera_factory, body)
            )
            from .escrow import build_escrow

            tree = KeyTree.from_seed(self.params, self.seed)
            escrow, _ = build_escrow(self.keys, tree, self.camera_identity)
            payload = InitSecrets("", self.seed, escrow.to_bytes(), self.params).pack()
            return [
                (SIDE_A, T_SECRETS, rsa_seal(self.keys, self.camera_identity, payload)),
                (SIDE_B, _JUNK, b""),
            ]
        return []


def visual_fingerprint(bundle: PublicBundle) -> bytes:
    return hashlib.sha256(bundle.to_bytes()).digest()


# Named strategies reachable from the command line (--adversary <name>).
SCRIPTED = {
    "substitute-key": lambda keys: KeySubstitution(keys),
    "relay-hijack": lambda keys: RelayHijack(),
    "reflect-challenge": lambda keys: ReflectChallenge(),
}
