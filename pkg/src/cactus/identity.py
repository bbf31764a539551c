"""Device identity bundles and the RSA sign-then-encrypt transport.

Each actor (factory-provisioned camera, paired camera, owner, delegatee)
carries one bundle with three members: an RSA-3072 pair for authenticated
encrypted transport (OAEP + PSS), an Ed25519 pair for block signing, and an
X25519 pair for Diffie-Hellman (pairing knowledge proofs and hybrid seals).

RSA-OAEP cannot carry a signed payload of useful size directly, so the
sealed format encrypts a fresh AES key under OAEP and puts signature plus
payload under AES-256-GCM.  The signature always travels inside the
ciphertext.
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding, rsa
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .errors import MalformedMessage

RSA_BITS = 3072
PUB_MAGIC = b"CPUB"
PRIV_MAGIC = b"CPRV"
HYBRID_INFO = b"cactus-hybrid-seal-v1"


def _lp(data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + data


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise MalformedMessage("truncated message")
        out = self.data[self.off : self.off + n]
        self.off += n
        return out

    def take_lp(self) -> bytes:
        (n,) = struct.unpack(">I", self.take(4))
        return self.take(n)

    def done(self):
        if self.off != len(self.data):
            raise MalformedMessage("trailing bytes")


@dataclass(frozen=True)
class PublicBundle:
    """Serialized-friendly public half of an identity."""

    rsa_spki: bytes
    ed25519: bytes
    x25519: bytes

    def to_bytes(self) -> bytes:
        return PUB_MAGIC + b"\x01" + _lp(self.rsa_spki) + _lp(self.ed25519) + _lp(self.x25519)

    @classmethod
    def from_bytes(cls, data: bytes) -> "PublicBundle":
        r = _Reader(data)
        if r.take(4) != PUB_MAGIC or r.take(1) != b"\x01":
            raise MalformedMessage("not a public key bundle")
        out = cls(r.take_lp(), r.take_lp(), r.take_lp())
        r.done()
        return out

    def fingerprint(self) -> bytes:
        return hashlib.sha256(self.to_bytes()).digest()

    def rsa_key(self) -> rsa.RSAPublicKey:
        return serialization.load_der_public_key(self.rsa_spki)

    def x25519_key(self) -> X25519PublicKey:
        return X25519PublicKey.from_public_bytes(self.x25519)


class IdentityBundle:
    """Private identity: RSA-3072 + Ed25519 + X25519."""

    def __init__(self, rsa_priv, ed_priv, x_priv):
        self._rsa = rsa_priv
        self._ed = ed_priv
        self._x = x_priv

    @classmethod
    def generate(cls) -> "IdentityBundle":
        return cls(
            rsa.generate_private_key(public_exponent=65537, key_size=RSA_BITS),
            Ed25519PrivateKey.generate(),
            X25519PrivateKey.generate(),
        )

    @property
    def public(self) -> PublicBundle:
        return PublicBundle(
            self._rsa.public_key().public_bytes(
                serialization.Encoding.DER, serialization.PublicFormat.SubjectPublicKeyInfo
            ),
            self._ed.public_key().public_bytes_raw(),
            self._x.public_key().public_bytes_raw(),
        )

    def to_bytes(self) -> bytes:
        rsa_der = self._rsa.private_bytes(
            serialization.Encoding.DER,
            serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption(),
        )
        return (
            PRIV_MAGIC
            + b"\x01"
            + _lp(rsa_der)
            + _lp(self._ed.private_bytes_raw())
            + _lp(self._x.private_bytes_raw())
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "IdentityBundle":
        r = _Reader(data)
        if r.take(4) != PRIV_MAGIC or r.take(1) != b"\x01":
            raise MalformedMessage("not a private key bundle")
        rsa_priv = serialization.load_der_private_key(r.take_lp(), password=None)
        ed_priv = Ed25519PrivateKey.from_private_bytes(r.take_lp())
        x_priv = X25519PrivateKey.from_private_bytes(r.take_lp())
        r.done()
        return cls(rsa_priv, ed_priv, x_priv)

    # --- primitive operations -------------------------------------------

    def rsa_sign(self, message: bytes) -> bytes:
        return self._rsa.sign(
            message,
            padding.PSS(mgf=padding.MGF1(hashes.SHA256()), salt_length=padding.PSS.MAX_LENGTH),
            hashes.SHA256(),
        )

    def ed25519_sign(self, message: bytes) -> bytes:
        return self._ed.sign(message)

    @property
    def ed25519_private(self) -> Ed25519PrivateKey:
        return self._ed

    def dh(self, peer: PublicBundle) -> bytes:
        return self._x.exchange(peer.x25519_key())

    def _rsa_decrypt(self, ciphertext: bytes) -> bytes:
        return self._rsa.decrypt(
            ciphertext,
            padding.OAEP(mgf=padding.MGF1(hashes.SHA256()), algorithm=hashes.SHA256(), label=None),
        )


def rsa_verify(pub: PublicBundle, signature: bytes, message: bytes) -> bool:
    try:
        pub.rsa_key().verify(
            signature,
            message,
            padding.PSS(mgf=padding.MGF1(hashes.SHA256()), salt_length=padding.PSS.MAX_LENGTH),
            hashes.SHA256(),
        )
        return True
    except (InvalidSignature, ValueError):
        return False


def ed25519_verify(pub_raw: bytes, signature: bytes, message: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(pub_raw).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False


# --- RSA sign-then-encrypt transport -----------------------------------------

def rsa_seal(signer: IdentityBundle, recipient: PublicBundle, payload: bytes) -> bytes:
    """Sign payload with the sender's RSA key, encrypt both to the recipient."""
    signature = signer.rsa_sign(payload)
    session_key = os.urandom(32)
    wrapped = recipient.rsa_key().encrypt(
        session_key,
        padding.OAEP(mgf=padding.MGF1(hashes.SHA256()), algorithm=hashes.SHA256(), label=None),
    )
    nonce = os.urandom(12)
    box = AESGCM(session_key).encrypt(nonce, _lp(signature) + payload, None)
    return _lp(wrapped) + nonce + box


def rsa_open(recipient: IdentityBundle, sender: PublicBundle, blob: bytes) -> bytes:
    """Decrypt a sealed message and verify the sender's signature inside it.

    Raises MalformedMessage on any decryption or signature failure; the
    caller maps that onto its protocol-level error.
    """
    try:
        r = _Reader(blob)
        wrapped = r.take_lp()
        nonce = r.take(12)
        box = r.data[r.off :]
        session_key = recipient._rsa_decrypt(wrapped)
        plain = AESGCM(session_key).decrypt(nonce, box, None)
        rr = _Reader(plain)
        signature = rr.take_lp()
        payload = rr.data[rr.off :]
    except MalformedMessage:
        raise
    except Exception as exc:
        raise MalformedMessage(f"sealed message did not open: {type(exc).__name__}") from None
    if not rsa_verify(sender, signature, payload):
        raise MalformedMessage("sealed message signature invalid")
    return payload


# --- X25519 hybrid seal (for material larger than an RSA block) -------------

def hybrid_seal(recipient: PublicBundle, plaintext: bytes) -> bytes:
    """Ephemeral-DH + AEAD seal to the recipient's X25519 key."""
    eph = X25519PrivateKey.generate()
    shared = eph.exchange(recipient.x25519_key())
    key = HKDF(algorithm=hashes.SHA256(), length=32, salt=None, info=HYBRID_INFO).derive(shared)
    nonce = os.urandom(12)
    ct = AESGCM(key).encrypt(nonce, plaintext, None)
    return eph.public_key().public_bytes_raw() + nonce + ct


def hybrid_open(recipient: IdentityBundle, blob: bytes) -> bytes:
    if len(blob) < 32 + 12 + 16:
        raise MalformedMessage("hybrid blob too short")
    eph_pub = X25519PublicKey.from_public_bytes(blob[:32])
    shared = recipient._x.exchange(eph_pub)
    key = HKDF(algorithm=hashes.SHA256(), length=32, salt=None, info=HYBRID_INFO).derive(shared)
    try:
        return AESGCM(key).decrypt(blob[32:44], blob[44:], None)
    except Exception:
        raise MalformedMessage("hybrid blob did not open") from None
