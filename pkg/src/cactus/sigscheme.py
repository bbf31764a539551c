"""Pluggable signature schemes for block manifests and one-time chains.

The default is Ed25519 (short signatures keep manifests compact); a
hash-based Lamport backend is available behind the same interface for
per-frame one-time signing without any number-theoretic assumption.
One-time pairs are handed out from a small pre-generation pool so keygen
cost is paid ahead of the frame deadline.
"""

from __future__ import annotations

import hashlib
import secrets
from collections import deque

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)


class Ed25519Scheme:
    name = "ed25519"

    @staticmethod
    def generate() -> tuple[Ed25519PrivateKey, bytes]:
        priv = Ed25519PrivateKey.generate()
        return priv, priv.public_key().public_bytes_raw()

    @staticmethod
    def sign(priv: Ed25519PrivateKey, message: bytes) -> bytes:
        return priv.sign(message)

    @staticmethod
    def verify(pub: bytes, signature: bytes, message: bytes) -> bool:
        try:
            Ed25519PublicKey.from_public_bytes(pub).verify(signature, message)
            return True
        except (InvalidSignature, ValueError):
            return False


class LamportScheme:
    """Lamport one-time signatures over SHA-256.

    Secret key: 2x256 random 32-byte values; public key: their hashes,
    concatenated (16 KiB).  Strictly one signature per key.
    """

    name = "lamport"

    @staticmethod
    def generate() -> tuple[list[list[bytes]], bytes]:
        sk = [[secrets.token_bytes(32) for _ in range(256)] for _ in range(2)]
        pk = b"".join(
            hashlib.sha256(sk[bit][i]).digest() for bit in (0, 1) for i in range(256)
        )
        return sk, pk

    @staticmethod
    def sign(priv: list[list[bytes]], message: bytes) -> bytes:
        digest = hashlib.sha256(message).digest()
        out = []
        for i in range(256):
            bit = (digest[i // 8] >> (7 - i % 8)) & 1
            out.append(priv[bit][i])
        return b"".join(out)

    @staticmethod
    def verify(pub: bytes, signature: bytes, message: bytes) -> bool:
        if len(pub) != 2 * 256 * 32 or len(signature) != 256 * 32:
            return False
        digest = hashlib.sha256(message).digest()
        for i in range(256):
            bit = (digest[i // 8] >> (7 - i % 8)) & 1
            expected = pub[(bit * 256 + i) * 32 : (bit * 256 + i + 1) * 32]
            if hashlib.sha256(signature[i * 32 : (i + 1) * 32]).digest() != expected:
                return False
        return True


SCHEMES = {s.name: s for s in (Ed25519Scheme, LamportScheme)}


def get_scheme(name: str):
    try:
        return SCHEMES[name]
    except KeyError:
        raise ValueError(f"unknown signature scheme {name!r}") from None


class OneTimeKeyPool:
    """Pre-generated one-time keypairs, refilled in batches."""

    def __init__(self, scheme_name: str = "ed25519", batch: int = 16):
        self.scheme = get_scheme(scheme_name)
        self.batch = batch
        self._pool: deque = deque()

    def take(self):
        if not self._pool:
            for _ in range(self.batch):
                self._pool.append(self.scheme.generate())
        return self._pool.popleft()
