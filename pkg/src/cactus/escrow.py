"""Passphrase-locked recovery bundle.

The escrow blob lives on the camera and is handed to anyone who asks; its
security rests entirely on the passphrase.  Three compartments:

  * the owner keypair, AEAD-sealed under a random 128-bit key whose hex
    spelling IS the displayed passphrase (random 128 bits need no KDF
    stretching; a kdf-id byte is reserved should that ever change),
  * the key material (serialized tree frontier), sealed to the owner's
    public key so the camera itself can never read it,
  * the camera public-key bundle, stored in the clear.

File format: "CESC" | version u8 | kdf_id u8 | nonce 24 | enc_owner_keypair
(len-prefixed) | enc_key_material (len-prefixed) | camera_public_key
(len-prefixed).
"""

from __future__ import annotations

import os
import secrets
import struct
from dataclasses import dataclass

from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import EscrowLocked, MalformedMessage
from .identity import IdentityBundle, PublicBundle, hybrid_open, hybrid_seal
from .keytree import KeyTree

ESCROW_MAGIC = b"CESC"
ESCROW_VERSION = 1
KDF_IDENTITY = 0
NONCE_BYTES = 24


@dataclass(frozen=True)
class Passphrase:
    """128-bit recovery key; the display string is its lowercase hex."""

    key: bytes

    def __post_init__(self):
        if len(self.key) != 16:
            raise ValueError("passphrase keys are 16 bytes")

    @property
    def display(self) -> str:
        return self.key.hex()

    @classmethod
    def generate(cls) -> "Passphrase":
        return cls(secrets.token_bytes(16))

    @classmethod
    def from_display(cls, text: str) -> "Passphrase":
        text = text.strip()
        if len(text) != 32 or text != text.lower():
            raise ValueError("passphrases are 32 lowercase hex characters")
        return cls(bytes.fromhex(text))


def _lp(data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + data


@dataclass
class EscrowMaterial:
    enc_owner_keypair: bytes
    enc_key_material: bytes
    camera_public_key: bytes
    nonce: bytes
    kdf_id: int = KDF_IDENTITY

    def to_bytes(self) -> bytes:
        return (
            ESCROW_MAGIC
            + bytes([ESCROW_VERSION, self.kdf_id])
            + self.nonce
            + _lp(self.enc_owner_keypair)
            + _lp(self.enc_key_material)
            + _lp(self.camera_public_key)
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "EscrowMaterial":
        if data[:4] != ESCROW_MAGIC or len(data) < 6 + NONCE_BYTES:
            raise MalformedMessage("not an escrow blob")
        if data[4] != ESCROW_VERSION:
            raise MalformedMessage(f"unsupported escrow version {data[4]}")
        kdf_id = data[5]
        nonce = data[6 : 6 + NONCE_BYTES]
        off = 6 + NONCE_BYTES
        fields = []
        for _ in range(3):
            if off + 4 > len(data):
                raise MalformedMessage("truncated escrow blob")
            (n,) = struct.unpack(">I", data[off : off + 4])
            off += 4
            if off + n > len(data):
                raise MalformedMessage("truncated escrow blob")
            fields.append(data[off : off + n])
            off += n
        if off != len(data):
            raise MalformedMessage("trailing bytes after escrow blob")
        return cls(fields[0], fields[1], fields[2], nonce, kdf_id)


def build_escrow(
    owner_keys: IdentityBundle, tree: KeyTree, camera_pub: PublicBundle
) -> tuple[EscrowMaterial, Passphrase]:
    """Seal recovery material under a fresh passphrase."""
    passphrase = Passphrase.generate()
    nonce = os.urandom(NONCE_BYTES)
    enc_owner = AESGCM(passphrase.key).encrypt(nonce, owner_keys.to_bytes(), None)
    enc_km = seal_key_material(owner_keys.public, tree)
    return (
        EscrowMaterial(enc_owner, enc_km, camera_pub.to_bytes(), nonce),
        passphrase,
    )


def seal_key_material(owner_pub: PublicBundle, tree: KeyTree) -> bytes:
    """Key material sealed to the owner; used at build time and on every update."""
    return hybrid_seal(owner_pub, tree.to_bytes())


def open_escrow(
    material: EscrowMaterial, passphrase: Passphrase
) -> tuple[IdentityBundle, KeyTree, PublicBundle]:
    """Recover (owner keys, key tree, camera public bundle) or raise EscrowLocked."""
    try:
        owner_bytes = AESGCM(passphrase.key).decrypt(
            material.nonce, material.enc_owner_keypair, None
        )
    except Exception:
        raise EscrowLocked("passphrase did not open the owner keypair") from None
    owner_keys = IdentityBundle.from_bytes(owner_bytes)
    try:
        tree = KeyTree.from_bytes(hybrid_open(owner_keys, material.enc_key_material))
    except MalformedMessage:
        raise EscrowLocked("key material did not open under the recovered owner key") from None
    return owner_keys, tree, PublicBundle.from_bytes(material.camera_public_key)


def camera_public_key(material: EscrowMaterial) -> PublicBundle:
    """The only thing a locked blob reveals."""
    return PublicBundle.from_bytes(material.camera_public_key)
