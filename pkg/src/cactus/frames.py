"""Deterministic synthetic frame source.

A frame is a seeded AES-CTR keystream with the capture timestamp stamped
into the first 8 bytes, so any holder of (seed, t, size) can regenerate the
exact plaintext: the viewer-side oracle for end-to-end byte fidelity.  The
default size models a 480p YUV420 frame (640*480*1.5 bytes).
"""

from __future__ import annotations

import hashlib
import struct

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

DEFAULT_FRAME_BYTES = 460_800


def synthetic_frame(seed: bytes, t_ms: int, size: int = DEFAULT_FRAME_BYTES) -> bytes:
    if size < 8:
        raise ValueError("synthetic frames are at least 8 bytes")
    key = hashlib.sha256(b"cactus-frame-source" + seed).digest()
    nonce = struct.pack(">QQ", t_ms, 0)
    keystream = (
        Cipher(algorithms.AES(key), modes.CTR(nonce)).encryptor().update(bytes(size))
    )
    return struct.pack(">Q", t_ms) + keystream[8:]
