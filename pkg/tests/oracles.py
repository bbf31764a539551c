"""Independent brute-force oracles used to cross-check the library.

Everything here is deliberately built from hashlib/hmac and exhaustive set
arithmetic only, sharing no code path with the package under test.
"""

from __future__ import annotations

import hashlib
import hmac
import struct

SALT = b"cactus-keytree-v1"


def hkdf_sha256(ikm: bytes, info: bytes, length: int = 32) -> bytes:
    prk = hmac.new(SALT, ikm, hashlib.sha256).digest()
    out = b""
    block = b""
    counter = 1
    while len(out) < length:
        block = hmac.new(prk, block + info + bytes([counter]), hashlib.sha256).digest()
        out += block
        counter += 1
    return out[:length]


def child_key(parent_key: bytes, parent_level: int, parent_index: int, bit: int) -> bytes:
    ikm = parent_key if bit == 0 else parent_key[:-1] + bytes([parent_key[-1] ^ 1])
    info = struct.pack(">BQ", parent_level + 1, 2 * parent_index + bit)
    return hkdf_sha256(ikm, info)


def descend(key: bytes, level: int, index: int, target_level: int, target_index: int) -> bytes:
    """Derive the key of a descendant node by walking the path bits."""
    for lvl in range(level + 1, target_level + 1):
        bit = (target_index >> (target_level - lvl)) & 1
        key = child_key(key, lvl - 1, index, bit)
        index = 2 * index + bit
    return key


def all_leaves(root_key: bytes, depth: int) -> list[bytes]:
    """Every leaf key, derived level by level from the root."""
    keys = [root_key]
    for level in range(depth):
        nxt = []
        for index, k in enumerate(keys):
            nxt.append(child_key(k, level, index, 0))
            nxt.append(child_key(k, level, index, 1))
        keys = nxt
    return keys


def exhaustive_cover(start: int, end: int, depth: int) -> set[tuple[int, int]]:
    """Minimal antichain over [start, end) found by exhaustive enumeration.

    A node (level, index) is in the cover iff its leaf span lies entirely in
    the range and its parent's does not.
    """
    want = set(range(start, end))
    cover = set()
    for level in range(depth + 1):
        width = 1 << (depth - level)
        for index in range(1 << level):
            span = set(range(index * width, (index + 1) * width))
            if not span <= want:
                continue
            if level > 0:
                parent_width = width * 2
                pspan = set(
                    range((index // 2) * parent_width, (index // 2 + 1) * parent_width)
                )
                if pspan <= want:
                    continue
            cover.add((level, index))
    return cover


def leaves_under(nodes: set[tuple[int, int]], depth: int) -> set[int]:
    out = set()
    for level, index in nodes:
        width = 1 << (depth - level)
        out.update(range(index * width, (index + 1) * width))
    return out


def is_antichain(nodes: set[tuple[int, int]]) -> bool:
    for a_level, a_index in nodes:
        for b_level, b_index in nodes:
            if (a_level, a_index) == (b_level, b_index):
                continue
            if a_level < b_level and (b_index >> (b_level - a_level)) == a_index:
                return False
    return True
