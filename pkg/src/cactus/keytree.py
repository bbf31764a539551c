"""Epoch-indexed binary key-derivation tree.

One symmetric key per fixed-width time epoch, arranged as the leaves of a
binary tree of depth ``depth``.  Children derive from parents through
HKDF-SHA256, so holding any node yields every epoch below it and nothing
above it.  The tree state is a sparse frontier: an antichain of retained
nodes.  Delegation hands out the minimal cover of an epoch window; deletion
(puncture) removes the ability to ever re-derive a window, which is the
cryptographic-erasure mechanism.

A KeyTree is a single-writer value: concurrent readers are fine between
mutations, but mutations must not race.  Key derivation itself is pure.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Iterator

from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .errors import (
    BeforeOrigin,
    KeyUnavailable,
    LevelOverflow,
    MalformedMessage,
    TreeLifespanExceeded,
)

KEY_BYTES = 32
HKDF_SALT = b"cactus-keytree-v1"

# 365-day year; reproduces every published lifespan cell of the reference
# parameter table after rounding.
YEAR_SECONDS = 365 * 24 * 3600

MAX_DEPTH = 40


@dataclass(frozen=True)
class TreeParams:
    """Tree geometry: depth, epoch width in seconds, and origin timestamp (ms)."""

    depth: int
    epoch_seconds: int
    t0: int

    def __post_init__(self):
        if not 1 <= self.depth <= MAX_DEPTH:
            raise ValueError(f"depth must be in [1, {MAX_DEPTH}], got {self.depth}")
        if self.epoch_seconds < 1:
            raise ValueError("epoch_seconds must be >= 1")
        if self.t0 < 0:
            raise ValueError("t0 must be non-negative milliseconds")

    @property
    def num_epochs(self) -> int:
        return 1 << self.depth

    def pack(self) -> bytes:
        return struct.pack(">BIQ", self.depth, self.epoch_seconds, self.t0)

    @classmethod
    def unpack(cls, data: bytes) -> "TreeParams":
        if len(data) != 13:
            raise MalformedMessage("tree params must be 13 bytes")
        depth, delta, t0 = struct.unpack(">BIQ", data)
        return cls(depth, delta, t0)


@dataclass(frozen=True, order=True)
class NodeId:
    """Position in the tree: level 0 is the root, level == depth are leaves."""

    level: int
    index: int

    def child(self, side: str) -> "NodeId":
        bit = {"left": 0, "right": 1}[side]
        return NodeId(self.level + 1, 2 * self.index + bit)

    def span(self, depth: int) -> tuple[int, int]:
        """Half-open epoch interval covered by this node's leaves."""
        width = 1 << (depth - self.level)
        return self.index * width, (self.index + 1) * width

    def is_ancestor_of(self, other: "NodeId") -> bool:
        if other.level <= self.level:
            return False
        return (other.index >> (other.level - self.level)) == self.index


@dataclass(frozen=True)
class NodeKey:
    """A tree node together with its 32-byte symmetric key."""

    id: NodeId
    key: bytes

    def __post_init__(self):
        if len(self.key) != KEY_BYTES:
            raise ValueError("node keys are exactly 32 bytes")


@dataclass(frozen=True)
class EpochRange:
    """Half-open epoch interval [start, end).  start == end is the empty range."""

    start: int
    end: int

    def __post_init__(self):
        if self.start < 0 or self.end < self.start:
            raise ValueError(f"invalid epoch range [{self.start}, {self.end})")

    def __bool__(self) -> bool:
        return self.end > self.start

    def __contains__(self, epoch: int) -> bool:
        return self.start <= epoch < self.end

    def __iter__(self) -> Iterator[int]:
        return iter(range(self.start, self.end))


def _hkdf(ikm: bytes, info: bytes) -> bytes:
    return HKDF(
        algorithm=hashes.SHA256(), length=KEY_BYTES, salt=HKDF_SALT, info=info
    ).derive(ikm)


def _flip_lsb(key: bytes) -> bytes:
    # "xor 1" on the key read as a big-endian integer: flip the low bit of
    # the final byte.
    return key[:-1] + bytes([key[-1] ^ 1])


def derive_child(parent: NodeKey, side: str, depth: int) -> NodeKey:
    """Derive one child key: left = HKDF(k), right = HKDF(k xor 1).

    The HKDF info binds the child's (level, index) so equal key bytes at
    different positions never produce colliding descendants.
    """
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    if parent.id.level >= depth:
        raise LevelOverflow(f"node at level {parent.id.level} is a leaf")
    child_id = parent.id.child(side)
    ikm = parent.key if side == "left" else _flip_lsb(parent.key)
    info = struct.pack(">BQ", child_id.level, child_id.index)
    return NodeKey(child_id, _hkdf(ikm, info))


def _derive_descendant(node: NodeKey, target: NodeId, depth: int) -> NodeKey:
    """Walk from a node down to one of its descendants."""
    current = node
    for level in range(node.id.level + 1, target.level + 1):
        bit = (target.index >> (target.level - level)) & 1
        current = derive_child(current, "right" if bit else "left", depth)
    return current


def epoch_of(t_ms: int, params: TreeParams) -> int:
    """Map an absolute millisecond timestamp onto its epoch index."""
    if t_ms < params.t0:
        raise BeforeOrigin(f"t={t_ms} predates origin t0={params.t0}")
    epoch = (t_ms - params.t0) // (params.epoch_seconds * 1000)
    if epoch >= params.num_epochs:
        raise TreeLifespanExceeded(
            f"epoch {epoch} beyond the {params.num_epochs}-leaf tree"
        )
    return epoch


def _cover_ids(start: int, end: int, depth: int) -> list[NodeId]:
    """Canonical minimal antichain of node ids spanning exactly [start, end)."""
    out: list[NodeId] = []
    pos = start
    while pos < end:
        # largest aligned power-of-two block starting at pos that fits
        width = pos & -pos if pos else 1 << depth
        while width > end - pos:
            width //= 2
        level = depth - width.bit_length() + 1
        out.append(NodeId(level, pos // width))
        pos += width
    return out


class KeyTree:
    """Sparse frontier of retained node keys over a fixed tree geometry.

    Retained keys are held in zeroizable buffers; removal overwrites the key
    bytes before the buffer is released.
    """

    def __init__(self, params: TreeParams, nodes: Iterable[NodeKey] = ()):
        self.params = params
        self._nodes: dict[NodeId, bytearray] = {}
        for nk in nodes:
            self._insert(nk.id, nk.key)

    @classmethod
    def from_seed(cls, params: TreeParams, seed: bytes) -> "KeyTree":
        """Full tree: the root alone covers every epoch."""
        return cls(params, [NodeKey(NodeId(0, 0), seed)])

    # --- introspection -------------------------------------------------

    @property
    def depth(self) -> int:
        return self.params.depth

    @property
    def retained(self) -> list[NodeKey]:
        return [NodeKey(nid, bytes(buf)) for nid, buf in sorted(self._nodes.items())]

    @property
    def retained_ids(self) -> set[NodeId]:
        return set(self._nodes)

    def __len__(self) -> int:
        return len(self._nodes)

    def available_spans(self) -> list[tuple[int, int]]:
        """Sorted, disjoint epoch intervals this frontier can still derive."""
        spans = sorted(nid.span(self.depth) for nid in self._nodes)
        merged: list[tuple[int, int]] = []
        for lo, hi in spans:
            if merged and merged[-1][1] == lo:
                merged[-1] = (merged[-1][0], hi)
            else:
                merged.append((lo, hi))
        return merged

    def is_available(self, epoch: int) -> bool:
        return self._retained_ancestor(epoch) is not None

    def first_missing(self, rng: EpochRange) -> int | None:
        """First epoch in the range with no retained ancestor, if any."""
        pos = rng.start
        for lo, hi in self.available_spans():
            if hi <= pos:
                continue
            if lo > pos:
                break
            pos = hi
            if pos >= rng.end:
                return None
        return pos if pos < rng.end else None

    # --- internal frontier maintenance ---------------------------------

    def _insert(self, nid: NodeId, key: bytes):
        if not (0 <= nid.level <= self.depth and 0 <= nid.index < (1 << nid.level)):
            raise ValueError(f"node {nid} outside a depth-{self.depth} tree")
        for other in self._nodes:
            if other == nid or other.is_ancestor_of(nid) or nid.is_ancestor_of(other):
                raise ValueError(f"retained set would lose the frontier property at {nid}")
        self._nodes[nid] = bytearray(key)

    def _remove(self, nid: NodeId):
        buf = self._nodes.pop(nid)
        for i in range(len(buf)):
            buf[i] = 0

    def _retained_ancestor(self, epoch: int) -> NodeKey | None:
        leaf = NodeId(self.depth, epoch)
        for level in range(self.depth, -1, -1):
            nid = NodeId(level, epoch >> (self.depth - level))
            buf = self._nodes.get(nid)
            if buf is not None:
                return NodeKey(nid, bytes(buf))
        return None

    # --- operations -----------------------------------------------------

    def key_for_epoch(self, epoch: int) -> bytes:
        """Leaf key for one epoch, derived from its unique retained ancestor."""
        if not 0 <= epoch < self.params.num_epochs:
            raise TreeLifespanExceeded(f"epoch {epoch} out of range")
        anchor = self._retained_ancestor(epoch)
        if anchor is None:
            raise KeyUnavailable(epoch)
        return _derive_descendant(anchor, NodeId(self.depth, epoch), self.depth).key

    def key_for_time(self, t_ms: int) -> bytes:
        return self.key_for_epoch(epoch_of(t_ms, self.params))

    def minimal_cover(self, rng: EpochRange) -> list[NodeKey]:
        """Smallest antichain of derivable nodes whose leaves are exactly the range."""
        if rng.end > self.params.num_epochs:
            raise ValueError("range extends beyond the tree")
        if not rng:
            return []
        missing = self.first_missing(rng)
        if missing is not None:
            raise KeyUnavailable(missing)
        out = []
        for nid, buf in sorted(self._nodes.items(), key=lambda kv: kv[0].span(self.depth)):
            lo, hi = nid.span(self.depth)
            part_lo, part_hi = max(lo, rng.start), min(hi, rng.end)
            if part_lo >= part_hi:
                continue
            anchor = NodeKey(nid, bytes(buf))
            for cover_id in _cover_ids(part_lo, part_hi, self.depth):
                out.append(_derive_descendant(anchor, cover_id, self.depth))
        return out

    def puncture(self, rng: EpochRange) -> "KeyTree":
        """Destroy the ability to derive any key inside the range.

        Every retained node intersecting the range is replaced by the cover
        of its span minus the range; removed key bytes are zeroized.
        Already-missing epochs are a no-op.  Returns self.
        """
        if rng.end > self.params.num_epochs:
            raise ValueError("range extends beyond the tree")
        if not rng:
            return self
        for nid in [n for n in self._nodes if self._intersects(n, rng)]:
            anchor = NodeKey(nid, bytes(self._nodes[nid]))
            lo, hi = nid.span(self.depth)
            keep: list[NodeKey] = []
            for part_lo, part_hi in ((lo, min(hi, rng.start)), (max(lo, rng.end), hi)):
                for cover_id in _cover_ids(part_lo, max(part_lo, part_hi), self.depth):
                    keep.append(_derive_descendant(anchor, cover_id, self.depth))
            self._remove(nid)
            for nk in keep:
                self._insert(nk.id, nk.key)
        return self

    def rotate_to(self, current_epoch: int) -> "KeyTree":
        """Camera-side rotation: drop (and zeroize) everything before current_epoch."""
        if not 0 <= current_epoch < self.params.num_epochs:
            raise TreeLifespanExceeded(f"epoch {current_epoch} out of range")
        return self.puncture(EpochRange(0, current_epoch))

    def _intersects(self, nid: NodeId, rng: EpochRange) -> bool:
        lo, hi = nid.span(self.depth)
        return lo < rng.end and rng.start < hi

    def copy(self) -> "KeyTree":
        return KeyTree(self.params, self.retained)

    def wipe(self):
        """Zeroize and drop every retained key."""
        for nid in list(self._nodes):
            self._remove(nid)

    # --- serialization ---------------------------------------------------

    def to_bytes(self) -> bytes:
        """Length-prefixed binary frontier; also the grant / escrow key-material format."""
        parts = [self.params.pack(), struct.pack(">I", len(self._nodes))]
        for nid, buf in sorted(self._nodes.items()):
            parts.append(struct.pack(">BQ", nid.level, nid.index) + bytes(buf))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "KeyTree":
        if len(data) < 17:
            raise MalformedMessage("truncated key tree")
        params = TreeParams.unpack(data[:13])
        (count,) = struct.unpack(">I", data[13:17])
        nodes = []
        off = 17
        for _ in range(count):
            if off + 9 + KEY_BYTES > len(data):
                raise MalformedMessage("truncated key tree node")
            level, index = struct.unpack(">BQ", data[off : off + 9])
            key = data[off + 9 : off + 9 + KEY_BYTES]
            nodes.append(NodeKey(NodeId(level, index), key))
            off += 9 + KEY_BYTES
        if off != len(data):
            raise MalformedMessage("trailing bytes after key tree")
        return cls(params, nodes)


def key_for_epoch(tree: KeyTree, epoch: int) -> bytes:
    return tree.key_for_epoch(epoch)


def minimal_cover(tree: KeyTree, rng: EpochRange) -> list[NodeKey]:
    return tree.minimal_cover(rng)


def puncture(tree: KeyTree, rng: EpochRange) -> KeyTree:
    return tree.puncture(rng)


def camera_frontier(tree: KeyTree, current_epoch: int) -> KeyTree:
    """Post-rotation camera state: only current and future epochs derivable."""
    return tree.rotate_to(current_epoch)


def tree_stats(params: TreeParams) -> dict:
    """Lifespan and worst-case on-disk key storage (every other epoch deleted)."""
    return {
        "lifespan_seconds": params.num_epochs * params.epoch_seconds,
        "worst_case_storage_bytes": (1 << (params.depth - 1)) * KEY_BYTES,
    }


def lifespan_years(params: TreeParams) -> float:
    return tree_stats(params)["lifespan_seconds"] / YEAR_SECONDS
