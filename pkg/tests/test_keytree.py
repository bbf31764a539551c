import os
import random
import struct
import subprocess
import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cactus.errors import (
    BeforeOrigin,
    KeyUnavailable,
    LevelOverflow,
    TreeLifespanExceeded,
)
from cactus.keytree import (
    EpochRange,
    KeyTree,
    NodeId,
    NodeKey,
    TreeParams,
    YEAR_SECONDS,
    camera_frontier,
    derive_child,
    epoch_of,
    tree_stats,
)

import oracles

ZERO = bytes(32)


def full_tree(depth: int, seed: bytes = ZERO, delta: int = 10, t0: int = 0) -> KeyTree:
    return KeyTree.from_seed(TreeParams(depth, delta, t0), seed)


# --- derive_child -----------------------------------------------------------

def test_derive_child_deterministic():
    root = NodeKey(NodeId(0, 0), os.urandom(32))
    a = derive_child(root, "left", 4)
    b = derive_child(root, "left", 4)
    assert a == b
    assert a.id == NodeId(1, 0)
    assert len(a.key) == 32


def test_derive_child_left_right_differ():
    root = NodeKey(NodeId(0, 0), os.urandom(32))
    assert derive_child(root, "left", 4).key != derive_child(root, "right", 4).key


def test_derive_child_frozen_vectors():
    # Frozen output of a standalone RFC-5869 HKDF script run once over the
    # all-zero parent key (salt "cactus-keytree-v1", info = level || index).
    root = NodeKey(NodeId(0, 0), ZERO)
    left = derive_child(root, "left", 4)
    right = derive_child(root, "right", 4)
    assert left.key.hex() == (
        "591653a179d1725a4a041e40381c807da7795f3074e7561105973dc2d0b0117f"
    )
    assert right.key.hex() == (
        "2b91db290d7bddca6498c7a2f3fc4af5e0dcd7731a0d0b31337f6334d3bdbd63"
    )
    assert derive_child(left, "left", 4).key.hex() == (
        "29239404f135bd561697443838c51af74cf930e9bba39cbcf24a4b879f2fd299"
    )
    assert derive_child(left, "right", 4).key.hex() == (
        "20c3875b7d0f9043e45c4e02b4d919e35acf8ec7310b8931f1d52d95e57018f5"
    )


def test_derive_child_leaf_overflow():
    leaf = NodeKey(NodeId(3, 5), os.urandom(32))
    with pytest.raises(LevelOverflow):
        derive_child(leaf, "left", 3)


def test_determinism_across_processes():
    code = (
        "from cactus.keytree import KeyTree, TreeParams;"
        "t = KeyTree.from_seed(TreeParams(8, 10, 0), bytes(32));"
        "print(t.key_for_epoch(200).hex())"
    )
    out = subprocess.run(
        [sys.executable, "-c", code], capture_output=True, text=True, check=True
    )
    assert bytes.fromhex(out.stdout.strip()) == full_tree(8).key_for_epoch(200)


# --- epoch_of ----------------------------------------------------------------

def test_epoch_of_origin_and_boundary():
    p = TreeParams(8, 10, 1_000_000)
    assert epoch_of(1_000_000, p) == 0
    assert epoch_of(1_000_000 + 10_000 - 1, p) == 0
    assert epoch_of(1_000_000 + 10_000, p) == 1


def test_epoch_of_floor_arithmetic():
    p = TreeParams(8, 10, 500)
    assert epoch_of(500 + 95_000, p) == 9


def test_epoch_of_errors():
    p = TreeParams(2, 1, 1000)
    with pytest.raises(BeforeOrigin):
        epoch_of(999, p)
    with pytest.raises(TreeLifespanExceeded):
        epoch_of(1000 + 4 * 1000, p)


# --- key_for_epoch ----------------------------------------------------------

def test_key_for_epoch_full_tree_matches_oracle():
    tree = full_tree(4, seed=os.urandom(32))
    leaves = oracles.all_leaves(tree.retained[0].key, 4)
    for e in range(16):
        assert tree.key_for_epoch(e) == leaves[e]


def test_key_for_epoch_after_fig3_deletion():
    # depth-3 tree over epochs A..H; deleting A must keep B..H derivable
    tree = full_tree(3)
    tree.puncture(EpochRange(0, 1))
    with pytest.raises(KeyUnavailable):
        tree.key_for_epoch(0)
    assert tree.key_for_epoch(1) == oracles.all_leaves(ZERO, 3)[1]


def test_key_for_epoch_sparse_matches_mask_oracle():
    rng = random.Random(7)
    seed = bytes(rng.randbytes(32))
    tree = full_tree(8, seed=seed)
    leaves = oracles.all_leaves(seed, 8)
    mask = [True] * 256
    for _ in range(20):
        a = rng.randrange(0, 256)
        b = rng.randrange(a, min(256, a + 40) + 1)
        tree.puncture(EpochRange(a, b))
        for e in range(a, b):
            mask[e] = False
    for e in range(256):
        if mask[e]:
            assert tree.key_for_epoch(e) == leaves[e]
        else:
            with pytest.raises(KeyUnavailable):
                tree.key_for_epoch(e)


# --- minimal_cover ----------------------------------------------------------

def test_cover_full_span_is_root():
    tree = full_tree(5)
    cover = tree.minimal_cover(EpochRange(0, 32))
    assert [nk.id for nk in cover] == [NodeId(0, 0)]


def test_cover_fig3_window():
    # depth 3 over A..H: sharing C..F hands out exactly k_CD and k_EF
    tree = full_tree(3)
    cover = tree.minimal_cover(EpochRange(2, 6))
    assert {nk.id for nk in cover} == {NodeId(2, 1), NodeId(2, 2)}


def test_cover_random_ranges_match_enumeration():
    rng = random.Random(13)
    tree = full_tree(8, seed=bytes(rng.randbytes(32)))
    for _ in range(500):
        a = rng.randrange(0, 256)
        b = rng.randrange(a + 1, 257)
        cover = tree.minimal_cover(EpochRange(a, b))
        ids = {(nk.id.level, nk.id.index) for nk in cover}
        assert ids == oracles.exhaustive_cover(a, b, 8)
        assert oracles.is_antichain(ids)
        assert oracles.leaves_under(ids, 8) == set(range(a, b))
        assert len(cover) <= 2 * 8


def test_cover_unavailable_reports_first_missing_epoch():
    tree = full_tree(4)
    tree.puncture(EpochRange(5, 7))
    with pytest.raises(KeyUnavailable) as exc:
        tree.minimal_cover(EpochRange(2, 12))
    assert exc.value.epoch == 5


def test_cover_keys_derivable_from_grant():
    tree = full_tree(6, seed=os.urandom(32))
    cover = tree.minimal_cover(EpochRange(11, 47))
    grant = KeyTree(tree.params, cover)
    for e in range(64):
        if 11 <= e < 47:
            assert grant.key_for_epoch(e) == tree.key_for_epoch(e)
        else:
            with pytest.raises(KeyUnavailable):
                grant.key_for_epoch(e)


# --- puncture ---------------------------------------------------------------

def test_puncture_fig3_vector():
    tree = full_tree(3)
    tree.puncture(EpochRange(0, 1))
    assert tree.retained_ids == {NodeId(3, 1), NodeId(2, 1), NodeId(1, 1)}


def test_puncture_empty_range_noop():
    tree = full_tree(5)
    before = tree.retained
    tree.puncture(EpochRange(3, 3))
    assert tree.retained == before


def test_puncture_idempotent():
    tree = full_tree(5)
    tree.puncture(EpochRange(4, 9))
    snapshot = tree.retained
    tree.puncture(EpochRange(4, 9))
    assert tree.retained == snapshot


def test_puncture_sequence_matches_mask_oracle():
    rng = random.Random(99)
    seed = bytes(rng.randbytes(32))
    tree = full_tree(8, seed=seed)
    leaves = oracles.all_leaves(seed, 8)
    mask = [True] * 256
    for _ in range(50):
        a = rng.randrange(0, 256)
        b = rng.randrange(a, 257)
        tree.puncture(EpochRange(a, b))
        for e in range(a, b):
            mask[e] = False
        ids = {(n.level, n.index) for n in tree.retained_ids}
        assert oracles.is_antichain(ids)
    for e in range(256):
        if mask[e]:
            assert tree.key_for_epoch(e) == leaves[e]
        else:
            with pytest.raises(KeyUnavailable):
                tree.key_for_epoch(e)


def test_puncture_growth_bound():
    # deleting one contiguous region grows the frontier by O(depth)
    for depth in (6, 10):
        tree = full_tree(depth)
        tree.puncture(EpochRange(1, 2))
        assert len(tree) <= 2 * depth


# --- camera_frontier ---------------------------------------------------------

def test_camera_frontier_epoch_zero_full_tree():
    tree = full_tree(6)
    camera_frontier(tree, 0)
    assert tree.retained_ids == {NodeId(0, 0)}


def test_camera_frontier_fig3_epoch_d():
    tree = full_tree(3)
    camera_frontier(tree, 3)
    assert tree.retained_ids == {NodeId(3, 3), NodeId(1, 1)}
    assert len(tree) == 2 <= 3


def test_camera_frontier_size_bound():
    rng = random.Random(5)
    for e in rng.sample(range(1 << 16), 1000):
        tree = full_tree(16)
        camera_frontier(tree, e)
        assert len(tree) <= 16
        assert tree.is_available(e)
        assert e == 0 or not tree.is_available(e - 1)


# --- tree_stats / published parameter table ---------------------------------

TABLE2 = [
    # depth, years at delta=10s, years at delta=60s, storage bytes
    (24, 5, 32, 256 * 2**20),
    (26, 21, 128, 1 * 2**30),
    (28, 85, 511, 4 * 2**30),
    (30, 340, 2043, 16 * 2**30),
    (32, 1362, 8172, 64 * 2**30),
]


@pytest.mark.parametrize("depth,y10,y60,storage", TABLE2)
def test_tree_stats_reproduces_parameter_table(depth, y10, y60, storage):
    s10 = tree_stats(TreeParams(depth, 10, 0))
    s60 = tree_stats(TreeParams(depth, 60, 0))
    assert round(s10["lifespan_seconds"] / YEAR_SECONDS) == y10
    assert round(s60["lifespan_seconds"] / YEAR_SECONDS) == y60
    assert s10["worst_case_storage_bytes"] == storage


def test_tree_stats_trivial():
    s = tree_stats(TreeParams(1, 1, 0))
    assert s["lifespan_seconds"] == 2
    assert s["worst_case_storage_bytes"] == 32


# --- serialization -----------------------------------------------------------

def test_tree_serialization_round_trip():
    tree = full_tree(8, seed=os.urandom(32), delta=7, t0=123456)
    tree.puncture(EpochRange(10, 60))
    back = KeyTree.from_bytes(tree.to_bytes())
    assert back.params == tree.params
    assert back.retained == tree.retained


def test_tree_serialization_layout():
    tree = full_tree(3, seed=ZERO, delta=10, t0=99)
    raw = tree.to_bytes()
    depth, delta, t0, count = struct.unpack(">BIQI", raw[:17])
    assert (depth, delta, t0, count) == (3, 10, 99, 1)
    level, index = struct.unpack(">BQ", raw[17:26])
    assert (level, index) == (0, 0)
    assert raw[26:58] == ZERO
    assert len(raw) == 58


# --- invariants --------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(
    st.integers(min_value=2, max_value=7),
    st.lists(st.tuples(st.integers(0, 127), st.integers(0, 127)), max_size=12),
)
def test_frontier_stays_antichain(depth, cuts):
    tree = full_tree(depth)
    n = 1 << depth
    for a, b in cuts:
        a, b = sorted((a % (n + 1), b % (n + 1)))
        tree.puncture(EpochRange(a, b))
        ids = {(nid.level, nid.index) for nid in tree.retained_ids}
        assert oracles.is_antichain(ids)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=255), st.integers(min_value=1, max_value=256))
def test_puncture_preserves_outside_keys(start, width):
    end = min(256, start + width)
    seed = b"\x42" * 32
    tree = full_tree(8, seed=seed)
    before = [tree.key_for_epoch(e) for e in range(256)]
    tree.puncture(EpochRange(start, end))
    for e in range(256):
        if start <= e < end:
            with pytest.raises(KeyUnavailable):
                tree.key_for_epoch(e)
        else:
            assert tree.key_for_epoch(e) == before[e]


def test_epoch_range_validation():
    with pytest.raises(ValueError):
        EpochRange(5, 4)
    with pytest.raises(ValueError):
        EpochRange(-1, 4)
    assert not EpochRange(4, 4)
    assert 5 in EpochRange(4, 6)
