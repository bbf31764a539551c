import os
import random
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cactus.errors import (
    AuthenticityFailure,
    CactusError,
    DecryptionFailure,
    IntegrityFailure,
    KeyUnavailable,
    MalformedMessage,
    OrderingViolation,
)
from cactus.framecrypto import (
    BlockManifest,
    CameraIdentity,
    FrameRecord,
    PlainFrame,
    camera_id_of,
    encrypt_block,
    verify_decrypt_block,
)
from cactus.keytree import EpochRange, KeyTree, TreeParams


@pytest.fixture(scope="module")
def camera():
    return CameraIdentity.generate()


def make_tree(depth=6, delta=10, t0=0, seed=None):
    return KeyTree.from_seed(TreeParams(depth, delta, t0), seed or os.urandom(32))


def frames_at(*ts, size=64, rng=None):
    rng = rng or random.Random(0)
    return [PlainFrame(t, bytes(rng.randbytes(size))) for t in ts]


def test_round_trip_single_frame(camera):
    tree = make_tree()
    frames = frames_at(1234)
    block = encrypt_block(frames, tree, camera)
    out = verify_decrypt_block(block, tree, camera.public_key)
    assert out == frames


def test_round_trip_serialized(camera):
    tree = make_tree()
    frames = frames_at(100, 5000, 11_000, 99_000)
    block = encrypt_block(frames, tree, camera)
    parsed = BlockManifest.from_bytes(block.to_bytes())
    assert parsed == block
    assert verify_decrypt_block(parsed, tree, camera.public_key) == frames


def test_epoch_straddle_uses_different_keys(camera):
    # two frames around the t0 + delta boundary must encrypt under
    # different keys: moving the second ciphertext into an epoch-0 record
    # must not decrypt
    tree = make_tree(depth=4, delta=10, t0=0)
    frames = frames_at(9_999, 10_000, size=32)
    block = encrypt_block(frames, tree, camera)
    k0 = tree.key_for_epoch(0)
    k1 = tree.key_for_epoch(1)
    assert k0 != k1
    from cryptography.hazmat.primitives.ciphers.aead import AESGCM

    f0, f1 = block.frames
    assert AESGCM(k0).decrypt(f0.iv, f0.ciphertext, None) == frames[0].payload
    with pytest.raises(Exception):
        AESGCM(k0).decrypt(f1.iv, f1.ciphertext, None)
    assert AESGCM(k1).decrypt(f1.iv, f1.ciphertext, None) == frames[1].payload


def test_non_monotone_timestamps_rejected(camera):
    tree = make_tree()
    with pytest.raises(OrderingViolation):
        encrypt_block(frames_at(50, 50), tree, camera)
    with pytest.raises(OrderingViolation):
        encrypt_block(frames_at(80, 20), tree, camera)


def test_key_unavailable_is_distinct(camera):
    tree = make_tree(depth=4, delta=10)
    block = encrypt_block(frames_at(5_000, 15_000), tree, camera)
    viewer = KeyTree(tree.params, tree.minimal_cover(EpochRange(0, 1)))
    with pytest.raises(KeyUnavailable):
        verify_decrypt_block(block, viewer, camera.public_key)


def test_wrong_camera_key_fails(camera):
    tree = make_tree()
    block = encrypt_block(frames_at(100), tree, camera)
    other = CameraIdentity.generate()
    with pytest.raises(AuthenticityFailure):
        verify_decrypt_block(block, tree, other.public_key)


def test_tampered_stored_mac_is_integrity_failure(camera):
    tree = make_tree()
    block = encrypt_block(frames_at(100, 200), tree, camera)
    bad = FrameRecord(
        block.frames[1].t,
        block.frames[1].iv,
        block.frames[1].ciphertext,
        bytes(32),
    )
    tampered = BlockManifest(
        block.camera_id, block.first_epoch, (block.frames[0], bad), block.signature
    )
    with pytest.raises(IntegrityFailure) as exc:
        verify_decrypt_block(tampered, tree, camera.public_key)
    assert exc.value.index == 1


def test_timestamp_shift_detected(camera):
    # replaying a block with one t_i shifted by +1 ms must fail: freshness
    # is bound through the MAC and signature
    tree = make_tree()
    block = encrypt_block(frames_at(100, 200, 300), tree, camera)
    shifted = FrameRecord(
        block.frames[1].t + 1,
        block.frames[1].iv,
        block.frames[1].ciphertext,
        block.frames[1].hmac,
    )
    tampered = BlockManifest(
        block.camera_id,
        block.first_epoch,
        (block.frames[0], shifted, block.frames[2]),
        block.signature,
    )
    with pytest.raises(AuthenticityFailure):
        verify_decrypt_block(tampered, tree, camera.public_key)


def test_bit_flip_fuzzing(camera):
    tree = make_tree()
    frames = frames_at(100, 5000, 20_000, size=48)
    block = encrypt_block(frames, tree, camera)
    raw = block.to_bytes()
    rng = random.Random(42)
    for _ in range(1000):
        pos = rng.randrange(len(raw) * 8)
        mutated = bytearray(raw)
        mutated[pos // 8] ^= 1 << (pos % 8)
        try:
            parsed = BlockManifest.from_bytes(bytes(mutated))
            out = verify_decrypt_block(parsed, tree, camera.public_key)
        except CactusError:
            continue
        except ValueError:
            continue
        raise AssertionError(f"bit flip at {pos} went undetected: {out!r}")


def test_wire_layout_exact(camera):
    tree = make_tree(depth=3, delta=10, t0=0)
    frames = [PlainFrame(17, b"ab")]
    block = encrypt_block(frames, tree, camera)
    raw = block.to_bytes()
    assert raw[:4] == b"CBM1"
    assert raw[4:36] == camera_id_of(camera.public_key)
    first_epoch, count = struct.unpack(">QI", raw[36:48])
    assert (first_epoch, count) == (0, 1)
    assert raw[48:52] == b"CFR1"
    (t,) = struct.unpack(">Q", raw[52:60])
    assert t == 17
    (ct_len,) = struct.unpack(">I", raw[76:80])
    assert ct_len == 2 + 16  # payload + GCM tag
    mac_end = 80 + ct_len + 32
    (sig_len,) = struct.unpack(">H", raw[mac_end : mac_end + 2])
    assert sig_len == 64  # ed25519
    assert len(raw) == mac_end + 2 + sig_len


def test_iv_uniqueness_over_many_frames(camera):
    tree = make_tree(depth=4, delta=1000)
    seen = set()
    t = 1
    for _ in range(100):
        frames = [PlainFrame(t + i, b"x") for i in range(1000)]
        t += 1000
        block = encrypt_block(frames, tree, camera)
        for f in block.frames:
            assert f.iv not in seen
            seen.add(f.iv)
    assert len(seen) == 100_000


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.binary(min_size=1, max_size=2048), min_size=1, max_size=8),
    st.integers(min_value=0, max_value=600_000),
)
def test_round_trip_property(payloads, t_start):
    camera = _property_camera()
    tree = _property_tree()
    frames = [PlainFrame(t_start + i * 997, p) for i, p in enumerate(payloads)]
    block = encrypt_block(frames, tree, camera)
    assert verify_decrypt_block(block, tree, camera.public_key) == frames


_CACHE = {}


def _property_camera():
    if "cam" not in _CACHE:
        _CACHE["cam"] = CameraIdentity.generate()
    return _CACHE["cam"]


def _property_tree():
    if "tree" not in _CACHE:
        _CACHE["tree"] = KeyTree.from_seed(TreeParams(10, 10, 0), b"\x07" * 32)
    return _CACHE["tree"]


def test_manifest_parse_rejects_trailing_bytes(camera):
    tree = make_tree()
    raw = encrypt_block(frames_at(5), tree, camera).to_bytes()
    with pytest.raises(MalformedMessage):
        BlockManifest.from_bytes(raw + b"\x00")
    with pytest.raises((MalformedMessage, ValueError)):
        BlockManifest.from_bytes(raw[:-1])
