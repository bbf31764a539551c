import hashlib
import os

import pytest

from cactus.adversaries import (
    FakeCameraMitm,
    FakeOwnerMitm,
    KeySubstitution,
    ReflectChallenge,
    RelayHijack,
)
from cactus.channels import Adversary, InsecureChannel, VisualChannel
from cactus.errors import KeyUnavailable, PairingAborted
from cactus.framecrypto import CameraIdentity, PlainFrame, encrypt_block, verify_decrypt_block
from cactus.keytree import EpochRange, KeyTree, TreeParams
from cactus.pairing import (
    PairingSession,
    T_GRANT,
    delegation_pairing,
    init_pairing,
    kp_response,
    kp_shared_secret,
)


def channels(adversary=None, timeout=5.0):
    return VisualChannel(timeout=timeout), InsecureChannel(adversary, timeout=timeout)


def make_sessions(bundles, depth=4, **owner_kw):
    camera = PairingSession("camera")
    owner = PairingSession("owner", keys=bundles["owner"], **owner_kw)
    owner.tree_depth = depth
    owner.epoch_seconds = 10
    owner.wifi = "ssid:hunter2"
    return camera, owner


def run_init(bundles, adversary=None, timeout=5.0, **owner_kw):
    camera, owner = make_sessions(bundles, **owner_kw)
    visual, insecure = channels(adversary, timeout)
    result = init_pairing(camera, owner, visual, insecure, bundles["factory"])
    return camera, owner, result


def test_honest_init_pairing(bundles):
    camera_s, owner_s, (cam, own) = run_init(bundles)
    assert cam.tree.retained == own.tree.retained
    assert cam.tree.params == own.tree.params
    assert cam.owner_public == bundles["owner"].public
    assert own.camera_public == cam.identity.public
    assert cam.escrow.to_bytes() == own.escrow.to_bytes()
    assert cam.wifi_credentials == "ssid:hunter2"
    assert len(own.passphrase.display) == 32


def test_transcripts_byte_identical(bundles):
    camera_s, owner_s, _ = run_init(bundles)
    strip = lambda log: [(tag, body) for _, tag, body in log]
    assert strip(camera_s.transcript) == strip(owner_s.transcript)
    directions = [d for d, _, _ in camera_s.transcript]
    assert directions[0] == "send" and "recv" in directions


def test_substitution_aborts_at_step_2(bundles):
    with pytest.raises(PairingAborted) as exc:
        run_init(bundles, adversary=KeySubstitution(bundles["attacker"]), timeout=2.0)
    assert exc.value.step == 2


def test_relay_hijack_aborts_at_step_5(bundles):
    with pytest.raises(PairingAborted) as exc:
        run_init(bundles, adversary=RelayHijack(), timeout=2.0)
    assert exc.value.step == 5


def test_reflection_aborts_at_step_5(bundles):
    with pytest.raises(PairingAborted) as exc:
        run_init(bundles, adversary=ReflectChallenge(), timeout=2.0)
    assert exc.value.step == 5


def test_abort_wipes_session_secrets(bundles):
    camera_s, owner_s = make_sessions(bundles)
    visual, insecure = channels(KeySubstitution(bundles["attacker"]), timeout=2.0)
    with pytest.raises(PairingAborted):
        init_pairing(camera_s, owner_s, visual, insecure, bundles["factory"])
    for session in (camera_s, owner_s):
        assert session.aborted
        assert session.secret_material() == b""
        assert session.own_keys is None
        assert session.shared_secret is None


class _CorruptGrant(Adversary):
    def on_message(self, sender, tag, body):
        if tag == T_GRANT:
            mutated = bytearray(body)
            mutated[len(mutated) // 2] ^= 0x01
            return [("b", tag, bytes(mutated))]
        return None


def delegation_fixture(bundles, depth=3):
    params = TreeParams(depth, 10, 0)
    tree = KeyTree.from_seed(params, b"\x05" * 32)
    return params, tree


def run_delegation(bundles, tree, params, rng, adversary=None, camera_pub=b"", timeout=5.0):
    owner_s = PairingSession("delegator", keys=bundles["owner"])
    delegatee_s = PairingSession("delegatee", keys=bundles["delegatee"])
    visual, insecure = channels(adversary, timeout)
    grant = tree.minimal_cover(rng)
    return delegation_pairing(
        owner_s, delegatee_s, visual, insecure, grant, params, camera_pub
    )


def test_delegation_grant_scope(bundles):
    params, tree = delegation_fixture(bundles)
    _, result = run_delegation(bundles, tree, params, EpochRange(2, 6), camera_pub=b"\x11" * 32)
    assert result.camera_block_pub == b"\x11" * 32
    for epoch in range(8):
        if 2 <= epoch < 6:
            assert result.grant.key_for_epoch(epoch) == tree.key_for_epoch(epoch)
        else:
            with pytest.raises(KeyUnavailable):
                result.grant.key_for_epoch(epoch)


def test_delegation_grant_decrypts_only_window(bundles):
    params, tree = delegation_fixture(bundles)
    camera = CameraIdentity.generate()
    _, result = run_delegation(
        bundles, tree, params, EpochRange(2, 6), camera_pub=camera.public_key
    )
    for epoch in (1, 3):
        frames = [PlainFrame(epoch * 10_000 + 1, os.urandom(24))]
        block = encrypt_block(frames, tree, camera)
        if epoch == 3:
            out = verify_decrypt_block(block, result.grant, result.camera_block_pub)
            assert out == frames
        else:
            with pytest.raises(KeyUnavailable):
                verify_decrypt_block(block, result.grant, result.camera_block_pub)


def test_empty_grant_completes(bundles):
    params, tree = delegation_fixture(bundles)
    _, result = run_delegation(bundles, tree, params, EpochRange(0, 0))
    assert len(result.grant) == 0
    for epoch in range(8):
        with pytest.raises(KeyUnavailable):
            result.grant.key_for_epoch(epoch)


def test_tampered_grant_aborts_at_step_6(bundles):
    params, tree = delegation_fixture(bundles)
    with pytest.raises(PairingAborted) as exc:
        run_delegation(
            bundles, tree, params, EpochRange(2, 6), adversary=_CorruptGrant(), timeout=2.0
        )
    assert exc.value.step == 6


# --- knowledge proof ----------------------------------------------------------

def test_knowledge_proof_shared_secret_agreement(bundles):
    a = kp_shared_secret(bundles["factory"], bundles["owner"].public)
    b = kp_shared_secret(bundles["owner"], bundles["factory"].public)
    assert a == b and len(a) == 32


def test_knowledge_proof_attacker_cannot_answer(bundles):
    shared = kp_shared_secret(bundles["factory"], bundles["owner"].public)
    wrong = kp_shared_secret(bundles["attacker"], bundles["owner"].public)
    nonce = os.urandom(32)
    assert kp_response(shared, nonce, "owner", "camera") != kp_response(
        wrong, nonce, "owner", "camera"
    )


def test_knowledge_proof_role_labels_block_reflection(bundles):
    shared = kp_shared_secret(bundles["factory"], bundles["owner"].public)
    nonce = os.urandom(32)
    assert kp_response(shared, nonce, "camera", "owner") != kp_response(
        shared, nonce, "owner", "camera"
    )


# --- visual-channel necessity --------------------------------------------------

def test_disabled_owner_check_admits_camera_impersonation(bundles):
    mitm = FakeCameraMitm(bundles["attacker"])
    camera_s = PairingSession("camera")
    owner_s = PairingSession("owner", keys=bundles["owner"], verify_visual=False)
    owner_s.tree_depth = 4
    visual, insecure = channels(mitm, timeout=2.0)
    with pytest.raises(PairingAborted) as exc:
        init_pairing(camera_s, owner_s, visual, insecure, bundles["factory"])
    owner_result = exc.value.side_results["b"]
    root = owner_result.tree.retained[0]
    assert mitm.captured is not None
    assert mitm.captured.seed_key == root.key  # the attacker holds the seed


def test_enabled_checks_defeat_camera_impersonation(bundles):
    mitm = FakeCameraMitm(bundles["attacker"])
    with pytest.raises(PairingAborted) as exc:
        run_init(bundles, adversary=mitm, timeout=2.0)
    assert exc.value.step == 2
    assert mitm.captured is None


def test_disabled_camera_check_admits_owner_impersonation(bundles):
    mitm = FakeOwnerMitm(bundles["attacker"])
    camera_s = PairingSession("camera", verify_visual=False)
    owner_s = PairingSession("owner", keys=bundles["owner"])
    owner_s.tree_depth = 4
    visual, insecure = channels(mitm, timeout=2.0)
    with pytest.raises(PairingAborted) as exc:
        init_pairing(camera_s, owner_s, visual, insecure, bundles["factory"])
    camera_result = exc.value.side_results["a"]
    root = camera_result.tree.retained[0]
    assert root.key == mitm.seed  # the camera now encrypts under attacker keys


def test_enabled_checks_defeat_owner_impersonation(bundles):
    mitm = FakeOwnerMitm(bundles["attacker"])
    camera_s = PairingSession("camera")
    owner_s = PairingSession("owner", keys=bundles["owner"])
    visual, insecure = channels(mitm, timeout=1.0)
    visual.timeout = 0.5
    with pytest.raises(PairingAborted) as exc:
        init_pairing(camera_s, owner_s, visual, insecure, bundles["factory"])
    # neither side completed: the attack yields nothing with checks enabled
    assert all(isinstance(r, PairingAborted) for r in exc.value.side_results.values())


def test_factory_qr_matches_bundle_hash(bundles):
    pub = bundles["factory"].public.to_bytes()
    assert hashlib.sha256(pub).digest() == bundles["factory"].public.fingerprint()
