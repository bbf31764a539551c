import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from cactus.devices import CameraDevice, OwnerDevice
from cactus.escrow import build_escrow
from cactus.identity import IdentityBundle
from cactus.keytree import KeyTree, TreeParams


@pytest.fixture(scope="session")
def bundles():
    """Pre-generated RSA-3072 identity bundles; keygen is the slow part."""
    names = ("factory", "owner", "attacker", "delegatee", "camera")
    return {name: IdentityBundle.generate() for name in names}


class FakeClock:
    """Millisecond clock under test control."""

    def __init__(self, t: int = 1_000_000):
        self.t = t

    def __call__(self) -> int:
        return self.t

    def advance(self, ms: int):
        self.t += ms


def make_paired(bundles, depth=4, delta=10, t0=0, clock=None, seed=None):
    """Owner and camera sharing a freshly negotiated tree, as after pairing."""
    clock = clock or FakeClock()
    seed = seed or os.urandom(32)
    params = TreeParams(depth, delta, t0)
    owner_tree = KeyTree.from_seed(params, seed)
    camera_tree = KeyTree.from_seed(params, seed)
    escrow, passphrase = build_escrow(bundles["owner"], owner_tree, bundles["camera"].public)
    camera = CameraDevice(bundles["factory"], clock=clock)
    camera.install(bundles["camera"], bundles["owner"].public, camera_tree, escrow)
    owner = OwnerDevice(bundles["owner"], bundles["camera"].public, owner_tree, clock=clock)
    return camera, owner, passphrase, clock
