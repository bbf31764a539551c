#!/usr/bin/env python3
"""Losing the phone: recovery from the passphrase-locked escrow.

Run: python demos/05_lose_the_phone.py
"""

import threading

from cactus import (
    CameraDevice,
    KeyTree,
    OwnerDevice,
    PlainFrame,
    TreeParams,
    encrypt_block,
    verify_decrypt_block,
)
from cactus.admin import camera_serve, fetch_escrow, recover
from cactus.channels import InsecureChannel, SIDE_A, SIDE_B
from cactus.errors import EscrowLocked
from cactus.escrow import Passphrase, build_escrow, camera_public_key
from cactus.identity import IdentityBundle

print("=" * 64)
print("Escrow recovery")
print("=" * 64)

print("\nsetup: pairing artifacts (generating RSA keys)...")
owner_keys = IdentityBundle.generate()
camera_keys = IdentityBundle.generate()
params = TreeParams(depth=6, epoch_seconds=10, t0=0)
seed = b"\x44" * 32
tree = KeyTree.from_seed(params, seed)
escrow, passphrase = build_escrow(owner_keys, tree, camera_keys.public)
camera = CameraDevice(IdentityBundle.generate())
camera.install(camera_keys, owner_keys.public, KeyTree.from_seed(params, seed), escrow)
print(f"the passphrase shown once at setup: {passphrase.display}")

print("\nrecording thirty frames...")
blocks = [
    encrypt_block(
        [PlainFrame(i * 1000 + j * 100, bytes([i, j]) * 16) for j in range(10)],
        camera.state.tree,
        camera.state.block_identity,
    )
    for i in range(3)
]

print("the phone falls into a canal. all owner state is gone.\n")
owner = None


def ask_camera(fn, messages=1):
    channel = InsecureChannel()
    thread = threading.Thread(
        target=camera_serve, args=(camera, channel.endpoint(SIDE_B), messages), daemon=True
    )
    thread.start()
    result = fn(channel.endpoint(SIDE_A))
    thread.join()
    return result


print("anyone in range can fetch the escrow blob, no questions asked:")
material = ask_camera(fetch_escrow)
print(f"  blob delivered ({len(material.to_bytes())} bytes)")
print(f"  in the clear it reveals exactly one thing, the camera public key: "
      f"{camera_public_key(material).fingerprint()[:8].hex()}...")

print("\na thief guesses a passphrase:")
try:
    ask_camera(lambda ep: recover(ep, Passphrase(bytes(16))))
except EscrowLocked as exc:
    print(f"  {exc}")

print("\nthe owner types the real passphrase on a new phone:")
restored: OwnerDevice = ask_camera(lambda ep: recover(ep, passphrase))
recovered_frames = sum(
    len(verify_decrypt_block(b, restored.tree, restored.camera_block_pub)) for b in blocks
)
print(f"  owner keypair, camera key, and key tree restored; "
      f"{recovered_frames}/30 frames decrypt again")
