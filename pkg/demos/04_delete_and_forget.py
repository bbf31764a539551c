#!/usr/bin/env python3
"""Deletion as key destruction: owner, camera, and escrow all forget.

Run: python demos/04_delete_and_forget.py
"""

import threading

from cactus import CameraDevice, EpochRange, KeyTree, OwnerDevice, TreeParams
from cactus.admin import camera_serve, delete_videos, factory_reset
from cactus.channels import InsecureChannel, SIDE_A, SIDE_B
from cactus.errors import KeyUnavailable
from cactus.escrow import build_escrow, open_escrow
from cactus.identity import IdentityBundle

print("=" * 64)
print("Deleting a day you would rather not keep")
print("=" * 64)

print("\nsetting up a paired owner and camera (generating RSA keys)...")
owner_keys = IdentityBundle.generate()
camera_keys = IdentityBundle.generate()
factory_keys = IdentityBundle.generate()
params = TreeParams(depth=6, epoch_seconds=10, t0=0)
seed = b"\x33" * 32
owner_tree = KeyTree.from_seed(params, seed)
escrow, passphrase = build_escrow(owner_keys, owner_tree, camera_keys.public)

camera = CameraDevice(factory_keys)
camera.install(camera_keys, owner_keys.public, KeyTree.from_seed(params, seed), escrow)
owner = OwnerDevice(owner_keys, camera_keys.public, owner_tree)


def over_channel(fn, messages=1):
    channel = InsecureChannel()
    thread = threading.Thread(
        target=camera_serve, args=(camera, channel.endpoint(SIDE_B), messages), daemon=True
    )
    thread.start()
    result = fn(channel.endpoint(SIDE_A))
    thread.join()
    return result


doomed = EpochRange(10, 20)
print(f"\nowner orders deletion of epochs [{doomed.start}, {doomed.end}):")
print("  1. the owner punctures its own tree")
print("  2. a signed, timestamped request (plus re-sealed key material)")
print("     crosses the untrusted channel")
print("  3. the camera verifies, punctures, and swaps the escrow copy")
outcome = over_channel(lambda ep: delete_videos(owner, ep, doomed))
print(f"camera answered: {outcome}")

_, escrow_tree, _ = open_escrow(camera.state.escrow, passphrase)
for name, tree in (("owner", owner.tree), ("camera", camera.state.tree), ("escrow", escrow_tree)):
    alive = sum(tree.is_available(e) for e in doomed)
    print(f"  {name:>7}: {alive} of {doomed.end - doomed.start} deleted epochs still derivable")

try:
    owner.tree.key_for_epoch(15)
except KeyUnavailable as exc:
    print(f"\nasking for epoch 15 now raises: {exc}")
print(f"epoch 25 still decrypts fine: key starts {owner.tree.key_for_epoch(25)[:6].hex()}...")
print("\nciphertext may linger in the cloud; without these keys it is noise.")
print("(a delegatee who already held epoch 15 keeps them; revocation of")
print("shared knowledge is out of scope by design)")

print("\n" + "=" * 64)
print("Factory reset")
print("=" * 64)
outcome = over_channel(lambda ep: factory_reset(owner, ep))
print(f"reset: {outcome}; camera initialized? {camera.initialized}")
outcome = over_channel(lambda ep: factory_reset(owner, ep))
print(f"resetting again: {outcome} (an acknowledged no-op)")
print("the factory keypair survives, so the camera can be sold and re-paired")
