#!/usr/bin/env python3
"""The cloud is hostile and it does not matter.

The blob store gets flipped bits, dropped blobs, and replays; the viewer
catches every manipulation because nothing about confidentiality or
integrity ever depended on the store.

Run: python demos/07_paranoid_cloud.py
"""

import os

from cactus import (
    CameraIdentity,
    KeyTree,
    PlainFrame,
    TreeParams,
    encrypt_block,
    verify_decrypt_block,
)
from cactus.errors import CactusError
from cactus.framecrypto import BlockManifest
from cactus.keytree import epoch_of
from cactus.storage import AdversarialConfig, BlobKey, MemoryBlobStore

print("=" * 64)
print("Serving footage from an adversarial store")
print("=" * 64)

tree = KeyTree.from_seed(TreeParams(8, 1, 0), os.urandom(32))
camera = CameraIdentity.generate()

store = MemoryBlobStore(AdversarialConfig(tamper_rate=0.3, seed=1234))
originals = {}
for i in range(20):
    frames = [PlainFrame(i * 1000 + j * 100, os.urandom(64)) for j in range(10)]
    block = encrypt_block(frames, tree, camera)
    raw = block.to_bytes()
    originals[(block.first_epoch, i)] = raw
    store.put_block(BlobKey(camera.camera_id, block.first_epoch, i), raw)

print("\nstored 20 blocks; the store flips a random bit in ~30% of served blobs\n")
served = store.get_range(camera.camera_id, 0, 1 << 20)
accepted = caught = silently_bad = 0
for key, raw in served:
    tampered = raw != originals[(key.first_epoch, key.sequence)]
    try:
        verify_decrypt_block(BlockManifest.from_bytes(raw), tree, camera.public_key)
        if tampered:
            silently_bad += 1
        else:
            accepted += 1
    except (CactusError, ValueError) as exc:
        caught += 1
        if caught <= 3:
            print(f"  block epoch={key.first_epoch} seq={key.sequence} rejected: "
                  f"{type(exc).__name__}")
print(f"\naccepted {accepted} clean blocks, rejected {caught} tampered ones, "
      f"{silently_bad} tampered blocks slipped through")
assert silently_bad == 0

print("\nreplay mode: the store answers a query for recent epochs with an old blob")
replayer = MemoryBlobStore(AdversarialConfig(replay=True, seed=9))
for (epoch, seq), raw in originals.items():
    replayer.put_block(BlobKey(camera.camera_id, epoch, seq), raw)
requested_from = 15
for key, raw in replayer.get_range(camera.camera_id, requested_from, 100):
    frames = verify_decrypt_block(BlockManifest.from_bytes(raw), tree, camera.public_key)
    epochs = {epoch_of(f.t, tree.params) for f in frames}
    if min(epochs) < requested_from:
        print(f"  a blob full of epoch-{min(epochs)} frames arrived in a "
              f"[{requested_from}, ...) query: the signed timestamps expose the replay")
        break
