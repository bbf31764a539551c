#!/usr/bin/env python3
"""Fine-grained delegation: a house-sitter gets three epochs, not the house.

Run: python demos/03_share_a_window.py
"""

from cactus import (
    CameraIdentity,
    EpochRange,
    KeyTree,
    KeyUnavailable,
    PairingSession,
    PlainFrame,
    TreeParams,
    delegation_pairing,
    encrypt_block,
    verify_decrypt_block,
)
from cactus.channels import InsecureChannel, VisualChannel
from cactus.identity import IdentityBundle

print("=" * 64)
print("Delegation pairing")
print("=" * 64)

params = TreeParams(depth=4, epoch_seconds=10, t0=0)
owner_tree = KeyTree.from_seed(params, seed=b"\x21" * 32)
owner_keys = IdentityBundle.generate()
camera = CameraIdentity.generate()

# the owner recorded one block per epoch
blocks = {
    epoch: encrypt_block(
        [PlainFrame(epoch * 10_000 + 1, f"epoch-{epoch}".encode())], owner_tree, camera
    )
    for epoch in range(16)
}

window = EpochRange(5, 8)
print(f"\nthe owner shares epochs [{window.start}, {window.end}) "
      f"({(window.end - window.start) * params.epoch_seconds} seconds of footage)")
grant = owner_tree.minimal_cover(window)
print(f"the grant is {len(grant)} node keys")

print("\nrunning the delegation pairing (same shape as initialization,")
print("but both phones generate their keys on the spot)...")
owner_session = PairingSession("delegator", keys=owner_keys)
delegatee_session = PairingSession("delegatee")
_, result = delegation_pairing(
    owner_session,
    delegatee_session,
    VisualChannel(),
    InsecureChannel(),
    grant,
    params,
    camera_block_pub=camera.public_key,
)
print("grant delivered, sealed and authenticated")

print("\nwhat can the delegatee actually watch?")
row = []
for epoch in range(16):
    try:
        frames = verify_decrypt_block(blocks[epoch], result.grant, result.camera_block_pub)
        row.append(f"{epoch}:{frames[0].payload.decode().split('-')[1]}")
    except KeyUnavailable:
        row.append(f"{epoch}:-")
print("  " + "  ".join(row))
print("\nexactly the granted window decrypts; everything else answers")
print("KeyUnavailable, which is an authorization miss, not an attack alarm")
