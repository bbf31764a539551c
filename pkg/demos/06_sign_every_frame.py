#!/usr/bin/env python3
"""Signing every frame with a one-time-signature chain.

Block signing makes a viewer wait for N frames; the chain variant signs
frame 1 conventionally and then lets each frame carry the key that verifies
the next, so playback can authenticate frame by frame.

Run: python demos/06_sign_every_frame.py
"""

from cactus import (
    CameraIdentity,
    ChainBroken,
    KeyTree,
    OtsFrame,
    PlainFrame,
    TreeParams,
    ots_encrypt_stream,
    ots_verify_stream,
)

print("=" * 64)
print("One-time-signature streaming")
print("=" * 64)

tree = KeyTree.from_seed(TreeParams(8, 10, 0), b"\x55" * 32)
camera = CameraIdentity.generate()
frames = [PlainFrame(1 + i * 100, f"frame {i}".encode()) for i in range(12)]

stream = list(ots_encrypt_stream(iter(frames), tree, camera))
print(f"\nencrypted {len(stream)} frames; each carries a fresh one-time public key")
print(f"frame 0 signature verifies under the camera key; frame 1 under the")
print(f"key embedded in frame 0, and so on down the chain")

print("\nincremental verification (no buffering):")
for i, plain in enumerate(ots_verify_stream(iter(stream), tree, camera.public_key)):
    if i < 3 or i == len(stream) - 1:
        print(f"  frame {i}: {plain.payload.decode()!r} verified")
    elif i == 3:
        print("  ...")

print("\nnow the cloud drops frame 5:")
gapped = stream[:5] + stream[6:]
verifier = ots_verify_stream(iter(gapped), tree, camera.public_key)
delivered = 0
try:
    for _ in verifier:
        delivered += 1
except ChainBroken as exc:
    print(f"  {delivered} frames verified, then: {exc}")
    print("  frame 6's verifying key was inside frame 5; the chain is severed")

print("\nand a tamper with the carried key in frame 3:")
f = stream[3]
mutated = OtsFrame(
    f.t, f.iv, f.ciphertext,
    bytes([f.next_public_key[0] ^ 1]) + f.next_public_key[1:], f.signature,
)
verifier = ots_verify_stream(iter(stream[:3] + [mutated]), tree, camera.public_key)
delivered = 0
try:
    for _ in verifier:
        delivered += 1
except ChainBroken as exc:
    print(f"  {delivered} frames verified, then: {exc}")
    print("  the carried key is inside frame 3's own MAC, so frame 3 itself dies")
