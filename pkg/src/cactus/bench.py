"""Per-stage latency breakdown of the live-stream loop.

Measures mean and standard deviation over a run of synthetic frames for the
five camera-side stages (key extraction, frame encryption, hash, signature,
upload) and the five viewer-side stages (download, key extraction, frame
decryption, hash verification, signature verification).

Absolute numbers are hardware- and network-bound; what carries over is the
shape: key extraction pays only at epoch boundaries (a cached key serves
the rest of the epoch, so its deviation exceeds its mean) and the
store round trips dominate every cryptographic stage when the store sits
behind a network.
"""

from __future__ import annotations

import argparse
import hashlib
import hmac as hmac_mod
import os
import statistics
import struct
import time
from dataclasses import dataclass, field

from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .framecrypto import BlockManifest, CameraIdentity, FrameRecord, PlainFrame
from .frames import synthetic_frame
from .keytree import KeyTree, TreeParams, epoch_of
from .sigscheme import get_scheme
from .storage import BlobKey, StorageClient


@dataclass
class BenchConfig:
    frames: int = 1000
    frame_bytes: int = 46_080
    frame_rate: int = 10
    block_size_n: int = 10
    depth: int = 32
    epoch_seconds: int = 10
    storage_url: str = "mem://bench"
    seed: bytes = b"bench-seed"
    zero_frames: bool = False  # all-zero payloads instead of the PRF stream


CAMERA_ROWS = ["Key Extraction", "Frame Encryption", "Hash", "Signature", "Upload"]
VIEWER_ROWS = [
    "Download",
    "Key Extraction",
    "Frame Decryption",
    "Hash Verification",
    "Signature Verification",
]


@dataclass
class BenchReport:
    rows: dict[tuple[str, str], list[float]] = field(default_factory=dict)

    def add(self, device: str, operation: str, millis: float):
        self.rows.setdefault((device, operation), []).append(millis)

    def mean(self, device: str, operation: str) -> float:
        return statistics.fmean(self.rows[(device, operation)])

    def sigma(self, device: str, operation: str) -> float:
        samples = self.rows[(device, operation)]
        return statistics.pstdev(samples) if len(samples) > 1 else 0.0

    def row_names(self) -> list[tuple[str, str]]:
        return [("camera", op) for op in CAMERA_ROWS] + [
            ("viewer", op) for op in VIEWER_ROWS
        ]

    def render(self) -> str:
        lines = [
            f"{'Device':<8} {'Operation':<24} {'Delay (ms)':>12} {'sigma (ms)':>12}",
            "-" * 60,
        ]
        for device, op in self.row_names():
            lines.append(
                f"{device:<8} {op:<24} {self.mean(device, op):>12.4f} "
                f"{self.sigma(device, op):>12.4f}"
            )
        return "\n".join(lines)


class _CachedKeySource:
    """Per-epoch key cache: the in-epoch fast path the camera actually runs."""

    def __init__(self, tree: KeyTree):
        self.tree = tree
        self._epoch = None
        self._key = None

    def key_for_time(self, t_ms: int) -> bytes:
        epoch = epoch_of(t_ms, self.tree.params)
        if epoch != self._epoch:
            self._key = self.tree.key_for_epoch(epoch)
            self._epoch = epoch
        return self._key


def _ms(t0: int) -> float:
    return (time.perf_counter_ns() - t0) / 1e6


def bench_run(config: BenchConfig) -> BenchReport:
    params = TreeParams(config.depth, config.epoch_seconds, 0)
    tree = KeyTree.from_seed(params, hashlib.sha256(config.seed).digest())
    camera = CameraIdentity.generate()
    client = StorageClient(config.storage_url)
    report = BenchReport()
    scheme = get_scheme("ed25519")

    # --- camera side: encrypt, sign, upload ---------------------------------
    source = _CachedKeySource(tree)
    interval = 1000 // config.frame_rate
    t = 1
    sequence = 0
    blocks: list[BlobKey] = []
    pending: list[tuple[FrameRecord, bytes]] = []
    for _ in range(config.frames):
        if config.zero_frames:
            payload = bytes(config.frame_bytes)
        else:
            payload = synthetic_frame(config.seed, t, config.frame_bytes)
        frame = PlainFrame(t, payload)

        t0 = time.perf_counter_ns()
        key = source.key_for_time(frame.t)
        report.add("camera", "Key Extraction", _ms(t0))

        iv = os.urandom(16)
        t0 = time.perf_counter_ns()
        ciphertext = AESGCM(key).encrypt(iv, frame.payload, None)
        report.add("camera", "Frame Encryption", _ms(t0))

        t0 = time.perf_counter_ns()
        mac = hmac_mod.new(
            key, ciphertext + iv + struct.pack(">Q", frame.t), hashlib.sha256
        ).digest()
        report.add("camera", "Hash", _ms(t0))

        pending.append((FrameRecord(frame.t, iv, ciphertext, mac), mac))
        if len(pending) == config.block_size_n:
            t0 = time.perf_counter_ns()
            signature = scheme.sign(camera.signing_key, b"".join(m for _, m in pending))
            report.add("camera", "Signature", _ms(t0))
            records = tuple(r for r, _ in pending)
            first_epoch = epoch_of(records[0].t, params)
            raw = BlockManifest(camera.camera_id, first_epoch, records, signature).to_bytes()
            key_id = BlobKey(camera.camera_id, first_epoch, sequence)
            t0 = time.perf_counter_ns()
            client.put_block(key_id, raw)
            report.add("camera", "Upload", _ms(t0))
            blocks.append(key_id)
            sequence += 1
            pending.clear()
        t += interval

    # --- viewer side: download, verify, decrypt ------------------------------
    # one GET per recorded epoch: each download sample is a real store
    # round trip, the way a polling viewer pays for it
    viewer_source = _CachedKeySource(tree)
    fetched: list[bytes] = []
    for epoch in sorted({k.first_epoch for k in blocks}):
        t0 = time.perf_counter_ns()
        batch = client.get_range(camera.camera_id, epoch, epoch + 1)
        elapsed = _ms(t0)
        for _ in batch:
            report.add("viewer", "Download", elapsed / len(batch))
        fetched.extend(batch)

    for raw in fetched:
        manifest = BlockManifest.from_bytes(raw)
        macs = []
        keys = []
        for record in manifest.frames:
            t0 = time.perf_counter_ns()
            key = viewer_source.key_for_time(record.t)
            report.add("viewer", "Key Extraction", _ms(t0))
            keys.append(key)

            t0 = time.perf_counter_ns()
            mac = hmac_mod.new(
                key,
                record.ciphertext + record.iv + struct.pack(">Q", record.t),
                hashlib.sha256,
            ).digest()
            ok = hmac_mod.compare_digest(mac, record.hmac)
            report.add("viewer", "Hash Verification", _ms(t0))
            if not ok:
                raise AssertionError("bench stream failed hash verification")
            macs.append(mac)

        t0 = time.perf_counter_ns()
        if not scheme.verify(camera.public_key, manifest.signature, b"".join(macs)):
            raise AssertionError("bench stream failed signature verification")
        report.add("viewer", "Signature Verification", _ms(t0))

        for key, record in zip(keys, manifest.frames):
            t0 = time.perf_counter_ns()
            AESGCM(key).decrypt(record.iv, record.ciphertext, None)
            report.add("viewer", "Frame Decryption", _ms(t0))

    return report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cactus-bench", description="Live-stream latency breakdown."
    )
    parser.add_argument("--frames", type=int, default=1000)
    parser.add_argument("--frame-bytes", type=int, default=460_800)
    parser.add_argument("--frame-rate", type=int, default=10)
    parser.add_argument("--block-size", type=int, default=10)
    parser.add_argument("--depth", type=int, default=32)
    parser.add_argument("--epoch-seconds", type=int, default=10)
    parser.add_argument("--storage-url", default="mem://bench")
    parser.add_argument("--zero-frames", action="store_true")
    args = parser.parse_args(argv)
    report = bench_run(
        BenchConfig(
            frames=args.frames,
            frame_bytes=args.frame_bytes,
            frame_rate=args.frame_rate,
            block_size_n=args.block_size,
            depth=args.depth,
            epoch_seconds=args.epoch_seconds,
            storage_url=args.storage_url,
            zero_frames=args.zero_frames,
        )
    )
    print(report.render())
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
