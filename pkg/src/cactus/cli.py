"""Role binaries: camd (camera daemon), viewer, and admin.

camd reads a flat TOML config, resumes from its state file, and runs the
three-stage pipeline: produce synthetic (or file-sourced) frames, encrypt
and sign blocks, upload.  The key frontier rotates forward as epochs pass
and the state file never contains past keys.  viewer downloads a range,
verifies, decrypts, and writes plaintext frames; --follow tails the live
stream and reports end-to-end latency.  admin drives pairing, delegation,
deletion, reset, recovery, and escrow inspection over a local socket.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import queue
import socket
import sys
import threading
import time
from collections import deque
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import admin as admin_proto
from .adversaries import SCRIPTED
from .channels import FileVisualChannel, InsecureChannel, SocketEndpoint, VisualChannel
from .devices import CameraDevice, OwnerDevice
from .errors import CactusError, KeyUnavailable, PairingAborted, StorageUnreachable
from .framecrypto import BlockManifest, PlainFrame, encrypt_block, verify_decrypt_block
from .frames import DEFAULT_FRAME_BYTES, synthetic_frame
from .identity import IdentityBundle
from .keytree import EpochRange, KeyTree, epoch_of
from .pairing import (
    PairingSession,
    init_pairing,
    pack_grant,
    run_delegation_delegatee,
    run_delegation_owner,
    run_init_camera,
    run_init_owner,
    unpack_grant,
)
from .storage import BlobKey, StorageClient

STATE_ENV = "CACTUS_STATE"


def _now_ms() -> int:
    return int(time.time() * 1000)


def save_state(path: str | Path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    os.chmod(tmp, 0o600)
    os.replace(tmp, path)


def parse_time(text: str) -> int:
    """RFC3339 timestamp or raw integer milliseconds."""
    try:
        return int(text)
    except ValueError:
        pass
    normalized = text.replace("Z", "+00:00")
    dt = datetime.fromisoformat(normalized)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp() * 1000)


# --- camd ----------------------------------------------------------------------

@dataclass
class CameraConfig:
    frame_rate: int = 10
    frame_bytes: int = DEFAULT_FRAME_BYTES
    block_size_n: int = 10
    depth: int = 32
    epoch_seconds: int = 10
    storage_url: str = "file://./blobs"
    state_path: str = "camera.state"
    seed: str = "camd"
    frames_dir: str = ""
    realtime: bool = True
    max_frames: int = 0
    retry_queue_blocks: int = 8

    def __post_init__(self):
        if self.frame_rate < 1 or self.block_size_n < 1:
            raise ValueError("frame_rate and block_size_n must be >= 1")


def load_camera_config(path: str | Path) -> CameraConfig:
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    known = {f.name for f in fields(CameraConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    config = CameraConfig(**raw)
    env_state = os.environ.get(STATE_ENV)
    if env_state:
        config.state_path = env_state
    return config


class _FileFrameSource:
    def __init__(self, directory: str | Path):
        self.paths = sorted(Path(directory).iterdir())
        if not self.paths:
            raise ValueError(f"no frame files in {directory}")
        self._i = 0

    def frame(self, t_ms: int, size: int) -> bytes:
        data = self.paths[self._i % len(self.paths)].read_bytes()
        self._i += 1
        return data or b"\x00"


def camd_run(config: CameraConfig, device: CameraDevice, clock=_now_ms) -> dict:
    """Record continuously; returns run statistics."""
    if device.state is None:
        raise CactusError("camera is not initialized; pair it first")
    state = device.state
    params = state.tree.params
    interval = max(1, 1000 // config.frame_rate)
    client = StorageClient(config.storage_url)
    source = _FileFrameSource(config.frames_dir) if config.frames_dir else None
    seed = config.seed.encode()

    frame_q: queue.Queue = queue.Queue(maxsize=4 * config.block_size_n)
    block_q: queue.Queue = queue.Queue(maxsize=config.retry_queue_blocks)
    stats = {"frames": 0, "blocks": 0, "uploaded": 0, "dropped_blocks": 0, "rotations": 0}
    stop = threading.Event()

    def producer():
        t = state.last_frame_t + interval if state.last_frame_t else params.t0
        if config.realtime:
            t = max(t, clock())
        produced = 0
        while not stop.is_set():
            if config.max_frames and produced >= config.max_frames:
                break
            if config.realtime:
                ahead = t - clock()
                if ahead > 0:
                    time.sleep(ahead / 1000)
            payload = (
                source.frame(t, config.frame_bytes)
                if source
                else synthetic_frame(seed, t, config.frame_bytes)
            )
            frame_q.put(PlainFrame(t, payload))
            produced += 1
            t += interval
        frame_q.put(None)

    retry_buffer: deque = deque()

    def uploader():
        while True:
            while retry_buffer:
                key, raw = retry_buffer[0]
                try:
                    client.put_block(key, raw)
                    stats["uploaded"] += 1
                    retry_buffer.popleft()
                except StorageUnreachable:
                    break
            try:
                item = block_q.get(timeout=0.05)
            except queue.Empty:
                if stop.is_set() and not retry_buffer:
                    return
                continue
            if item is None:
                while retry_buffer:
                    key, raw = retry_buffer[0]
                    try:
                        client.put_block(key, raw)
                        stats["uploaded"] += 1
                        retry_buffer.popleft()
                    except StorageUnreachable:
                        stats["dropped_blocks"] += len(retry_buffer)
                        print(
                            f"camd: dropping {len(retry_buffer)} unuploadable blocks",
                            file=sys.stderr,
                        )
                        retry_buffer.clear()
                return
            retry_buffer.append(item)
            if len(retry_buffer) > config.retry_queue_blocks:
                retry_buffer.popleft()
                stats["dropped_blocks"] += 1
                print("camd: retry queue overflow, dropped oldest block", file=sys.stderr)

    threads = [threading.Thread(target=producer, daemon=True),
               threading.Thread(target=uploader, daemon=True)]
    for t in threads:
        t.start()

    identity = state.block_identity
    rotated_to = 0
    pending: list[PlainFrame] = []
    try:
        while True:
            frame = frame_q.get()
            if frame is None:
                break
            pending.append(frame)
            if len(pending) < config.block_size_n:
                continue
            block_epoch = epoch_of(pending[0].t, params)
            if block_epoch > rotated_to:
                # key rotation: past keys are zeroized and leave the state
                state.tree.rotate_to(block_epoch)
                rotated_to = block_epoch
                stats["rotations"] += 1
            manifest = encrypt_block(pending, state.tree, identity)
            raw = manifest.to_bytes()
            key = BlobKey(identity.camera_id, manifest.first_epoch, state.next_sequence)
            state.next_sequence += 1
            state.last_frame_t = pending[-1].t
            stats["frames"] += len(pending)
            stats["blocks"] += 1
            pending.clear()
            save_state(config.state_path, device.to_bytes())
            block_q.put((key, raw))
    finally:
        stop.set()
        block_q.put(None)
        for t in threads:
            t.join(timeout=30)
        save_state(config.state_path, device.to_bytes())
    return stats


def camd_main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="camd", description="Recording camera daemon.")
    parser.add_argument("--config", required=True, help="flat TOML config file")
    args = parser.parse_args(argv)
    config = load_camera_config(args.config)
    device = CameraDevice.from_bytes(Path(config.state_path).read_bytes())
    stats = camd_run(config, device)
    print(
        f"camd: {stats['frames']} frames in {stats['blocks']} blocks, "
        f"{stats['uploaded']} uploaded, {stats['dropped_blocks']} dropped",
        flush=True,
    )
    return 0


# --- viewer ----------------------------------------------------------------------

@dataclass
class PlayReport:
    delivered: int = 0
    unauthorized: list = field(default_factory=list)
    rejected: list = field(default_factory=list)
    latencies_ms: list = field(default_factory=list)


def _emit_frame(frame: PlainFrame, out):
    if out == "-":
        sys.stdout.buffer.write(
            frame.t.to_bytes(8, "big") + len(frame.payload).to_bytes(4, "big") + frame.payload
        )
    else:
        Path(out, f"{frame.t:020d}.frame").write_bytes(frame.payload)


def viewer_play(
    tree: KeyTree,
    camera_pub: bytes,
    client: StorageClient,
    t_from: int,
    t_to: int,
    out: str = "-",
    follow: bool = False,
    follow_seconds: float = 0.0,
    poll_interval: float = 0.2,
    clock=_now_ms,
    log=print,
) -> PlayReport:
    """Fetch, verify, decrypt, and emit frames for [t_from, t_to)."""
    params = tree.params
    e_from = max(0, (t_from - params.t0) // (params.epoch_seconds * 1000))
    e_to = min(
        params.num_epochs,
        (t_to - params.t0 + params.epoch_seconds * 1000 - 1) // (params.epoch_seconds * 1000),
    )
    camera_id = hashlib.sha256(camera_pub).digest()
    if out != "-":
        Path(out).mkdir(parents=True, exist_ok=True)
    report = PlayReport()
    seen: set[bytes] = set()
    deadline = time.monotonic() + follow_seconds if follow else None

    while True:
        for raw in client.get_range(camera_id, e_from, e_to):
            digest = hashlib.sha256(raw).digest()
            if digest in seen:
                continue
            seen.add(digest)
            try:
                manifest = BlockManifest.from_bytes(raw)
            except (CactusError, ValueError) as exc:
                report.rejected.append((-1, f"unparseable block: {exc}"))
                log(f"viewer: rejected unparseable blob: {exc}")
                continue
            block_id = manifest.first_epoch
            try:
                frames = verify_decrypt_block(manifest, tree, camera_pub)
            except KeyUnavailable as exc:
                report.unauthorized.append(block_id)
                log(f"viewer: block epoch={block_id}: unauthorized ({exc})")
                continue
            except (CactusError, ValueError) as exc:
                report.rejected.append((block_id, type(exc).__name__))
                log(f"viewer: block epoch={block_id}: rejected ({type(exc).__name__}: {exc})")
                continue
            epochs = {epoch_of(f.t, params) for f in frames}
            if max(epochs) < e_from or min(epochs) >= e_to:
                report.rejected.append((block_id, "replayed out-of-range block"))
                log(f"viewer: block epoch={block_id}: rejected (replayed out-of-range block)")
                continue
            for frame in frames:
                if t_from <= frame.t < t_to:
                    _emit_frame(frame, out)
                    report.delivered += 1
                    report.latencies_ms.append(clock() - frame.t)
        if deadline is None or time.monotonic() >= deadline:
            break
        time.sleep(poll_interval)
    return report


def _load_viewer_credentials(args) -> tuple[KeyTree, bytes]:
    if args.grant:
        camera_pub, tree = unpack_grant(Path(args.grant).read_bytes())
        if not camera_pub:
            raise CactusError("grant file carries no camera verification key")
        return tree, camera_pub
    owner = OwnerDevice.from_bytes(Path(args.state).read_bytes())
    return owner.tree, owner.camera_block_pub


def viewer_main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="viewer", description="Decrypt and play footage.")
    credential = parser.add_mutually_exclusive_group(required=True)
    credential.add_argument("--state", help="owner state file")
    credential.add_argument("--grant", help="delegation grant file")
    parser.add_argument("--storage-url", required=True)
    parser.add_argument("--from", dest="t_from", required=True, help="RFC3339 or ms")
    parser.add_argument("--to", dest="t_to", required=True, help="RFC3339 or ms")
    parser.add_argument("--follow", action="store_true", help="tail the live stream")
    parser.add_argument("--follow-seconds", type=float, default=30.0)
    parser.add_argument("--out", default="-", help="output directory, or - for stdout")
    args = parser.parse_args(argv)

    tree, camera_pub = _load_viewer_credentials(args)
    report = viewer_play(
        tree,
        camera_pub,
        StorageClient(args.storage_url),
        parse_time(args.t_from),
        parse_time(args.t_to),
        out=args.out,
        follow=args.follow,
        follow_seconds=args.follow_seconds,
        log=lambda msg: print(msg, file=sys.stderr),
    )
    print(
        f"viewer: delivered={report.delivered} unauthorized={len(report.unauthorized)} "
        f"rejected={len(report.rejected)}",
        file=sys.stderr,
    )
    if args.follow and report.latencies_ms:
        import statistics

        mean = statistics.fmean(report.latencies_ms)
        sigma = statistics.pstdev(report.latencies_ms) if len(report.latencies_ms) > 1 else 0.0
        print(
            f"viewer: end-to-end latency mean={mean:.1f} ms sigma={sigma:.1f} ms "
            f"over {len(report.latencies_ms)} frames",
            file=sys.stderr,
        )
    return 0


# --- admin -----------------------------------------------------------------------

def _listen(spec: str) -> socket.socket:
    host, _, port = spec.rpartition(":")
    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    server.bind((host or "127.0.0.1", int(port)))
    server.listen(1)
    print(f"listening on {server.getsockname()[0]}:{server.getsockname()[1]}", flush=True)
    return server

def _connect(spec: str, timeout: float = 30.0) -> socket.socket:
    host, _, port = spec.rpartition(":")
    deadline = time.monotonic() + timeout
    while True:
        try:
            return socket.create_connection((host or "127.0.0.1", int(port)), timeout=timeout)
        except OSError:
            if time.monotonic() >= deadline:
                raise
            time.sleep(0.05)


def _admin_pair(args) -> int:
    if args.adversary:
        return _pair_simulation(args.adversary)
    if not args.role or not args.state:
        print("pair needs --role and --state (or --adversary)", file=sys.stderr)
        return 2
    if args.role == "owner" and not args.connect:
        print("the owner role needs --connect", file=sys.stderr)
        return 2
    visual = FileVisualChannel(args.visual_dir)
    if args.role == "camera":
        state_path = Path(args.state)
        if state_path.exists():
            device = CameraDevice.from_bytes(state_path.read_bytes())
            if device.initialized:
                print("camera already initialized; factory-reset it first", file=sys.stderr)
                return 1
        else:
            device = CameraDevice(IdentityBundle.generate())
        server = _listen(args.listen)
        conn, _ = server.accept()
        endpoint = SocketEndpoint(conn)
        session = PairingSession("camera")
        try:
            result = run_init_camera(session, visual, endpoint, device.factory_keys)
        except PairingAborted as exc:
            print(f"pairing aborted at step {exc.step}", file=sys.stderr)
            return 1
        finally:
            endpoint.close()
            server.close()
        device.install(
            result.identity, result.owner_public, result.tree, result.escrow,
            result.wifi_credentials,
        )
        save_state(state_path, device.to_bytes())
        print(f"camera paired; state saved to {state_path}")
        return 0

    endpoint = SocketEndpoint(_connect(args.connect))
    session = PairingSession("owner")
    session.tree_depth = args.depth
    session.epoch_seconds = args.delta
    session.wifi = args.wifi
    try:
        result = run_init_owner(session, visual, endpoint)
    except PairingAborted as exc:
        print(f"pairing aborted at step {exc.step}", file=sys.stderr)
        return 1
    finally:
        endpoint.close()
    owner = OwnerDevice(result.keys, result.camera_public, result.tree)
    save_state(args.state, owner.to_bytes())
    print(f"owner paired; state saved to {args.state}")
    print(f"recovery passphrase: {result.passphrase.display}")
    return 0


def _pair_simulation(name: str) -> int:
    """Run both roles in-process under a scripted MITM; report the outcome."""
    if name not in SCRIPTED:
        print(f"unknown adversary {name!r}; choose from {sorted(SCRIPTED)}", file=sys.stderr)
        return 2
    factory = IdentityBundle.generate()
    adversary = SCRIPTED[name](IdentityBundle.generate())
    camera_s = PairingSession("camera")
    owner_s = PairingSession("owner")
    owner_s.tree_depth = 8
    try:
        init_pairing(
            camera_s, owner_s, VisualChannel(timeout=5.0),
            InsecureChannel(adversary, timeout=5.0), factory,
        )
    except PairingAborted as exc:
        print(f"pairing aborted at step {exc.step}")
        return 1
    print("pairing completed")
    return 0


def _admin_delegate(args) -> int:
    visual = FileVisualChannel(args.visual_dir)
    if args.role == "owner":
        owner = OwnerDevice.from_bytes(Path(args.state).read_bytes())
        t_from, t_to = parse_time(args.t_from), parse_time(args.t_to)
        params = owner.tree.params
        e_from = max(0, (t_from - params.t0) // (params.epoch_seconds * 1000))
        e_to = min(
            params.num_epochs,
            -(-(t_to - params.t0) // (params.epoch_seconds * 1000)),
        )
        grant = owner.tree.minimal_cover(EpochRange(e_from, max(e_from, e_to)))
        server = _listen(args.listen)
        conn, _ = server.accept()
        endpoint = SocketEndpoint(conn)
        session = PairingSession("delegator", keys=owner.keys)
        try:
            run_delegation_owner(
                session, visual, endpoint, grant, params, owner.camera_block_pub
            )
        except PairingAborted as exc:
            print(f"delegation aborted at step {exc.step}", file=sys.stderr)
            return 1
        finally:
            endpoint.close()
            server.close()
        print(f"delegated epochs [{e_from}, {e_to})")
        return 0

    endpoint = SocketEndpoint(_connect(args.connect))
    session = PairingSession("delegatee")
    try:
        result = run_delegation_delegatee(session, visual, endpoint)
    except PairingAborted as exc:
        print(f"delegation aborted at step {exc.step}", file=sys.stderr)
        return 1
    finally:
        endpoint.close()
    save_state(args.grant_out, pack_grant(result.camera_block_pub, result.grant))
    print(f"grant saved to {args.grant_out}")
    return 0


def _admin_serve(args) -> int:
    """Camera-side control plane: answers admin and escrow requests."""
    state_path = Path(args.state)
    device = CameraDevice.from_bytes(state_path.read_bytes())
    server = _listen(args.listen)
    served = 0
    try:
        while args.max_conns == 0 or served < args.max_conns:
            conn, _ = server.accept()
            endpoint = SocketEndpoint(conn)
            admin_proto.camera_serve(device, endpoint)
            endpoint.close()
            save_state(state_path, device.to_bytes())
            served += 1
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
    return 0


def _owner_request(args, fn) -> int:
    owner = OwnerDevice.from_bytes(Path(args.state).read_bytes())
    endpoint = SocketEndpoint(_connect(args.connect))
    try:
        outcome = fn(owner, endpoint)
    except CactusError as exc:
        print(f"request failed: {exc}", file=sys.stderr)
        return 1
    finally:
        endpoint.close()
    save_state(args.state, owner.to_bytes())
    print(outcome)
    return 0


def _admin_delete(args) -> int:
    def run(owner, endpoint):
        params = owner.tree.params
        t_from, t_to = parse_time(args.t_from), parse_time(args.t_to)
        e_from = max(0, (t_from - params.t0) // (params.epoch_seconds * 1000))
        e_to = max(e_from, min(
            params.num_epochs,
            -(-(t_to - params.t0) // (params.epoch_seconds * 1000)),
        ))
        result = admin_proto.delete_videos(owner, endpoint, EpochRange(e_from, e_to))
        return f"delete {result}: epochs [{e_from}, {e_to}) are gone"

    return _owner_request(args, run)


def _admin_reset(args) -> int:
    return _owner_request(
        args, lambda owner, ep: f"reset {admin_proto.factory_reset(owner, ep)}"
    )


def _admin_recover(args) -> int:
    from .escrow import Passphrase

    endpoint = SocketEndpoint(_connect(args.connect))
    try:
        owner = admin_proto.recover(endpoint, Passphrase.from_display(args.passphrase))
    except CactusError as exc:
        print(f"recovery failed: {exc}", file=sys.stderr)
        return 1
    finally:
        endpoint.close()
    save_state(args.state_out, owner.to_bytes())
    print(f"owner state recovered to {args.state_out}")
    return 0


def _admin_escrow_show(args) -> int:
    from .escrow import camera_public_key

    if args.state:
        device = CameraDevice.from_bytes(Path(args.state).read_bytes())
        if device.state is None:
            print("camera is uninitialized; no escrow material", file=sys.stderr)
            return 1
        material = device.state.escrow
    else:
        endpoint = SocketEndpoint(_connect(args.connect))
        try:
            material = admin_proto.fetch_escrow(endpoint)
        finally:
            endpoint.close()
    pub = camera_public_key(material)
    print(f"camera public key fingerprint: {pub.fingerprint().hex()}")
    print(f"camera block-signing key: {pub.ed25519.hex()}")
    return 0


def admin_main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="admin", description="Owner/delegatee admin tool.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pair", help="initialization pairing")
    p.add_argument("--role", choices=["camera", "owner"])
    p.add_argument("--state", help="state file to create/use")
    p.add_argument("--listen", default="127.0.0.1:0")
    p.add_argument("--connect")
    p.add_argument("--visual-dir", default="./visual")
    p.add_argument("--depth", type=int, default=32)
    p.add_argument("--delta", type=int, default=10)
    p.add_argument("--wifi", default="")
    p.add_argument("--adversary", help="run a scripted-MITM simulation instead")
    p.set_defaults(fn=_admin_pair)

    p = sub.add_parser("delegate", help="delegation pairing")
    p.add_argument("--role", choices=["owner", "delegatee"], required=True)
    p.add_argument("--state", help="owner state file")
    p.add_argument("--from", dest="t_from")
    p.add_argument("--to", dest="t_to")
    p.add_argument("--listen", default="127.0.0.1:0")
    p.add_argument("--connect")
    p.add_argument("--grant-out", default="grant.bin")
    p.add_argument("--visual-dir", default="./visual")
    p.set_defaults(fn=_admin_delegate)

    p = sub.add_parser("serve", help="camera-side control plane")
    p.add_argument("--state", required=True)
    p.add_argument("--listen", default="127.0.0.1:0")
    p.add_argument("--max-conns", type=int, default=0, help="0 = serve forever")
    p.set_defaults(fn=_admin_serve)

    p = sub.add_parser("delete", help="delete a time range on owner and camera")
    p.add_argument("--state", required=True)
    p.add_argument("--connect", required=True)
    p.add_argument("--from", dest="t_from", required=True)
    p.add_argument("--to", dest="t_to", required=True)
    p.set_defaults(fn=_admin_delete)

    p = sub.add_parser("reset", help="factory reset")
    p.add_argument("--state", required=True)
    p.add_argument("--connect", required=True)
    p.set_defaults(fn=_admin_reset)

    p = sub.add_parser("recover", help="recover owner state from escrow")
    p.add_argument("--passphrase", required=True)
    p.add_argument("--connect", required=True)
    p.add_argument("--state-out", default="owner.state")
    p.set_defaults(fn=_admin_recover)

    p = sub.add_parser("escrow-show", help="print the escrow's public camera key")
    p.add_argument("--state")
    p.add_argument("--connect")
    p.set_defaults(fn=_admin_escrow_show)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(admin_main())
