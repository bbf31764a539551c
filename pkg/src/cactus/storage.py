"""The untrusted cloud: an append-only blob store with no access control.

Honest mode is a pure content map: get after put is bitwise identity and
overwrites are refused.  Adversarial modes (bit tampering, drops, replays
of stale blobs into fresh ranges) exercise the end-to-end claim that no
confidentiality or integrity property depends on store behavior.

HTTP surface (curl-able on purpose):
    PUT /v1/{camera_id_hex}/{first_epoch}/{sequence}      body = blob
    GET /v1/{camera_id_hex}?from={e}&to={e}               -> length-prefixed
                                                             blob concatenation
"""

from __future__ import annotations

import argparse
import os
import random
import re
import struct
import sys
import threading
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .errors import Conflict, MalformedMessage, StorageUnreachable


@dataclass(frozen=True, order=True)
class BlobKey:
    camera_id: bytes
    first_epoch: int
    sequence: int

    def __post_init__(self):
        if len(self.camera_id) != 32:
            raise ValueError("camera ids are 32 bytes")


@dataclass
class AdversarialConfig:
    """Serving-side misbehavior knobs; all off means an honest store."""

    tamper_rate: float = 0.0
    drop_rate: float = 0.0
    replay: bool = False
    seed: int | None = None

    def active(self) -> bool:
        return self.tamper_rate > 0 or self.drop_rate > 0 or self.replay


def _flip_random_bit(data: bytes, rng: random.Random) -> bytes:
    pos = rng.randrange(len(data) * 8)
    mutated = bytearray(data)
    mutated[pos // 8] ^= 1 << (pos % 8)
    return bytes(mutated)


class MemoryBlobStore:
    """In-memory backend; also the adversarial serving logic shared by all backends."""

    def __init__(self, adversarial: AdversarialConfig | None = None):
        self._blobs: dict[BlobKey, bytes] = {}
        self._lock = threading.Lock()
        self.adversarial = adversarial or AdversarialConfig()
        self._rng = random.Random(self.adversarial.seed)

    def put_block(self, key: BlobKey, data: bytes):
        with self._lock:
            if key in self._blobs:
                raise Conflict(f"blob {key} already stored")
            self._blobs[key] = bytes(data)

    def _select(self, camera_id: bytes, epoch_from: int, epoch_to: int):
        with self._lock:
            keys = sorted(
                k
                for k in self._blobs
                if k.camera_id == camera_id and epoch_from <= k.first_epoch < epoch_to
            )
            return [(k, self._blobs[k]) for k in keys], [
                v
                for k, v in sorted(self._blobs.items())
                if k.camera_id == camera_id and k.first_epoch < epoch_from
            ]

    def get_range(
        self, camera_id: bytes, epoch_from: int, epoch_to: int
    ) -> list[tuple[BlobKey, bytes]]:
        selected, stale = self._select(camera_id, epoch_from, epoch_to)
        return self._serve(selected, stale)

    def _serve(self, selected, stale):
        cfg = self.adversarial
        if not cfg.active():
            return selected
        out = []
        for key, blob in selected:
            if cfg.drop_rate and self._rng.random() < cfg.drop_rate:
                continue
            if cfg.tamper_rate and self._rng.random() < cfg.tamper_rate:
                blob = _flip_random_bit(blob, self._rng)
            out.append((key, blob))
        if cfg.replay and stale:
            # lie: serve an old blob as if it belonged to the requested range
            out.append((BlobKey(bytes(32), 0, 0), self._rng.choice(stale)))
        return out


class DirectoryBlobStore(MemoryBlobStore):
    """Directory-per-camera flat files named {first_epoch}-{sequence}.blk."""

    _NAME = re.compile(r"^(\d+)-(\d+)\.blk$")

    def __init__(self, root: str | Path, adversarial: AdversarialConfig | None = None):
        super().__init__(adversarial)
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _camera_dir(self, camera_id: bytes) -> Path:
        return self.root / camera_id.hex()

    def put_block(self, key: BlobKey, data: bytes):
        directory = self._camera_dir(key.camera_id)
        directory.mkdir(parents=True, exist_ok=True)
        final = directory / f"{key.first_epoch}-{key.sequence}.blk"
        with self._lock:
            if final.exists():
                raise Conflict(f"blob {key} already stored")
            tmp = final.with_suffix(".tmp")
            tmp.write_bytes(data)
            os.replace(tmp, final)

    def _select(self, camera_id: bytes, epoch_from: int, epoch_to: int):
        directory = self._camera_dir(camera_id)
        selected, stale = [], []
        if not directory.is_dir():
            return selected, stale
        entries = []
        for path in directory.iterdir():
            m = self._NAME.match(path.name)
            if m:
                entries.append((int(m.group(1)), int(m.group(2)), path))
        for first_epoch, sequence, path in sorted(entries):
            if epoch_from <= first_epoch < epoch_to:
                selected.append((BlobKey(camera_id, first_epoch, sequence), path.read_bytes()))
            elif first_epoch < epoch_from:
                stale.append(path.read_bytes())
        return selected, stale


# --- length-prefixed response encoding ----------------------------------------

def pack_blobs(blobs: list[bytes]) -> bytes:
    return b"".join(struct.pack(">I", len(b)) + b for b in blobs)


def unpack_blobs(data: bytes) -> list[bytes]:
    out = []
    off = 0
    while off < len(data):
        if off + 4 > len(data):
            raise MalformedMessage("truncated blob list")
        (n,) = struct.unpack(">I", data[off : off + 4])
        off += 4
        if off + n > len(data):
            raise MalformedMessage("truncated blob")
        out.append(data[off : off + n])
        off += n
    return out


# --- HTTP service --------------------------------------------------------------

_PUT_PATH = re.compile(r"^/v1/([0-9a-f]{64})/(\d+)/(\d+)$")
_GET_PATH = re.compile(r"^/v1/([0-9a-f]{64})$")


class _Handler(BaseHTTPRequestHandler):
    store: MemoryBlobStore
    quiet = True

    def log_message(self, *args):
        if not self.quiet:
            super().log_message(*args)

    def _reply(self, code: int, body: bytes = b""):
        self.send_response(code)
        self.send_header("Content-Type", "application/octet-stream")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if body:
            self.wfile.write(body)

    def do_PUT(self):
        m = _PUT_PATH.match(self.path)
        if not m:
            return self._reply(404)
        camera_id = bytes.fromhex(m.group(1))
        key = BlobKey(camera_id, int(m.group(2)), int(m.group(3)))
        length = int(self.headers.get("Content-Length", "0"))
        data = self.rfile.read(length)
        try:
            self.store.put_block(key, data)
        except Conflict:
            return self._reply(409)
        self._reply(201)

    def do_GET(self):
        parsed = urllib.parse.urlparse(self.path)
        m = _GET_PATH.match(parsed.path)
        if not m:
            return self._reply(404)
        query = urllib.parse.parse_qs(parsed.query)
        try:
            epoch_from = int(query.get("from", ["0"])[0])
            epoch_to = int(query.get("to", [str(2**63)])[0])
        except ValueError:
            return self._reply(400)
        blobs = self.store.get_range(bytes.fromhex(m.group(1)), epoch_from, epoch_to)
        self._reply(200, pack_blobs([b for _, b in blobs]))


class StorageServer:
    def __init__(self, store: MemoryBlobStore, host: str = "127.0.0.1", port: int = 0):
        handler = type("BoundHandler", (_Handler,), {"store": store})
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.store = store
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self):
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread:
            self._thread.join()


# --- client ----------------------------------------------------------------------

class StorageClient:
    """Blob-store client for http:// service URLs and file:// local roots."""

    def __init__(self, url: str, timeout: float = 10.0):
        self.url = url.rstrip("/")
        self.timeout = timeout
        self._local: MemoryBlobStore | None = None
        if url.startswith("file://"):
            self._local = DirectoryBlobStore(url[len("file://") :])
        elif url.startswith("mem://"):
            self._local = MemoryBlobStore()
        elif not url.startswith("http"):
            raise ValueError(f"unsupported storage url {url!r}")

    def put_block(self, key: BlobKey, data: bytes):
        if self._local is not None:
            return self._local.put_block(key, data)
        path = f"{self.url}/v1/{key.camera_id.hex()}/{key.first_epoch}/{key.sequence}"
        request = urllib.request.Request(path, data=data, method="PUT")
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                resp.read()
        except urllib.error.HTTPError as exc:
            if exc.code == 409:
                raise Conflict(f"blob {key} already stored") from None
            raise StorageUnreachable(f"PUT failed: {exc}") from None
        except OSError as exc:
            raise StorageUnreachable(f"PUT failed: {exc}") from None

    def get_range(self, camera_id: bytes, epoch_from: int, epoch_to: int) -> list[bytes]:
        if self._local is not None:
            return [b for _, b in self._local.get_range(camera_id, epoch_from, epoch_to)]
        path = f"{self.url}/v1/{camera_id.hex()}?from={epoch_from}&to={epoch_to}"
        try:
            with urllib.request.urlopen(path, timeout=self.timeout) as resp:
                return unpack_blobs(resp.read())
        except (urllib.error.URLError, OSError) as exc:
            raise StorageUnreachable(f"GET failed: {exc}") from None


# --- storaged -----------------------------------------------------------------

def storaged_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="storaged", description="Untrusted blob-store service."
    )
    parser.add_argument("--listen", default="127.0.0.1:8750", help="host:port to bind")
    parser.add_argument("--root", default=None, help="persist blobs under this directory")
    parser.add_argument("--tamper-rate", type=float, default=0.0)
    parser.add_argument("--drop-rate", type=float, default=0.0)
    parser.add_argument("--replay", action="store_true")
    parser.add_argument("--seed", type=int, default=None, help="adversary RNG seed")
    args = parser.parse_args(argv)

    host, _, port = args.listen.rpartition(":")
    adversarial = AdversarialConfig(args.tamper_rate, args.drop_rate, args.replay, args.seed)
    store = (
        DirectoryBlobStore(args.root, adversarial)
        if args.root
        else MemoryBlobStore(adversarial)
    )
    server = StorageServer(store, host or "127.0.0.1", int(port))
    mode = "adversarial" if adversarial.active() else "honest"
    print(f"storaged listening on {server.url} ({mode} mode)", flush=True)
    try:
        server.httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(storaged_main())
