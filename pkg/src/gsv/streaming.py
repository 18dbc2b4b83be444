"""HTTP delivery of layered containers and a layer-adaptive client.

The server exposes the manifest and per-(group, layer) segments; a segment is
the verbatim contiguous container slice holding that layer's channel payloads,
served with an explicit Content-Length. The client fetches the manifest, picks
a layer per group from its bandwidth estimate, downloads layers 1..l, and
decodes them. A finite bandwidth cap pins the estimate to the cap so segment
selection (and therefore byte accounting) is deterministic; without a cap the
client assumes unconstrained bandwidth and always picks the top layer, while
measured throughput still feeds the estimator for the playback log.
"""

from __future__ import annotations

import json
import threading
import time
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from .codec import decode_planes, parse_payload_stream
from .container import Manifest, emit_manifest, read_container_info
from .errors import InvalidInputError, StreamError
from .quantize import dequantize_codes, unflatten

DEFAULT_ALPHA = 0.3
DEFAULT_SAFETY = 0.8


@dataclass(frozen=True)
class BandwidthEstimate:
    """EWMA throughput tracker; ewma_bps is None until the first sample."""

    ewma_bps: float | None = None
    alpha: float = DEFAULT_ALPHA
    last_sample_bps: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise InvalidInputError("alpha must lie in (0, 1]")
        if self.ewma_bps is not None and not self.ewma_bps >= 0:
            raise InvalidInputError("ewma must be >= 0")


def update_bandwidth(est: BandwidthEstimate, nbytes: int, seconds: float) -> BandwidthEstimate:
    """Fold one transfer sample (8*bytes/seconds) into the EWMA."""
    if not seconds > 0:
        raise InvalidInputError("duration must be positive")
    sample = 8.0 * nbytes / seconds
    if est.ewma_bps is None:
        ewma = sample
    else:
        ewma = est.alpha * sample + (1.0 - est.alpha) * est.ewma_bps
    return BandwidthEstimate(ewma_bps=ewma, alpha=est.alpha, last_sample_bps=sample)


def select_layer(manifest: Manifest, est: BandwidthEstimate,
                 safety: float = DEFAULT_SAFETY, group: int | None = None) -> int:
    """Largest layer whose cumulative rate fits in safety * ewma; at least 1.

    The cumulative rate of layer l is bytes-per-frame (for the given group, or
    averaged over the whole manifest) times the frame rate times 8.
    """
    if not 0.0 < safety <= 1.0:
        raise InvalidInputError("safety must lie in (0, 1]")
    ewma = est.ewma_bps if est.ewma_bps is not None else 0.0
    fps = manifest.fps[0] / manifest.fps[1]
    chosen = 1
    for layer in range(1, manifest.layers + 1):
        bits_per_s = manifest.cum_bytes_per_frame(layer, group) * fps * 8.0
        if bits_per_s <= safety * ewma:
            chosen = layer
    return chosen


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "gsv"

    def log_message(self, *args):  # quiet by default
        pass

    def _send(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _error(self, status: int, message: str) -> None:
        self._send(status, json.dumps({"error": message}).encode(), "application/json")

    def do_GET(self):
        parsed = urllib.parse.urlparse(self.path)
        svc: "StreamService" = self.server.service
        if parsed.path == "/health":
            self._send(200, b"ok", "text/plain")
        elif parsed.path == "/manifest":
            self._send(200, svc.manifest_bytes, "application/json")
        elif parsed.path == "/segment":
            q = urllib.parse.parse_qs(parsed.query)
            try:
                group = int(q["group"][0])
                layer = int(q["layer"][0])
            except (KeyError, ValueError):
                self._error(404, "segment needs integer group and layer parameters")
                return
            blob = svc.segment(group, layer)
            if blob is None:
                self._error(404, f"no segment for group={group} layer={layer}")
                return
            self._send(200, blob, "application/octet-stream")
        else:
            self._error(404, f"unknown path {parsed.path}")


class StreamService:
    """A running container server; stop() shuts it down."""

    def __init__(self, container_path, port: int = 0):
        path = Path(container_path)
        info = read_container_info(path)
        self._data = path.read_bytes()
        self.manifest = emit_manifest(path)
        self.manifest_bytes = self.manifest.to_json_bytes()
        self._segments: dict[tuple[int, int], tuple[int, int]] = {}
        for gi, group in enumerate(info.groups):
            for layer in range(info.layer_count):
                self._segments[(gi, layer + 1)] = group.segment_range(layer)
        try:
            self._httpd = ThreadingHTTPServer(("127.0.0.1", port), _Handler)
        except OSError as e:
            raise StreamError(f"cannot bind port {port}: {e}") from e
        self._httpd.daemon_threads = True
        self._httpd.service = self
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def segment(self, group: int, layer: int) -> bytes | None:
        rng = self._segments.get((group, layer))
        if rng is None:
            return None
        offset, size = rng
        return self._data[offset:offset + size]

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)


def serve(container_path, port: int = 0) -> StreamService:
    """Start serving a container on 127.0.0.1; port 0 picks a free port."""
    return StreamService(container_path, port)


@dataclass(frozen=True)
class PlaybackPolicy:
    safety: float = DEFAULT_SAFETY
    alpha: float = DEFAULT_ALPHA
    retries: int = 3
    timeout_s: float = 10.0
    decode: bool = True


@dataclass
class GroupPlayback:
    group: int
    layer: int
    bytes: int
    fetch_ms: float
    decode_ms: float
    retries: int = 0


@dataclass
class PlaybackLog:
    groups: list[GroupPlayback] = field(default_factory=list)
    manifest_bytes: int = 0
    completed: bool = False
    error: str | None = None
    estimate: BandwidthEstimate = field(default_factory=BandwidthEstimate)

    @property
    def total_bytes(self) -> int:
        return sum(g.bytes for g in self.groups)


def _fetch(url: str, timeout: float) -> bytes:
    with urllib.request.urlopen(url, timeout=timeout) as resp:
        data = resp.read()
        length = resp.headers.get("Content-Length")
        if length is not None and int(length) != len(data):
            raise StreamError(f"content length mismatch on {url}")
        return data


def _decode_segment(blob: bytes, manifest: Manifest, group: int, layer: int) -> None:
    """Decode a segment's payloads and dequantize them (client-side check)."""
    payloads = parse_payload_stream(blob)
    channels = manifest.groups[group].channels[layer - 1]
    if len(payloads) != len(channels):
        raise StreamError(f"segment g={group} l={layer}: expected "
                          f"{len(channels)} payloads, got {len(payloads)}")
    n = manifest.groups[group].gauss_counts[layer - 1]
    for payload, ch in zip(payloads, channels):
        planes = decode_planes(payload)
        for p in planes:
            dequantize_codes(unflatten(p, n), ch.bits, ch.range_min, ch.range_max)


def client_play(url: str, policy: PlaybackPolicy = PlaybackPolicy(),
                bandwidth_cap_bps: float | None = None) -> PlaybackLog:
    """Play a stream end to end, fetching layers 1..l per group.

    A finite cap pins the bandwidth estimate to the cap (deterministic layer
    choice); cap None or inf selects the top layer. Segment fetch failures are
    retried, then the group degrades to layer 1; if even that fails the log is
    returned partial with the error recorded.
    """
    log = PlaybackLog(estimate=BandwidthEstimate(alpha=policy.alpha))
    base = url.rstrip("/")
    try:
        manifest_raw = _fetch(base + "/manifest", policy.timeout_s)
    except (urllib.error.URLError, OSError, StreamError) as e:
        log.error = f"manifest fetch failed: {e}"
        return log
    log.manifest_bytes = len(manifest_raw)
    manifest = Manifest.from_json_bytes(manifest_raw)

    capped = bandwidth_cap_bps is not None and np.isfinite(bandwidth_cap_bps)
    for gi in range(len(manifest.groups)):
        if capped:
            sel_est = BandwidthEstimate(ewma_bps=float(bandwidth_cap_bps),
                                        alpha=policy.alpha)
            layer = select_layer(manifest, sel_est, policy.safety, group=gi)
        else:
            layer = manifest.layers
        fetched: list[bytes] = []
        nbytes = 0
        retries = 0
        t0 = time.perf_counter()
        l_target = layer
        failed = False
        for l in range(1, l_target + 1):
            seg_url = f"{base}/segment?group={gi}&layer={l}"
            blob = None
            for _attempt in range(policy.retries):
                try:
                    blob = _fetch(seg_url, policy.timeout_s)
                    break
                except (urllib.error.URLError, OSError, StreamError):
                    retries += 1
            if blob is None:
                if l == 1:
                    log.error = f"group {gi}: base layer unreachable after retries"
                    return log
                layer = 1  # degrade: keep only the base layer already fetched
                fetched = fetched[:1]
                nbytes = len(fetched[0])
                failed = True
                break
            fetched.append(blob)
            nbytes += len(blob)
        fetch_s = time.perf_counter() - t0
        log.estimate = update_bandwidth(log.estimate, nbytes, max(fetch_s, 1e-9))

        t1 = time.perf_counter()
        if policy.decode:
            try:
                for l, blob in enumerate(fetched, start=1):
                    _decode_segment(blob, manifest, gi, l)
            except Exception as e:  # surface in the log; a client never panics
                log.error = f"group {gi} decode failed: {e}"
                return log
        decode_ms = (time.perf_counter() - t1) * 1000.0
        log.groups.append(GroupPlayback(group=gi, layer=layer, bytes=nbytes,
                                        fetch_ms=fetch_s * 1000.0,
                                        decode_ms=decode_ms, retries=retries))
        if failed and log.error is None:
            log.error = f"group {gi}: degraded to layer 1 after retries"
    log.completed = log.error is None
    return log
