"""Plane-sequence compression: raw passthrough, a lossless predictive range
coder, and a reserved slot for external video codecs.

Payload layout (little-endian): codec_id u8, bits u8, W u16, H u16, count u16,
reserved u16, length u32, body, checksum u32. The checksum is the CRC-32 of
the decoded samples' little-endian bytes, so corruption and truncation are
always detected.

The reference coder (codec 1) predicts each sample from the previous plane's
co-located sample (temporal), falling back to the left/above neighbor on the
first plane, wraps residuals modulo 2^bits, zigzag-maps them and codes each
residual byte through an adaptive bit-tree. Its body starts with a run flag:
1 means the whole run is stored verbatim (worst-case size guarantee), 0 means
per-plane mode: one mode byte per plane (0 = range-coded with its length
prefixed as u32, 1 = verbatim), with the adaptive models persisting across
the run's coded planes. Incompressible planes therefore fall back to raw
individually without giving up compression on their neighbors.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Sequence

import numpy as np

from . import _rc
from .errors import CodecError, InvalidInputError
from .quantize import Plane

PAYLOAD_HEADER = struct.Struct("<BBHHHHI")
CHECKSUM = struct.Struct("<I")

_BODY_RC = 0
_BODY_RAW = 1

_LE_DTYPES = {8: np.dtype("<u1"), 16: np.dtype("<u2"), 32: np.dtype("<u4")}


class CodecId(IntEnum):
    RAW = 0
    REFERENCE = 1
    EXTERNAL_AVC = 2


# Optional plugins for CodecId.EXTERNAL_AVC: (encode(samples3d, bits) -> bytes,
# decode(body, bits, count, h, w) -> samples3d).
EXTERNAL_CODECS: dict[int, tuple[Callable, Callable]] = {}


def register_external_codec(codec_id: int, encode_fn: Callable, decode_fn: Callable) -> None:
    EXTERNAL_CODECS[int(codec_id)] = (encode_fn, decode_fn)


@dataclass(frozen=True)
class CodedPayload:
    codec_id: int
    bits: int
    width: int
    height: int
    count: int
    body: bytes
    checksum: int

    def to_bytes(self) -> bytes:
        return (
            PAYLOAD_HEADER.pack(self.codec_id, self.bits, self.width, self.height,
                                self.count, 0, len(self.body))
            + self.body
            + CHECKSUM.pack(self.checksum)
        )

    @property
    def total_size(self) -> int:
        return PAYLOAD_HEADER.size + len(self.body) + CHECKSUM.size

    @classmethod
    def from_bytes(cls, data: bytes, offset: int = 0) -> tuple["CodedPayload", int]:
        """Parse one payload; returns (payload, end offset)."""
        if len(data) - offset < PAYLOAD_HEADER.size:
            raise CodecError("payload header truncated")
        codec_id, bits, w, h, count, _, length = PAYLOAD_HEADER.unpack_from(data, offset)
        body_start = offset + PAYLOAD_HEADER.size
        end = body_start + length + CHECKSUM.size
        if len(data) < end:
            raise CodecError("payload body truncated")
        body = bytes(data[body_start:body_start + length])
        (checksum,) = CHECKSUM.unpack_from(data, body_start + length)
        return cls(codec_id, bits, w, h, count, body, checksum), end


def parse_payload_stream(data: bytes) -> list[CodedPayload]:
    """Parse back-to-back payloads until the buffer is exhausted."""
    out = []
    offset = 0
    while offset < len(data):
        payload, offset = CodedPayload.from_bytes(data, offset)
        out.append(payload)
    return out


def _stack_run(seq: Sequence[Plane]) -> tuple[np.ndarray, int]:
    if not seq:
        raise InvalidInputError("empty plane run")
    h, w, bits = seq[0].height, seq[0].width, seq[0].bits
    for p in seq:
        if (p.height, p.width, p.bits) != (h, w, bits):
            raise InvalidInputError("mixed geometry within a plane run")
    if max(w, h, len(seq)) > 0xFFFF:
        raise InvalidInputError("plane run exceeds u16 geometry limits")
    return np.stack([p.samples for p in seq]), bits


def _sample_bytes(samples3d: np.ndarray, bits: int) -> bytes:
    return np.ascontiguousarray(samples3d, dtype=_LE_DTYPES[bits]).tobytes()


def _residual_nbytes(bits: int) -> int:
    # residuals are wrapped modulo 2^bits, so zigzag spans [0, 2^bits - 1]
    return bits // 8


def _residual_bytes(plane64: np.ndarray, prev64: np.ndarray, has_prev: bool,
                    bits: int) -> np.ndarray:
    residuals = _rc.plane_residuals(plane64, prev64, has_prev, bits)
    z = _rc.zigzag(residuals)
    nbytes = _residual_nbytes(bits)
    data = np.empty((z.size, nbytes), dtype=np.uint8)
    for b in range(nbytes):
        data[:, b] = (z >> (8 * b)) & 0xFF
    return data


def _encode_reference_body(samples3d: np.ndarray, bits: int, raw: bytes) -> bytes:
    count, h, w = samples3d.shape
    planes64 = samples3d.astype(np.int64)
    item = bits // 8
    probs = _rc.new_bittree_probs(_residual_nbytes(bits))
    modes = bytearray()
    blocks: list[bytes] = []
    for f in range(count):
        prev = planes64[f - 1] if f > 0 else planes64[0]
        data = _residual_bytes(planes64[f], prev, f > 0, bits)
        snapshot = probs.copy()
        out = np.empty(_rc.bittree_worst_case(data.size), dtype=np.uint8)
        n = _rc.encode_bittree(data, probs, out)
        while n > 0 and out[n - 1] == 0:
            n -= 1  # decoders zero-fill past the end, so trailing zeros drop
        raw_plane = raw[f * h * w * item:(f + 1) * h * w * item]
        if n < 0 or n + 4 >= len(raw_plane):
            probs = snapshot  # raw planes leave the models untouched
            modes.append(_BODY_RAW)
            blocks.append(raw_plane)
        else:
            modes.append(_BODY_RC)
            blocks.append(struct.pack("<I", n) + out[:n].tobytes())
    body = bytes([0]) + bytes(modes) + b"".join(blocks)
    if len(body) > len(raw) + 1:
        return bytes([1]) + raw
    return body


def encode_planes(seq: Sequence[Plane], codec: CodecId = CodecId.REFERENCE) -> CodedPayload:
    """Compress one temporal plane run into a payload."""
    samples3d, bits = _stack_run(seq)
    raw = _sample_bytes(samples3d, bits)
    checksum = zlib.crc32(raw) & 0xFFFFFFFF
    count, h, w = samples3d.shape
    if codec == CodecId.RAW:
        body = raw
    elif codec == CodecId.REFERENCE:
        body = _encode_reference_body(samples3d, bits, raw)
    elif int(codec) in EXTERNAL_CODECS:
        body = EXTERNAL_CODECS[int(codec)][0](samples3d, bits)
    else:
        raise CodecError(f"unknown or unavailable codec {int(codec)}")
    return CodedPayload(int(codec), bits, w, h, count, body, checksum)


def _decode_reference_body(coded: bytes, bits: int, count: int, h: int,
                           w: int) -> np.ndarray:
    if len(coded) < count:
        raise CodecError("per-plane mode table truncated")
    modes = coded[:count]
    pos = count
    item = bits // 8
    nbytes = _residual_nbytes(bits)
    probs = _rc.new_bittree_probs(nbytes)
    planes64 = np.empty((count, h, w), dtype=np.int64)
    for f in range(count):
        prev = planes64[f - 1] if f > 0 else planes64[0]
        if modes[f] == _BODY_RAW:
            end = pos + h * w * item
            if end > len(coded):
                raise CodecError("raw plane block truncated")
            planes64[f] = np.frombuffer(coded[pos:end],
                                        dtype=_LE_DTYPES[bits]).reshape(h, w)
            pos = end
        elif modes[f] == _BODY_RC:
            if pos + 4 > len(coded):
                raise CodecError("coded plane length truncated")
            (length,) = struct.unpack_from("<I", coded, pos)
            pos += 4
            end = pos + length
            if end > len(coded):
                raise CodecError("coded plane block truncated")
            data = np.empty((h * w, nbytes), dtype=np.uint8)
            buf = np.frombuffer(coded[pos:end], dtype=np.uint8)
            _rc.decode_bittree(buf, probs, data)
            pos = end
            z = np.zeros(h * w, dtype=np.int64)
            for b in range(nbytes):
                z |= data[:, b].astype(np.int64) << (8 * b)
            residuals = _rc.unzigzag(z)
            planes64[f] = _rc.plane_from_residuals(residuals, prev, f > 0, h, w, bits)
        else:
            raise CodecError(f"unknown plane mode {modes[f]}")
    if pos != len(coded):
        raise CodecError("trailing bytes after the last plane block")
    return planes64.astype(_LE_DTYPES[bits])


def decode_planes(payload: CodedPayload) -> list[Plane]:
    """Exact inverse of encode_planes; raises CodecError on any corruption.

    Returned planes have valid_count = width*height; the true valid counts
    live in the container directory.
    """
    bits = payload.bits
    if bits not in _LE_DTYPES:
        raise CodecError(f"bad bit width {bits}")
    count, h, w = payload.count, payload.height, payload.width
    expect_raw = count * h * w * (bits // 8)
    if payload.codec_id == CodecId.RAW:
        raw = payload.body
        if len(raw) != expect_raw:
            raise CodecError("raw body length mismatch")
        samples3d = np.frombuffer(raw, dtype=_LE_DTYPES[bits]).reshape(count, h, w)
    elif payload.codec_id == CodecId.REFERENCE:
        if not payload.body:
            raise CodecError("empty reference-coder body")
        flag, coded = payload.body[0], payload.body[1:]
        if flag == 1:  # whole-run raw fallback
            if len(coded) != expect_raw:
                raise CodecError("raw fallback length mismatch")
            samples3d = np.frombuffer(coded, dtype=_LE_DTYPES[bits]).reshape(count, h, w)
        elif flag == 0:
            samples3d = _decode_reference_body(coded, bits, count, h, w)
        else:
            raise CodecError(f"unknown body flag {flag}")
    elif payload.codec_id in EXTERNAL_CODECS:
        samples3d = EXTERNAL_CODECS[payload.codec_id][1](payload.body, bits, count, h, w)
    elif payload.codec_id == CodecId.EXTERNAL_AVC:
        raise CodecError("external codec payload: no plugin registered")
    else:
        raise CodecError(f"unknown codec id {payload.codec_id}")
    actual = zlib.crc32(_sample_bytes(samples3d, bits)) & 0xFFFFFFFF
    if actual != payload.checksum:
        raise CodecError("checksum mismatch (corrupt or truncated payload)")
    return [Plane(samples=samples3d[i].copy(), valid_count=h * w) for i in range(count)]


def _freq_table(pmf) -> np.ndarray:
    """Cumulative frequency table (uint32, len K+1) from a PMF table object."""
    probs = np.asarray(pmf.probs, dtype=np.float64)
    if probs.size == 0:
        raise InvalidInputError("empty PMF")
    freqs = np.maximum(1, np.floor(probs * (1 << _rc.STATIC_SCALE_BITS) + 0.5))
    cum = np.zeros(freqs.size + 1, dtype=np.int64)
    np.cumsum(freqs, out=cum[1:])
    return cum


def encode_symbols_with_pmf(symbols, pmf) -> bytes:
    """Range-code integer symbols against a frozen PMF table.

    `pmf` needs `support_min` and `probs` attributes (see rate.PmfTable).
    Every symbol must lie inside the table support.
    """
    syms = np.asarray(symbols)
    idx = np.round(syms).astype(np.int64) - int(pmf.support_min)
    cum = _freq_table(pmf)
    if idx.size and (idx.min() < 0 or idx.max() >= cum.size - 1):
        raise InvalidInputError("symbol outside the PMF support")
    out = np.empty(_rc.static_worst_case(idx.size), dtype=np.uint8)
    n = _rc.encode_static(idx, cum, out)
    if n < 0:
        raise CodecError("static coder output overflow")
    return out[:n].tobytes()


def decode_symbols_with_pmf(data: bytes, pmf, count: int) -> np.ndarray:
    """Inverse of encode_symbols_with_pmf; returns integer symbols."""
    cum = _freq_table(pmf)
    out = np.empty(count, dtype=np.int64)
    buf = np.frombuffer(data, dtype=np.uint8)
    _rc.decode_static(buf, cum, out)
    return out + int(pmf.support_min)
