"""Binary splat-point file ingestion and export.

Layout (little-endian): a 16-byte magic field beginning "GSPLATPT\\0\\0\\0\\0",
u32 version, u32 record count, u8 SH degree, u8 flags, then one record per
Gaussian of 32-bit floats in field order position(3), rotation(4), scales(3),
opacity(1), sh(3*(deg+1)^2). Flag bit0 marks log-stored scales, bit1 marks
pre-activation (logit) opacities; both are undone on load.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidInputError
from .gaussians import GaussianSet, sh_coeff_count

MAGIC = b"GSPLATPT\x00\x00\x00\x00"  # first 12 bytes of the 16-byte field
MAGIC_FIELD_LEN = 16
VERSION = 1
FLAG_LOG_SCALES = 0x01
FLAG_PREACT_OPACITY = 0x02
_KNOWN_FLAGS = FLAG_LOG_SCALES | FLAG_PREACT_OPACITY
_HEADER = struct.Struct("<II BB")


def record_float_count(sh_degree: int) -> int:
    return 3 + 4 + 3 + 1 + sh_coeff_count(sh_degree)


def load_splat_points(path) -> GaussianSet:
    """Read a splat-point file into a GaussianSet, undoing storage transforms."""
    data = Path(path).read_bytes()
    if len(data) < MAGIC_FIELD_LEN + _HEADER.size:
        raise FormatError("file too short for splat header")
    if data[:len(MAGIC)] != MAGIC or any(data[len(MAGIC):MAGIC_FIELD_LEN]):
        raise FormatError("bad magic")
    version, count, sh_degree, flags = _HEADER.unpack_from(data, MAGIC_FIELD_LEN)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if flags & ~_KNOWN_FLAGS:
        raise FormatError(f"unknown flag bits 0x{flags & ~_KNOWN_FLAGS:02x}")
    if count == 0:
        raise FormatError("empty set")
    try:
        ncols = record_float_count(sh_degree)
    except InvalidInputError as e:
        raise FormatError(str(e)) from e
    body = data[MAGIC_FIELD_LEN + _HEADER.size:]
    need = count * ncols * 4
    if len(body) < need:
        raise FormatError(f"truncated records: have {len(body)} bytes, need {need}")
    if len(body) > need:
        raise FormatError(f"trailing bytes after {count} records")
    table = np.frombuffer(body, dtype="<f4").reshape(count, ncols).astype(np.float64)
    scales = table[:, 7:10]
    if flags & FLAG_LOG_SCALES:
        scales = np.exp(scales)
    opacities = table[:, 10]
    if flags & FLAG_PREACT_OPACITY:
        opacities = 1.0 / (1.0 + np.exp(-opacities))
    return GaussianSet(
        positions=table[:, 0:3],
        rotations=table[:, 3:7],
        scales=scales,
        opacities=opacities,
        sh=table[:, 11:],
        sh_degree=sh_degree,
    )


def save_splat_points(gset: GaussianSet, path, *, log_scales: bool = False,
                      preact_opacity: bool = False) -> None:
    """Write a GaussianSet as a splat-point file (atomically).

    With both flags off the fields are stored verbatim as 32-bit floats, so a
    save/load round trip reproduces them to within one float32 ULP.
    """
    if len(gset) == 0:
        raise InvalidInputError("empty set")
    scales = np.log(gset.scales) if log_scales else gset.scales
    if preact_opacity:
        op = np.clip(gset.opacities, 1e-7, 1.0 - 1e-7)
        opacities = np.log(op / (1.0 - op))
    else:
        opacities = gset.opacities
    flags = (FLAG_LOG_SCALES if log_scales else 0) | (FLAG_PREACT_OPACITY if preact_opacity else 0)
    table = np.hstack([
        gset.positions,
        gset.rotations,
        scales,
        opacities[:, None],
        gset.sh,
    ]).astype("<f4")
    blob = (
        MAGIC + b"\x00" * (MAGIC_FIELD_LEN - len(MAGIC))
        + _HEADER.pack(VERSION, len(gset), gset.sh_degree, flags)
        + table.tobytes()
    )
    _atomic_write(path, blob)


def _atomic_write(path, blob: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
