"""Fixed-width quantization of attribute channels and 2D plane packing.

Each scalar attribute component becomes one channel. A channel is quantized
against its own [min, max] range (stored as float32 alongside the codes) and
flattened into a near-square row-major plane, padded by repeating the last
sample. Planes from the same group, layer and channel form one temporal
sequence for the plane codec.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError

VALID_BITS = (8, 16, 32)
_DTYPES = {8: np.uint8, 16: np.uint16, 32: np.uint32}

# Attribute families carried by the container, in their serialized codes.
ATTRIBUTE_CODES = {
    "position": 0,
    "rotation": 1,
    "scales": 2,
    "opacity": 3,
    "sh": 4,
}
ATTRIBUTE_NAMES = {v: k for k, v in ATTRIBUTE_CODES.items()}


@dataclass(frozen=True, order=True)
class ChannelId:
    """One scalar channel: an attribute family plus a component index."""

    attribute: str
    component: int

    def __str__(self) -> str:
        return f"{self.attribute}[{self.component}]"


@dataclass(frozen=True)
class QuantizedChannel:
    codes: np.ndarray       # unsigned integers, dtype matching `bits`
    bits: int
    range_min: float        # float32-exact
    range_max: float
    channel_id: ChannelId

    def __post_init__(self):
        if self.bits not in VALID_BITS:
            raise InvalidInputError(f"bits must be one of {VALID_BITS}")
        codes = np.ascontiguousarray(self.codes, dtype=_DTYPES[self.bits])
        codes.flags.writeable = False
        object.__setattr__(self, "codes", codes)
        if not self.range_max >= self.range_min:
            raise InvalidInputError("range_max must be >= range_min")


def _widened_f32_range(values: np.ndarray) -> tuple[np.float32, np.float32]:
    """Float32 range covering every value; degenerate ranges are opened up."""
    vmin = float(values.min())
    vmax = float(values.max())
    if vmax == vmin:
        vmax = vmin + 1e-6
    rmin = np.float32(vmin)
    if float(rmin) > vmin:
        rmin = np.nextafter(rmin, np.float32(-np.inf), dtype=np.float32)
    rmax = np.float32(vmax)
    if float(rmax) < vmax:
        rmax = np.nextafter(rmax, np.float32(np.inf), dtype=np.float32)
    while float(rmax) <= float(rmin):
        rmax = np.nextafter(rmax, np.float32(np.inf), dtype=np.float32)
    return rmin, rmax


def quantize_channel(values, bits: int,
                     channel_id: ChannelId = ChannelId("value", 0)) -> QuantizedChannel:
    """Map reals onto [0, 2^bits - 1] codes over the values' own range.

    Rounding is half away from zero. The stored range is float32 (widened
    outward so it still covers every input), and a degenerate range is opened
    by 1e-6 so constant channels quantize to code zero.
    """
    if bits not in VALID_BITS:
        raise InvalidInputError(f"bits must be one of {VALID_BITS}")
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        raise InvalidInputError("empty channel")
    if not np.all(np.isfinite(vals)):
        raise InvalidInputError("non-finite channel values")
    rmin, rmax = _widened_f32_range(vals)
    lo, hi = float(rmin), float(rmax)
    top = float(2 ** bits - 1)
    scaled = (vals - lo) / (hi - lo) * top
    codes = np.floor(scaled + 0.5)  # scaled >= 0, so this is half-away-from-zero
    codes = np.clip(codes, 0, top)
    return QuantizedChannel(
        codes=codes.astype(_DTYPES[bits]),
        bits=bits,
        range_min=float(rmin),
        range_max=float(rmax),
        channel_id=channel_id,
    )


def dequantize_channel(ch: QuantizedChannel) -> np.ndarray:
    """Inverse map; codes 0 and 2^bits - 1 hit the range ends exactly."""
    return dequantize_codes(ch.codes, ch.bits, ch.range_min, ch.range_max)


def dequantize_codes(codes: np.ndarray, bits: int, range_min: float,
                     range_max: float) -> np.ndarray:
    top = float(2 ** bits - 1)
    return range_min + codes.astype(np.float64) / top * (range_max - range_min)


@dataclass(frozen=True)
class Plane:
    """A channel's codes packed row-major into a near-square 2D grid."""

    samples: np.ndarray  # (height, width) unsigned integers
    valid_count: int

    def __post_init__(self):
        s = np.ascontiguousarray(self.samples)
        if s.ndim != 2:
            raise InvalidInputError("plane samples must be 2D")
        if s.dtype not in (np.uint8, np.uint16, np.uint32):
            raise InvalidInputError("plane samples must be uint8/16/32")
        if not 0 < self.valid_count <= s.size:
            raise InvalidInputError("valid_count out of range")
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def bits(self) -> int:
        return self.samples.dtype.itemsize * 8


def plane_geometry(valid_count: int) -> tuple[int, int]:
    """(width, height) for a count: width = ceil(sqrt(n)), height = ceil(n/w)."""
    if valid_count < 1:
        raise InvalidInputError("valid_count must be >= 1")
    w = int(np.ceil(np.sqrt(valid_count)))
    h = int(np.ceil(valid_count / w))
    return w, h


def flatten_to_plane(ch: QuantizedChannel) -> Plane:
    """Row-major fill; the tail of the grid repeats the last valid code."""
    codes = ch.codes.ravel()
    n = codes.size
    w, h = plane_geometry(n)
    grid = np.full(w * h, codes[-1], dtype=codes.dtype)
    grid[:n] = codes
    return Plane(samples=grid.reshape(h, w), valid_count=n)


def unflatten(plane: Plane, valid_count: int | None = None) -> np.ndarray:
    """First valid_count samples in row-major order (the original codes)."""
    n = plane.valid_count if valid_count is None else valid_count
    if not 0 < n <= plane.samples.size:
        raise InvalidInputError("valid_count out of range")
    return plane.samples.ravel()[:n].copy()


@dataclass(frozen=True)
class KeyedPlane:
    """A plane tagged with its position in the stream layout."""

    group: int
    frame: int
    layer: int
    channel: ChannelId
    plane: Plane

    @property
    def sort_key(self):
        return (self.group, self.layer, self.channel, self.frame)


@dataclass(frozen=True)
class PlaneSequence:
    """All planes of an encode, in (group, layer, channel, frame) order."""

    planes: tuple[KeyedPlane, ...]

    def runs(self) -> list[tuple[tuple[int, int, ChannelId], list[KeyedPlane]]]:
        """Consecutive planes of one (group, layer, channel) temporal run."""
        out: list[tuple[tuple[int, int, ChannelId], list[KeyedPlane]]] = []
        for kp in self.planes:
            key = (kp.group, kp.layer, kp.channel)
            if out and out[-1][0] == key:
                out[-1][1].append(kp)
            else:
                out.append((key, [kp]))
        return out


def arrange_sequences(planes: Iterable[KeyedPlane]) -> PlaneSequence:
    """Impose the stream total order and check run geometry consistency.

    The order is (group asc, layer asc, channel asc, frame asc), so each
    (group, layer, channel) run is a temporal sequence ready for the plane
    codec. Input arrival order is irrelevant.
    """
    items = sorted(planes, key=lambda kp: kp.sort_key)
    if not items:
        raise InvalidInputError("no planes to arrange")
    seen = set()
    for kp in items:
        key = (kp.group, kp.frame, kp.layer, kp.channel)
        if key in seen:
            raise InvalidInputError(f"duplicate plane for {key}")
        seen.add(key)
    seq = PlaneSequence(planes=tuple(items))
    for (group, layer, channel), run in seq.runs():
        shapes = {(kp.plane.height, kp.plane.width, kp.plane.valid_count,
                   kp.plane.bits) for kp in run}
        if len(shapes) != 1:
            raise InvalidInputError(
                f"inconsistent plane geometry within group {group} layer {layer} "
                f"channel {channel}")
    return seq
