"""The progressive ".gsv" container and its streaming manifest.

File layout (little-endian): a fixed header, a directory describing every
group, then all payloads. Payloads are ordered (group asc, layer asc, channel
asc), so the bytes needed to decode layers 1..l of a group form one contiguous
prefix of that group's payload region: byte-range clients and the layer-prefix
reader never touch bytes belonging to higher layers.

Header: magic "GSV1", version u16, layer count u8, SH degree u8, group count
u16, frame-rate numerator/denominator u16/u16, scene bounds 6*f32, flags u32.
Directory per group: start frame u32, frame count u16, position bit width u8,
reserved u8, Gaussian counts per layer L*u32, then per layer a channel count
u16 followed by channel entries (attribute u8, component u16, bits u8, offset
u64, size u64, quantization range 2*f32).
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Sequence

import numpy as np

from .codec import CodecError, CodedPayload, decode_planes
from .errors import FormatError, InvalidInputError
from .gaussians import GaussianSet, sh_coeff_count
from .quantize import (ATTRIBUTE_CODES, ATTRIBUTE_NAMES, ChannelId,
                       dequantize_codes, unflatten)
from .splatio import _atomic_write

MAGIC = b"GSV1"
VERSION = 1
_HEADER = struct.Struct("<4sHBBHHH6fI")
_GROUP_FIXED = struct.Struct("<IHBB")
_CHANNEL_ENTRY = struct.Struct("<BHBQQff")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")


@dataclass(frozen=True)
class ChannelEntry:
    channel: ChannelId
    bits: int
    offset: int
    size: int
    range_min: float
    range_max: float


@dataclass(frozen=True)
class GroupDirectory:
    start_frame: int
    frame_count: int
    position_bits: int
    layer_counts: tuple[int, ...]
    channels: tuple[tuple[ChannelEntry, ...], ...]  # indexed by layer

    def layer_bytes(self, layer: int) -> int:
        return sum(e.size for e in self.channels[layer])

    def segment_range(self, layer: int) -> tuple[int, int]:
        """(offset, size) of one layer's contiguous payload slice."""
        entries = self.channels[layer]
        start = entries[0].offset
        end = entries[-1].offset + entries[-1].size
        return start, end - start


@dataclass(frozen=True)
class ContainerInfo:
    version: int
    layer_count: int
    sh_degree: int
    fps: tuple[int, int]
    bounds: tuple[float, ...]
    flags: int
    groups: tuple[GroupDirectory, ...]


@dataclass(frozen=True)
class EncodedGroupData:
    """Writer-side description of one group's coded payloads."""

    start_frame: int
    frame_count: int
    position_bits: int
    layer_counts: Sequence[int]
    # layers[l] = [(channel, bits, range_min, range_max, payload_bytes), ...]
    layers: Sequence[Sequence[tuple[ChannelId, int, float, float, bytes]]]


def _read_exact(f: BinaryIO, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise FormatError(f"unexpected end of container (wanted {n} bytes)")
    return data


def write_container(groups: Sequence[EncodedGroupData], path, *, sh_degree: int,
                    layer_count: int, fps: tuple[int, int] = (30, 1),
                    bounds: Sequence[float] = (0.0,) * 6, flags: int = 0) -> None:
    """Serialize encoded groups; identical inputs produce identical bytes."""
    if not groups:
        raise InvalidInputError("empty group list")
    for g in groups:
        if len(g.layer_counts) != layer_count or len(g.layers) != layer_count:
            raise InvalidInputError("group layer tables must match the layer count")
        if g.frame_count < 1:
            raise InvalidInputError("group must contain at least one frame")
        for entries in g.layers:
            if not entries:
                raise InvalidInputError("every layer needs at least one channel")

    dir_size = 0
    for g in groups:
        dir_size += _GROUP_FIXED.size + 4 * layer_count
        for entries in g.layers:
            dir_size += _U16.size + _CHANNEL_ENTRY.size * len(entries)

    payload_base = _HEADER.size + dir_size
    out = io.BytesIO()
    out.write(_HEADER.pack(MAGIC, VERSION, layer_count, sh_degree, len(groups),
                           fps[0], fps[1], *[float(b) for b in bounds], flags))

    offset = payload_base
    payload_chunks: list[bytes] = []
    for g in groups:
        out.write(_GROUP_FIXED.pack(g.start_frame, g.frame_count, g.position_bits, 0))
        out.write(struct.pack(f"<{layer_count}I", *[int(c) for c in g.layer_counts]))
        for entries in g.layers:
            out.write(_U16.pack(len(entries)))
            for channel, bits, rmin, rmax, payload in entries:
                attr = ATTRIBUTE_CODES.get(channel.attribute)
                if attr is None:
                    raise InvalidInputError(f"unknown attribute {channel.attribute!r}")
                out.write(_CHANNEL_ENTRY.pack(attr, channel.component, bits,
                                              offset, len(payload), rmin, rmax))
                payload_chunks.append(payload)
                offset += len(payload)
    if out.tell() != payload_base:
        raise InvalidInputError("directory accounting mismatch")
    for chunk in payload_chunks:
        out.write(chunk)
    _atomic_write(path, out.getvalue())


def read_structure(f: BinaryIO) -> ContainerInfo:
    """Parse header and directory, touching no payload bytes."""
    raw = _read_exact(f, _HEADER.size)
    fields = _HEADER.unpack(raw)
    magic, version, layer_count, sh_degree, group_count = fields[:5]
    fps = (fields[5], fields[6])
    bounds = fields[7:13]
    flags = fields[13]
    if magic != MAGIC:
        raise FormatError("not a gsv container (bad magic)")
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    if layer_count < 1:
        raise FormatError("layer count must be >= 1")
    groups = []
    last_offset = 0
    for _ in range(group_count):
        start_frame, frame_count, position_bits, _ = _GROUP_FIXED.unpack(
            _read_exact(f, _GROUP_FIXED.size))
        layer_counts = struct.unpack(
            f"<{layer_count}I", _read_exact(f, 4 * layer_count))
        layers = []
        for _layer in range(layer_count):
            (nch,) = _U16.unpack(_read_exact(f, _U16.size))
            entries = []
            for _c in range(nch):
                attr, comp, bits, offset, size, rmin, rmax = _CHANNEL_ENTRY.unpack(
                    _read_exact(f, _CHANNEL_ENTRY.size))
                if attr not in ATTRIBUTE_NAMES:
                    raise FormatError(f"unknown attribute code {attr}")
                if offset < last_offset:
                    raise FormatError("payload offsets are not increasing")
                last_offset = offset + size
                entries.append(ChannelEntry(ChannelId(ATTRIBUTE_NAMES[attr], comp),
                                            bits, offset, size, rmin, rmax))
            layers.append(tuple(entries))
        groups.append(GroupDirectory(start_frame, frame_count, position_bits,
                                     tuple(layer_counts), tuple(layers)))
    return ContainerInfo(version=version, layer_count=layer_count,
                         sh_degree=sh_degree, fps=fps, bounds=bounds,
                         flags=flags, groups=tuple(groups))


def read_container_info(path) -> ContainerInfo:
    with open(path, "rb") as f:
        return read_structure(f)


@dataclass(frozen=True)
class DecodedGroup:
    start_frame: int
    frame_count: int
    layer_counts: tuple[int, ...]   # counts of the decoded layers only
    frames: tuple[GaussianSet, ...]


@dataclass(frozen=True)
class DecodedVideo:
    layer_count: int        # layers present in the container
    decoded_layers: int     # layer prefix actually decoded
    sh_degree: int
    fps: tuple[int, int]
    groups: tuple[DecodedGroup, ...]

    @property
    def frame_count(self) -> int:
        return sum(g.frame_count for g in self.groups)

    def frame(self, t: int) -> GaussianSet:
        for g in self.groups:
            if g.start_frame <= t < g.start_frame + g.frame_count:
                return g.frames[t - g.start_frame]
        raise InvalidInputError(f"frame {t} out of range 0..{self.frame_count - 1}")


_ATTR_WIDTH = {"position": 3, "rotation": 4, "scales": 3, "opacity": 1}


def _assemble_frames(info: ContainerInfo, group: GroupDirectory,
                     layer_values: list[dict[ChannelId, np.ndarray]],
                     up_to: int) -> tuple[GaussianSet, ...]:
    """Stack per-layer per-channel value arrays into one set per frame."""
    shdim = sh_coeff_count(info.sh_degree)
    widths = dict(_ATTR_WIDTH, sh=shdim)
    frames = []
    for t in range(group.frame_count):
        parts = {attr: [] for attr in widths}
        for layer in range(up_to):
            n = group.layer_counts[layer]
            values = layer_values[layer]
            for attr, width in widths.items():
                block = np.empty((n, width))
                for comp in range(width):
                    column = values.get(ChannelId(attr, comp))
                    if column is None:
                        raise FormatError(f"missing channel {attr}[{comp}]")
                    block[:, comp] = column[t]
                parts[attr].append(block)
        frames.append(GaussianSet(
            positions=np.concatenate(parts["position"]),
            rotations=np.concatenate(parts["rotation"]),
            scales=np.concatenate(parts["scales"]),
            opacities=np.concatenate(parts["opacity"])[:, 0],
            sh=np.concatenate(parts["sh"]),
            sh_degree=info.sh_degree,
        ))
    return tuple(frames)


def read_layers(source, up_to_layer: int) -> DecodedVideo:
    """Decode layers 1..up_to_layer of every group.

    `source` is a path or a seekable binary file object. Only header,
    directory and the payload byte ranges of the requested layers are read;
    bytes of higher layers are never touched.
    """
    if isinstance(source, (str, Path)):
        with open(source, "rb") as f:
            return read_layers(f, up_to_layer)
    f = source
    info = read_structure(f)
    if not 1 <= up_to_layer <= info.layer_count:
        raise InvalidInputError(
            f"layer {up_to_layer} out of range 1..{info.layer_count}")
    groups = []
    for gi, group in enumerate(info.groups):
        layer_values: list[dict[ChannelId, np.ndarray]] = []
        for layer in range(up_to_layer):
            values: dict[ChannelId, np.ndarray] = {}
            n = group.layer_counts[layer]
            for entry in group.channels[layer]:
                f.seek(entry.offset)
                blob = _read_exact(f, entry.size)
                try:
                    payload, end = CodedPayload.from_bytes(blob)
                    if end != len(blob):
                        raise CodecError("payload size disagrees with directory")
                    planes = decode_planes(payload)
                except CodecError as e:
                    raise CodecError(
                        f"group {gi} layer {layer + 1} channel {entry.channel}: {e}"
                    ) from e
                if len(planes) != group.frame_count:
                    raise FormatError(
                        f"group {gi} layer {layer + 1} channel {entry.channel}: "
                        f"expected {group.frame_count} planes, got {len(planes)}")
                codes = np.stack([unflatten(p, n) for p in planes])
                values[entry.channel] = dequantize_codes(
                    codes, entry.bits, entry.range_min, entry.range_max)
            layer_values.append(values)
        frames = _assemble_frames(info, group, layer_values, up_to_layer)
        groups.append(DecodedGroup(
            start_frame=group.start_frame,
            frame_count=group.frame_count,
            layer_counts=group.layer_counts[:up_to_layer],
            frames=frames,
        ))
    return DecodedVideo(layer_count=info.layer_count, decoded_layers=up_to_layer,
                        sh_degree=info.sh_degree, fps=info.fps,
                        groups=tuple(groups))


@dataclass(frozen=True)
class ManifestChannel:
    attribute: str
    component: int
    bits: int
    range_min: float
    range_max: float


@dataclass(frozen=True)
class ManifestGroup:
    start: int
    frames: int
    gauss_counts: tuple[int, ...]
    position_bits: int
    layer_bytes: tuple[int, ...]
    cum_bytes: tuple[int, ...]
    channels: tuple[tuple[ManifestChannel, ...], ...]


@dataclass(frozen=True)
class Manifest:
    """Sizes and dequantization metadata a streaming client needs."""

    version: int
    layers: int
    fps: tuple[int, int]
    sh_degree: int
    url: str
    groups: tuple[ManifestGroup, ...]

    def __post_init__(self):
        for g in self.groups:
            if any(b2 < b1 for b1, b2 in zip(g.cum_bytes, g.cum_bytes[1:])):
                raise InvalidInputError("cumulative layer sizes must be non-decreasing")

    @property
    def frame_count(self) -> int:
        return sum(g.frames for g in self.groups)

    def cum_bytes_per_frame(self, layer: int, group: int | None = None) -> float:
        """Average bytes per frame when fetching layers 1..layer."""
        if not 1 <= layer <= self.layers:
            raise InvalidInputError(f"layer {layer} out of range 1..{self.layers}")
        if group is None:
            total = sum(g.cum_bytes[layer - 1] for g in self.groups)
            return total / self.frame_count
        g = self.groups[group]
        return g.cum_bytes[layer - 1] / g.frames

    def to_json_dict(self) -> dict:
        return {
            "version": self.version,
            "layers": self.layers,
            "fps": list(self.fps),
            "sh_degree": self.sh_degree,
            "url": self.url,
            "groups": [
                {
                    "start": g.start,
                    "frames": g.frames,
                    "gauss_counts": list(g.gauss_counts),
                    "position_bits": g.position_bits,
                    "layer_bytes": list(g.layer_bytes),
                    "cum_bytes": list(g.cum_bytes),
                    "channels": [
                        [
                            {"attr": c.attribute, "comp": c.component,
                             "bits": c.bits, "min": c.range_min, "max": c.range_max}
                            for c in layer
                        ]
                        for layer in g.channels
                    ],
                }
                for g in self.groups
            ],
        }

    def to_json_bytes(self) -> bytes:
        return json.dumps(self.to_json_dict(), separators=(",", ":")).encode()

    @classmethod
    def from_json_dict(cls, d: dict) -> "Manifest":
        groups = tuple(
            ManifestGroup(
                start=int(g["start"]),
                frames=int(g["frames"]),
                gauss_counts=tuple(int(x) for x in g["gauss_counts"]),
                position_bits=int(g["position_bits"]),
                layer_bytes=tuple(int(x) for x in g["layer_bytes"]),
                cum_bytes=tuple(int(x) for x in g["cum_bytes"]),
                channels=tuple(
                    tuple(ManifestChannel(c["attr"], int(c["comp"]), int(c["bits"]),
                                          float(c["min"]), float(c["max"]))
                          for c in layer)
                    for layer in g["channels"]
                ),
            )
            for g in d["groups"]
        )
        return cls(version=int(d["version"]), layers=int(d["layers"]),
                   fps=(int(d["fps"][0]), int(d["fps"][1])),
                   sh_degree=int(d["sh_degree"]), url=str(d["url"]), groups=groups)

    @classmethod
    def from_json_bytes(cls, data: bytes) -> "Manifest":
        return cls.from_json_dict(json.loads(data.decode()))


def emit_manifest(container_path, url: str | None = None) -> Manifest:
    """Build the streaming manifest from a container's directory."""
    info = read_container_info(container_path)
    name = url if url is not None else Path(container_path).name
    groups = []
    for g in info.groups:
        layer_bytes = tuple(g.layer_bytes(layer) for layer in range(info.layer_count))
        cum = tuple(int(x) for x in np.cumsum(layer_bytes))
        channels = tuple(
            tuple(ManifestChannel(e.channel.attribute, e.channel.component,
                                  e.bits, e.range_min, e.range_max)
                  for e in layer)
            for layer in g.channels
        )
        groups.append(ManifestGroup(
            start=g.start_frame, frames=g.frame_count,
            gauss_counts=g.layer_counts, position_bits=g.position_bits,
            layer_bytes=layer_bytes, cum_bytes=cum, channels=channels,
        ))
    return Manifest(version=VERSION, layers=info.layer_count, fps=info.fps,
                    sh_degree=info.sh_degree, url=name, groups=tuple(groups))


def write_manifest(manifest: Manifest, path) -> None:
    _atomic_write(path, manifest.to_json_bytes())
