"""End-to-end encoding: grouping, layering, quantization, packing, payloads.

The encoder cuts the sequence into motion-adaptive groups, partitions each
group's keyframe into significance layers (fixing the splat order for the
whole group), quantizes every attribute channel against its per-(group,
layer, channel) range over all of the group's frames, packs the codes into
2D planes and hands each (layer, channel) temporal run to the plane codec.
Frames are therefore reconstructed independently of one another: every
decoded attribute is within half a quantization step of its source value, no
matter how long the group is, while the codec's temporal predictor removes
the redundancy between consecutive planes.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import defaults
from .codec import CodecId, encode_planes
from .container import (DecodedVideo, EncodedGroupData, Manifest, emit_manifest,
                        read_container_info, read_layers, read_structure,
                        write_container, write_manifest)
from .errors import InvalidInputError
from .gaussians import (GaussianSet, layer_sizes_for, prune_keep_indices,
                        sh_coeff_count, significance_order)
from .motion import plan_groups
from .quantize import (ChannelId, KeyedPlane, QuantizedChannel,
                       arrange_sequences, dequantize_codes, flatten_to_plane,
                       quantize_channel)
from .rate import SymbolSamples, rate_inter, rate_key

_ATTR_WIDTHS = {"position": 3, "rotation": 4, "scales": 3, "opacity": 1}
# container attribute -> rate-model tags (positions and rotations carry no
# inter entropy model; keyframe positions are likewise not rate-modeled)
_KEY_TAG = {"rotation": "rotation", "scales": "scale", "opacity": "opacity", "sh": "sh"}
_INTER_TAG = {"scales": "d_scale", "opacity": "d_opacity", "sh": "d_sh"}


def worker_count() -> int:
    """Worker cap from GSV_THREADS (default 1: fully serial encode/decode)."""
    try:
        n = int(os.environ.get("GSV_THREADS", "1"))
    except ValueError:
        return 1
    return max(1, n)


@dataclass(frozen=True)
class EncodeConfig:
    layer_count: int = defaults.LAYER_COUNT
    layer_fractions: tuple[float, ...] | None = None   # None = equal split
    volume_weight: float = defaults.VOLUME_WEIGHT
    motion_threshold: float = defaults.MOTION_THRESHOLD
    prune_fraction: float = defaults.PRUNE_FRACTION
    position_bits: int = 16
    wide_extent: float = 50.0    # scene extent that widens positions to 32 bits
    codec: CodecId = CodecId.REFERENCE
    fps: tuple[int, int] = (30, 1)
    fixed_group_length: int | None = None   # overrides adaptive grouping
    seed: int = 0

    def fractions(self) -> tuple[float, ...]:
        if self.layer_fractions is not None:
            return tuple(float(f) for f in self.layer_fractions)
        return tuple(1.0 / self.layer_count for _ in range(self.layer_count))

    def validate(self) -> None:
        if self.layer_count < 1:
            raise InvalidInputError("layer_count must be >= 1")
        fr = self.fractions()
        if len(fr) != self.layer_count:
            raise InvalidInputError("layer_fractions length must equal layer_count")
        if any(f <= 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise InvalidInputError("layer fractions must be positive and sum to 1")
        if self.volume_weight < 0:
            raise InvalidInputError("volume_weight must be >= 0")
        if self.motion_threshold <= 0:
            raise InvalidInputError("motion_threshold must be positive")
        if not 0.0 <= self.prune_fraction < 1.0:
            raise InvalidInputError("prune_fraction must lie in [0, 1)")
        if self.position_bits not in (16, 32):
            raise InvalidInputError("position_bits must be 16 or 32")
        if self.fps[0] < 1 or self.fps[1] < 1:
            raise InvalidInputError("fps must be a positive rational")
        if self.fixed_group_length is not None and self.fixed_group_length < 1:
            raise InvalidInputError("fixed_group_length must be >= 1")
        if self.codec not in (CodecId.RAW, CodecId.REFERENCE):
            raise InvalidInputError("encoder supports codec ids 0 and 1")

    def to_json_dict(self) -> dict:
        return {
            "layer_count": self.layer_count,
            "layer_fractions": list(self.fractions()),
            "volume_weight": self.volume_weight,
            "motion_threshold": self.motion_threshold,
            "prune_fraction": self.prune_fraction,
            "position_bits": self.position_bits,
            "wide_extent": self.wide_extent,
            "codec": int(self.codec),
            "fps": list(self.fps),
            "fixed_group_length": self.fixed_group_length,
            "seed": self.seed,
        }


@dataclass
class EncodeResult:
    container_path: str
    manifest_path: str
    manifest: Manifest
    report: dict
    boundaries: tuple[int, ...]
    # per group: permutation mapping layered order -> source row index
    group_orders: tuple[np.ndarray, ...]
    # post-quantization frames in layered order (only when keep_reference)
    reference_frames: tuple[GaussianSet, ...] | None = None


def _channel_columns(attr: str, width: int, frames_attr: list[np.ndarray],
                     lo: int, hi: int):
    """Per-component (frames, slice) value matrices for one layer slice."""
    for comp in range(width):
        yield ChannelId(attr, comp), np.stack([a[lo:hi, comp] for a in frames_attr])


def _group_channel_bits(attr: str, position_bits: int) -> int:
    return position_bits if attr == "position" else 8


def encode_sequence(frames: Sequence[GaussianSet], config: EncodeConfig,
                    output_path, *, manifest_path=None,
                    keep_reference: bool = False) -> EncodeResult:
    """Encode a frame sequence into a .gsv container plus manifest.

    Deterministic for a fixed (frames, config): identical bytes on re-runs.
    """
    t_start = time.perf_counter()
    config.validate()
    if not frames:
        raise InvalidInputError("no frames to encode")
    sh_degree = frames[0].sh_degree
    for i, fr in enumerate(frames):
        if len(fr) == 0:
            raise InvalidInputError(f"frame {i} is empty")
        if fr.sh_degree != sh_degree:
            raise InvalidInputError("frames disagree on SH degree")
    shdim = sh_coeff_count(sh_degree)
    widths = dict(_ATTR_WIDTHS, sh=shdim)

    mins = np.min([f.positions.min(axis=0) for f in frames], axis=0)
    maxs = np.max([f.positions.max(axis=0) for f in frames], axis=0)
    extent = float((maxs - mins).max())
    position_bits = 32 if (config.position_bits == 32 or extent > config.wide_extent) else 16

    # group planning from raw consecutive-frame motion; a count mismatch
    # forces a boundary because index correspondence breaks there
    if config.fixed_group_length is not None:
        boundaries = tuple(range(0, len(frames), config.fixed_group_length))
    else:
        values = []
        for t in range(1, len(frames)):
            if len(frames[t]) != len(frames[t - 1]):
                values.append(np.inf)
            else:
                values.append(float(np.linalg.norm(
                    frames[t].positions - frames[t - 1].positions, axis=1).mean()))
        boundaries = plan_groups(values, config.motion_threshold).boundaries

    ranges = [(s, e) for s, e in zip(boundaries, tuple(boundaries[1:]) + (len(frames),))]

    group_data: list[EncodedGroupData] = []
    group_orders: list[np.ndarray] = []
    reference: list[GaussianSet] = [] if keep_reference else None
    key_symbols: dict[str, list[np.ndarray]] = {t: [] for t in _KEY_TAG.values()}
    inter_symbols: dict[str, list[np.ndarray]] = {t: [] for t in _INTER_TAG.values()}
    attr_actual_bits: dict[str, float] = {}
    attr_actual_symbols: dict[str, int] = {}
    pool = ThreadPoolExecutor(max_workers=worker_count())
    try:
        for start, end in ranges:
            keyframe = frames[start]
            keep = prune_keep_indices(keyframe, config.prune_fraction)
            pruned = keyframe.take(keep)
            order = significance_order(pruned, config.volume_weight)
            idx = keep[order]
            sizes = layer_sizes_for(len(idx), config.fractions())
            if any(s < 1 for s in sizes):
                raise InvalidInputError(
                    f"group at frame {start}: a layer would be empty "
                    f"({len(idx)} splats across {config.layer_count} layers)")

            ordered = [frames[t].take(idx) for t in range(start, end)]
            # hemisphere-align quaternions along time so component deltas
            # stay small; q and -q encode the same rotation
            rots = [ordered[0].rotations]
            for t in range(1, len(ordered)):
                q = ordered[t].rotations
                flip = np.sign(np.sum(q * rots[-1], axis=1))
                flip[flip == 0] = 1.0
                rots.append(q * flip[:, None])
            per_attr = {
                "position": [g.positions for g in ordered],
                "rotation": rots,
                "scales": [g.scales for g in ordered],
                "opacity": [g.opacities[:, None] for g in ordered],
                "sh": [g.sh for g in ordered],
            }

            # quantize each (layer, channel) against the whole group's values
            offsets = np.concatenate([[0], np.cumsum(sizes)])
            keyed_planes: list[KeyedPlane] = []
            meta: dict[tuple[int, ChannelId], tuple[int, float, float]] = {}
            codes_by: dict[tuple[int, ChannelId], np.ndarray] = {}
            gi = len(group_data)
            for layer in range(config.layer_count):
                lo, hi = int(offsets[layer]), int(offsets[layer + 1])
                for attr, width in widths.items():
                    bits = _group_channel_bits(attr, position_bits)
                    for cid, matrix in _channel_columns(attr, width, per_attr[attr], lo, hi):
                        ch = quantize_channel(matrix.ravel(), bits, cid)
                        codes = ch.codes.reshape(matrix.shape)
                        codes_by[(layer, cid)] = codes
                        meta[(layer, cid)] = (bits, ch.range_min, ch.range_max)
                        for f_idx in range(codes.shape[0]):
                            keyed_planes.append(KeyedPlane(
                                group=gi, frame=start + f_idx, layer=layer,
                                channel=cid,
                                plane=flatten_to_plane(QuantizedChannel(
                                    codes=codes[f_idx], bits=bits,
                                    range_min=ch.range_min, range_max=ch.range_max,
                                    channel_id=cid))))

            seq = arrange_sequences(keyed_planes)
            runs = seq.runs()
            payloads = list(pool.map(
                lambda run: encode_planes([kp.plane for kp in run[1]], config.codec),
                runs))
            layer_entries: list[list] = [[] for _ in range(config.layer_count)]
            for ((_, layer, cid), _run), payload in zip(runs, payloads):
                bits, rmin, rmax = meta[(layer, cid)]
                blob = payload.to_bytes()
                layer_entries[layer].append((cid, bits, rmin, rmax, blob))
                attr_actual_bits[cid.attribute] = attr_actual_bits.get(cid.attribute, 0.0) \
                    + 8.0 * len(blob)
                attr_actual_symbols[cid.attribute] = attr_actual_symbols.get(cid.attribute, 0) \
                    + payload.count * payload.width * payload.height

            group_data.append(EncodedGroupData(
                start_frame=start, frame_count=end - start,
                position_bits=position_bits, layer_counts=sizes,
                layers=layer_entries))
            group_orders.append(idx)

            # rate-model samples: keyframe codes per attribute, plus integer
            # code differences between consecutive frames for the residuals
            for (layer, cid), codes in codes_by.items():
                tag = _KEY_TAG.get(cid.attribute)
                if tag is not None:
                    key_symbols[tag].append(codes[0].astype(np.float64))
                if codes.shape[0] > 1:
                    tag = _INTER_TAG.get(cid.attribute)
                    if tag is not None:
                        d = np.diff(codes.astype(np.int64), axis=0)
                        inter_symbols[tag].append(d.ravel().astype(np.float64))

            if keep_reference:
                for f_idx in range(end - start):
                    parts = {attr: [] for attr in widths}
                    for layer in range(config.layer_count):
                        for attr, width in widths.items():
                            block = np.empty((sizes[layer], width))
                            for comp in range(width):
                                cid = ChannelId(attr, comp)
                                bits, rmin, rmax = meta[(layer, cid)]
                                block[:, comp] = dequantize_codes(
                                    codes_by[(layer, cid)][f_idx], bits, rmin, rmax)
                            parts[attr].append(block)
                    reference.append(GaussianSet(
                        positions=np.concatenate(parts["position"]),
                        rotations=np.concatenate(parts["rotation"]),
                        scales=np.concatenate(parts["scales"]),
                        opacities=np.concatenate(parts["opacity"])[:, 0],
                        sh=np.concatenate(parts["sh"]),
                        sh_degree=sh_degree,
                    ))
    finally:
        pool.shutdown()

    bounds = (*mins.tolist(), *maxs.tolist())
    write_container(group_data, output_path, sh_degree=sh_degree,
                    layer_count=config.layer_count, fps=config.fps, bounds=bounds)
    manifest = emit_manifest(output_path)
    if manifest_path is None:
        manifest_path = Path(output_path).parent / "manifest.json"
    write_manifest(manifest, manifest_path)

    estimated = {}
    for tag, chunks in key_symbols.items():
        if chunks:
            samples = SymbolSamples(np.concatenate(chunks), tag)
            estimated[tag] = rate_key({tag: samples})
    for tag, chunks in inter_symbols.items():
        if chunks:
            samples = SymbolSamples(np.concatenate(chunks), tag)
            estimated[tag] = rate_inter({tag: samples})
    actual = {
        attr: attr_actual_bits[attr] / attr_actual_symbols[attr]
        for attr in attr_actual_bits
    }

    layer_totals = [0] * config.layer_count
    for g in manifest.groups:
        for layer, b in enumerate(g.layer_bytes):
            layer_totals[layer] += b
    report = {
        "config": config.to_json_dict(),
        "sh_degree": sh_degree,
        "position_bits": position_bits,
        "frame_count": len(frames),
        "groups": [
            {"start": g.start, "frames": g.frames,
             "layer_bytes": list(g.layer_bytes)}
            for g in manifest.groups
        ],
        "layer_bytes_total": layer_totals,
        "payload_bytes": sum(layer_totals),
        "file_bytes": Path(output_path).stat().st_size,
        "estimated_bits_per_symbol": estimated,
        "actual_bits_per_symbol": actual,
        "wall_time_s": time.perf_counter() - t_start,
    }
    return EncodeResult(
        container_path=str(output_path),
        manifest_path=str(manifest_path),
        manifest=manifest,
        report=report,
        boundaries=tuple(boundaries),
        group_orders=tuple(group_orders),
        reference_frames=tuple(reference) if keep_reference else None,
    )


def decode_video(source, up_to_layer: int | None = None) -> DecodedVideo:
    """Decode a container at a layer prefix (all layers when omitted)."""
    if up_to_layer is None:
        if isinstance(source, (str, Path)):
            up_to_layer = read_container_info(source).layer_count
        else:
            pos = source.tell()
            up_to_layer = read_structure(source).layer_count
            source.seek(pos)
    return read_layers(source, up_to_layer)
