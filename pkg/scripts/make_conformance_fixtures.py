"""Regenerate the shared codec conformance fixtures under conformance/.

Each fixture is a JSON file holding a full coded payload (base64) plus the
expected decoded planes and, where ranges are given, the dequantized values.
The primary test suite and the browser viewer's test suite both decode these
and must match bit-exactly, which pins the wire format across the two
implementations. Deterministic: rerunning rewrites identical files.
"""

import base64
import json
from pathlib import Path

import numpy as np

from gsv.codec import CodecId, encode_planes
from gsv.quantize import Plane, dequantize_codes

OUT = Path(__file__).resolve().parent.parent / "conformance"

_DTYPES = {8: np.uint8, 16: np.uint16, 32: np.uint32}


def fixture(name, planes, codec, bits, ranges=None):
    payload = encode_planes(planes, codec)
    blob = payload.to_bytes()
    doc = {
        "name": name,
        "codec": int(codec),
        "bits": bits,
        "width": planes[0].width,
        "height": planes[0].height,
        "count": len(planes),
        "payload_b64": base64.b64encode(blob).decode(),
        "expected_samples": [p.samples.ravel().tolist() for p in planes],
    }
    if ranges is not None:
        rmin, rmax = ranges
        doc["range_min"] = rmin
        doc["range_max"] = rmax
        doc["expected_values"] = [
            dequantize_codes(p.samples.ravel(), bits, rmin, rmax).tolist()
            for p in planes
        ]
    path = OUT / f"{name}.json"
    path.write_text(json.dumps(doc, separators=(",", ":")) + "\n")
    print(f"wrote {path} ({len(blob)} payload bytes)")


def plane_of(values, bits):
    arr = np.asarray(values, dtype=np.uint64).astype(_DTYPES[bits])
    return Plane(samples=arr, valid_count=arr.size)


def make_stream_fixture():
    """A small real container split into manifest + segment files, plus the
    expected decode of frame 0 for cross-checking client-side assembly."""
    import shutil

    from gsv.container import emit_manifest, read_container_info
    from gsv.pipeline import EncodeConfig, decode_video, encode_sequence
    from gsv.synth import SceneSpec, gen_synthetic_scene

    stream_dir = OUT / "stream"
    if stream_dir.exists():
        shutil.rmtree(stream_dir)
    stream_dir.mkdir(parents=True)

    spec = SceneSpec(count=60, frames=4, sh_degree=1, amplitude=0.001,
                     rotation_amplitude=0.01, scale_amplitude=0.0004,
                     opacity_amplitude=0.01, sh_amplitude=0.004)
    frames = gen_synthetic_scene(spec, seed=99)
    container = stream_dir / "scene.gsv"
    encode_sequence(frames, EncodeConfig(prune_fraction=0.0, fixed_group_length=2),
                    container, manifest_path=stream_dir / "manifest.json")

    info = read_container_info(container)
    blob = container.read_bytes()
    for gi, group in enumerate(info.groups):
        for layer in range(info.layer_count):
            off, size = group.segment_range(layer)
            (stream_dir / f"seg_g{gi}_l{layer + 1}.bin").write_bytes(
                blob[off:off + size])

    # expected values straight from the reference decoder
    video = decode_video(container)
    frame0 = video.groups[0].frames[0]
    expected = {
        "frame0_positions": frame0.positions.ravel().tolist(),
        "frame0_opacities": frame0.opacities.tolist(),
        "frame0_rotations_head": frame0.rotations.ravel()[:20].tolist(),
        "frame0_sh_head": frame0.sh.ravel()[:30].tolist(),
        "layer_counts": list(video.groups[0].layer_counts),
    }
    (stream_dir / "expected.json").write_text(
        json.dumps(expected, separators=(",", ":")) + "\n")
    container.unlink()  # clients only ever see manifest + segments
    print(f"wrote {stream_dir}/ (manifest + "
          f"{len(info.groups) * info.layer_count} segments + expected.json)")


def main():
    OUT.mkdir(exist_ok=True)
    rng = np.random.default_rng(20240809)

    fixture("raw_u8",
            [plane_of(rng.integers(0, 256, (4, 5)), 8) for _ in range(2)],
            CodecId.RAW, 8)

    fixture("rc_u8_constant",
            [plane_of(np.full((6, 6), 42), 8) for _ in range(3)],
            CodecId.REFERENCE, 8)

    fixture("rc_u8_random",
            [plane_of(rng.integers(0, 256, (7, 7)), 8) for _ in range(2)],
            CodecId.REFERENCE, 8)

    smooth = np.cumsum(rng.integers(0, 7, 64)).reshape(8, 8) % 256
    drifted = (smooth + rng.integers(-2, 3, (8, 8))) % 256
    fixture("rc_u8_smooth_pair",
            [plane_of(smooth, 8), plane_of(drifted, 8)],
            CodecId.REFERENCE, 8,
            ranges=(-1.0, 1.0))

    fixture("rc_u16_ramp",
            [plane_of((np.arange(30).reshape(5, 6) * 1000) % 65536, 16),
             plane_of((np.arange(30).reshape(5, 6) * 1000 + 37) % 65536, 16)],
            CodecId.REFERENCE, 16,
            ranges=(0.25, 0.75))

    fixture("rc_u32_single",
            [plane_of(rng.integers(0, 2 ** 32, (3, 4)), 32)],
            CodecId.REFERENCE, 32,
            ranges=(-100.0, 100.0))

    # first plane incompressible (falls back raw), second identical (coded)
    noisy = rng.integers(0, 256, (9, 9))
    fixture("rc_u8_mixed_modes",
            [plane_of(noisy, 8), plane_of(noisy, 8)],
            CodecId.REFERENCE, 8)

    make_stream_fixture()


if __name__ == "__main__":
    main()
