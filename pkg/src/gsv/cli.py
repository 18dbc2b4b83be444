"""Command-line entry points: encode, decode, render, serve, analyze, synth.

Every command is deterministic given its arguments (plus --seed where
randomness exists), exits 0 on success, and reports failures as one
machine-parseable line on stderr: GSV-ERROR cmd=<cmd> kind=<type> msg="...".
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import threading
from pathlib import Path

import numpy as np

from .codec import CodecId
from .container import read_container_info
from .errors import GsvError, InvalidInputError
from .metrics import RdCurve, RdPoint, bd_psnr, bdbr, psnr, read_rd_csv, write_rd_csv
from .pipeline import EncodeConfig, decode_video, encode_sequence
from .render import (load_camera, load_raw_floats, render_set, write_ppm,
                     write_raw_floats)
from .splatio import _atomic_write, load_splat_points, save_splat_points
from .streaming import serve
from .synth import SceneSpec, gen_synthetic_scene
from . import defaults


def _fractions(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(","))


def _fps(text: str) -> tuple[int, int]:
    if "/" in text:
        num, den = text.split("/")
        return int(num), int(den)
    return int(text), 1


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",")) if text else ()


def _load_frames(inputs: list[str]) -> list:
    paths: list[Path] = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(p.glob("*.splat")))
        else:
            paths.append(p)
    if not paths:
        raise InvalidInputError("no input splat files found")
    return [load_splat_points(p) for p in paths]


def cmd_synth(args) -> int:
    frames_n = args.frames
    amp = np.full(max(frames_n - 1, 0), args.amplitude)
    for t in args.burst_frames:
        if not 1 <= t < frames_n:
            raise InvalidInputError("burst frame out of range")
        amp[t - 1] = args.burst_amplitude
    spec = SceneSpec(
        count=args.count, frames=frames_n, sh_degree=args.sh_degree,
        amplitude=tuple(amp), rotation_amplitude=args.rotation_amplitude,
        scale_amplitude=args.scale_amplitude,
        opacity_amplitude=args.opacity_amplitude, sh_amplitude=args.sh_amplitude,
        redirect_frames=args.burst_frames, position_extent=args.position_extent)
    frames = gen_synthetic_scene(spec, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        save_splat_points(frame, out / f"frame_{i:04d}.splat")
    print(json.dumps({"frames": len(frames), "count": args.count,
                      "out": str(out)}))
    return 0


def cmd_encode(args) -> int:
    frames = _load_frames(args.input)
    config = EncodeConfig(
        layer_count=args.layers,
        layer_fractions=args.layer_fractions,
        volume_weight=args.volume_weight,
        motion_threshold=args.motion_threshold,
        prune_fraction=args.prune_fraction,
        position_bits=args.position_bits,
        wide_extent=args.wide_extent,
        codec=CodecId(args.codec),
        fps=args.fps,
        fixed_group_length=args.fixed_group_length,
        seed=args.seed,
    )
    result = encode_sequence(frames, config, args.output,
                             manifest_path=args.manifest)
    report = json.dumps(result.report, indent=2)
    if args.report:
        _atomic_write(args.report, report.encode())
    print(report)
    return 0


def cmd_decode(args) -> int:
    video = decode_video(args.input, args.layer)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for g in video.groups:
        for i, frame in enumerate(g.frames):
            path = out / f"frame_{g.start_frame + i:04d}.splat"
            save_splat_points(frame, path)
            written.append(str(path))
    print(json.dumps({"frames": len(written), "layer": video.decoded_layers,
                      "out": str(out)}))
    return 0


def cmd_render(args) -> int:
    video = decode_video(args.input, args.layer)
    cam = load_camera(args.camera)
    img = render_set(video.frame(args.frame), cam)
    write_ppm(img, args.out)
    if args.raw:
        write_raw_floats(img, args.raw)
    print(json.dumps({"frame": args.frame, "layer": video.decoded_layers,
                      "out": args.out}))
    return 0


def cmd_serve(args) -> int:
    port = int(os.environ.get("GSV_PORT", args.port))
    service = serve(args.input, port)
    print(json.dumps({"url": service.url, "port": service.port}), flush=True)
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()
    return 0


def cmd_analyze(args) -> int:
    cam = load_camera(args.camera)
    gt_dir = Path(args.gt_dir)
    points = []
    for path in args.inputs:
        info = read_container_info(path)
        video = decode_video(path, args.layer)
        frame_count = video.frame_count
        payload = sum(g.layer_bytes(layer) for g in info.groups
                      for layer in range(video.decoded_layers))
        rate_mb = payload / frame_count / 1e6
        values = []
        for t in range(frame_count):
            gt = load_raw_floats(gt_dir / f"frame_{t:04d}.npy")
            values.append(psnr(gt, render_set(video.frame(t), cam)))
        points.append(RdPoint(rate=rate_mb, psnr=float(np.mean(values))))
    points.sort(key=lambda p: p.rate)
    curve = RdCurve(points=tuple(points))
    write_rd_csv(curve, args.csv)
    anchor = read_rd_csv(args.anchor_csv) if args.anchor_csv else curve
    table = {
        "points": [{"rate_mb_per_frame": p.rate, "psnr_db": p.psnr} for p in curve.points],
        "bd_psnr_db": bd_psnr(anchor, curve),
        "bdbr_percent": bdbr(anchor, curve),
    }
    print(json.dumps(table, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gsv",
        description="Layered Gaussian-splat video: encode, decode, render, "
                    "serve, analyze, synth")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic splat sequence")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, required=True, help="splats per frame")
    p.add_argument("--frames", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--sh-degree", type=int, default=1)
    p.add_argument("--amplitude", type=float, default=0.0,
                   help="per-frame translation magnitude (scene units)")
    p.add_argument("--rotation-amplitude", type=float, default=0.0)
    p.add_argument("--scale-amplitude", type=float, default=0.0)
    p.add_argument("--opacity-amplitude", type=float, default=0.0)
    p.add_argument("--sh-amplitude", type=float, default=0.0)
    p.add_argument("--burst-frames", type=_int_list, default=(),
                   help="comma list of frames with redirected burst motion")
    p.add_argument("--burst-amplitude", type=float, default=0.0)
    p.add_argument("--position-extent", type=float, default=1.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("encode", help="encode splat frames into a .gsv container")
    p.add_argument("--input", nargs="+", required=True,
                   help="splat files or directories of frame_*.splat")
    p.add_argument("--output", required=True, help=".gsv output path")
    p.add_argument("--layers", type=int, default=defaults.LAYER_COUNT)
    p.add_argument("--layer-fractions", type=_fractions, default=None)
    p.add_argument("--volume-weight", type=float, default=defaults.VOLUME_WEIGHT)
    p.add_argument("--motion-threshold", type=float, default=defaults.MOTION_THRESHOLD)
    p.add_argument("--prune-fraction", type=float, default=defaults.PRUNE_FRACTION)
    p.add_argument("--position-bits", type=int, default=16, choices=(16, 32))
    p.add_argument("--wide-extent", type=float, default=50.0)
    p.add_argument("--codec", type=int, default=int(CodecId.REFERENCE))
    p.add_argument("--fps", type=_fps, default=(30, 1))
    p.add_argument("--fixed-group-length", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--manifest", default=None, help="manifest path (default: sibling manifest.json)")
    p.add_argument("--report", default=None, help="write the encode report JSON here too")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a container back to splat files")
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--layer", type=int, default=None, help="layer prefix (default: all)")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("render", help="render one frame of a container")
    p.add_argument("--input", required=True)
    p.add_argument("--frame", type=int, required=True)
    p.add_argument("--camera", required=True, help="camera JSON file")
    p.add_argument("--out", required=True, help="PPM output path")
    p.add_argument("--layer", type=int, default=None)
    p.add_argument("--raw", default=None, help="also dump lossless floats (.npy)")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("serve", help="serve a container over HTTP")
    p.add_argument("--input", required=True)
    p.add_argument("--port", type=int, default=8080,
                   help="listen port (GSV_PORT env overrides)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("analyze", help="RD curves and Bjontegaard deltas")
    p.add_argument("--inputs", nargs="+", required=True, help=".gsv files")
    p.add_argument("--gt-dir", required=True,
                   help="directory of reference frame_%%04d.npy renders")
    p.add_argument("--camera", required=True)
    p.add_argument("--csv", required=True, help="RD CSV output path")
    p.add_argument("--anchor-csv", default=None,
                   help="anchor curve CSV; omitted = compare against itself")
    p.add_argument("--layer", type=int, default=None)
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (GsvError, OSError, ValueError) as e:
        msg = str(e).replace('"', "'")
        print(f'GSV-ERROR cmd={args.command} kind={type(e).__name__} msg="{msg}"',
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
