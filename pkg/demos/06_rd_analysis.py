"""Rate-distortion curves from layered decodes, with Bjontegaard deltas.

Decoding more layers of one bitstream trades bytes for PSNR: that trade-off
is this toolkit's RD curve. A second, pruned encoding serves as the anchor.

Run:  python3 demos/06_rd_analysis.py
"""

from pathlib import Path

import numpy as np

from gsv.container import emit_manifest
from gsv.metrics import RdCurve, RdPoint, bd_psnr, bdbr, psnr, write_rd_csv
from gsv.pipeline import EncodeConfig, decode_video, encode_sequence
from gsv.render import Camera, render_set
from gsv.synth import SceneSpec, gen_synthetic_scene

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

frames = gen_synthetic_scene(
    SceneSpec(count=2500, frames=2, sh_degree=1, amplitude=0.0005,
              scale_range=(0.01, 0.05)), seed=20)
cam = Camera.looking_at(eye=(0, 0.2, -2.3), target=(0, 0, 0), width=192, height=192)
reference = [render_set(f, cam) for f in frames]


def curve_for(container) -> RdCurve:
    manifest = emit_manifest(container)
    points = []
    for layer in range(1, manifest.layers + 1):
        video = decode_video(container, layer)
        quality = float(np.mean([
            psnr(reference[t], render_set(video.frame(t), cam))
            for t in range(len(frames))]))
        rate = manifest.cum_bytes_per_frame(layer) / 1e6
        points.append(RdPoint(rate=rate, psnr=quality))
    return RdCurve(points=tuple(points))


full = out_dir / "rd_full.gsv"
lean = out_dir / "rd_pruned.gsv"
encode_sequence(frames, EncodeConfig(prune_fraction=0.0), full,
                manifest_path=out_dir / "rd_full.manifest.json")
encode_sequence(frames, EncodeConfig(prune_fraction=0.5), lean,
                manifest_path=out_dir / "rd_pruned.manifest.json")

curve_full = curve_for(full)
curve_lean = curve_for(lean)
for name, curve in (("full", curve_full), ("pruned-50%", curve_lean)):
    print(f"{name} curve (rate MB/frame, PSNR dB):")
    for p in curve.points:
        print(f"  {p.rate:8.5f}  {p.psnr:6.2f}")
write_rd_csv(curve_full, out_dir / "rd_full.csv")
write_rd_csv(curve_lean, out_dir / "rd_pruned.csv")

print(f"\nBD-PSNR (full vs pruned anchor): {bd_psnr(curve_lean, curve_full):+.2f} dB")
print(f"BDBR   (full vs pruned anchor): {bdbr(curve_lean, curve_full):+.1f} %")
print(f"CSV written to {out_dir}/rd_*.csv")
