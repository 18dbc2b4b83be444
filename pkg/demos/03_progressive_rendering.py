"""Render one frame at every layer depth and compare against the full set.

Writes PPM images under demos/out/.

Run:  python3 demos/03_progressive_rendering.py
"""

from pathlib import Path

from gsv import defaults
from gsv.gaussians import partition_layers, prune_low_opacity
from gsv.metrics import psnr, ssim
from gsv.render import Camera, render_progressive, render_set, write_ppm
from gsv.synth import SceneSpec, gen_synthetic_scene

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

scene = gen_synthetic_scene(
    SceneSpec(count=4000, frames=1, sh_degree=1, scale_range=(0.01, 0.05)), seed=8)[0]
scene = prune_low_opacity(scene, 0.2)
frame = partition_layers(scene, defaults.LAYER_COUNT,
                         [1 / 6] * 6, defaults.VOLUME_WEIGHT)
cam = Camera.looking_at(eye=(0.0, 0.3, -2.2), target=(0, 0, 0),
                        width=256, height=256)

reference = render_set(frame.flatten(), cam)
write_ppm(reference, out_dir / "progressive_full.ppm")
print(f"{len(scene)} splats in {frame.layer_count} layers; camera 256x256")
print("layers  splats   PSNR(dB) vs full   SSIM")
for l in range(1, frame.layer_count + 1):
    img = render_progressive(frame, l, [], 0, cam)
    write_ppm(img, out_dir / f"progressive_l{l}.ppm")
    count = sum(frame.layer_sizes[:l])
    print(f"  1..{l}  {count:6d}   {psnr(reference, img):8.2f}          "
          f"{ssim(reference, img):.4f}")
print(f"\nimages written to {out_dir}/progressive_l*.ppm")
