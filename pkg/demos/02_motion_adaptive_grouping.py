"""Watch per-frame motion drive adaptive group boundaries.

A long calm sequence bursts at two known frames; the planner keys new groups
exactly there.

Run:  python3 demos/02_motion_adaptive_grouping.py
"""

import numpy as np

from gsv import defaults
from gsv.motion import frame_delta_between, mean_translation, plan_groups
from gsv.synth import SceneSpec, gen_synthetic_scene

tau = defaults.MOTION_THRESHOLD
frames_n, bursts = 25, (9, 18)
amplitude = np.full(frames_n - 1, 0.2 * tau)
for b in bursts:
    amplitude[b - 1] = 2 * tau

spec = SceneSpec(count=500, frames=frames_n, amplitude=tuple(amplitude),
                 rotation_amplitude=0.01, redirect_frames=bursts)
frames = gen_synthetic_scene(spec, seed=3)

translations = []
for t in range(1, frames_n):
    delta = frame_delta_between(frames[t - 1], frames[t], t)
    translations.append(mean_translation(delta.rigid))

print(f"threshold tau = {tau}")
print("frame  mean |translation|   x tau")
for t, v in enumerate(translations, start=1):
    marker = "  <-- boundary" if v > tau else ""
    print(f"{t:5d}  {v:17.6f}  {v / tau:5.2f}{marker}")

plan = plan_groups(translations, tau)
print(f"\ngroup boundaries: {plan.boundaries}")
print(f"group frame ranges: {plan.group_ranges(frames_n)}")
assert plan.boundaries == (0, *bursts)
