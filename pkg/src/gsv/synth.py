"""Deterministic synthetic scene sequences with known per-frame motion.

Each splat gets a persistent motion state (translation direction, rotation
axis, attribute drifts). Frame t is derived from frame t-1 by a rigid step
scaled by that transition's amplitude plus residual attribute drift, so the
ground-truth deltas of every transition can be recovered by differencing.
Transitions listed in `redirect_frames` model topology-style changes: motion
state is re-randomized and orientations plus appearance attributes are
re-sampled outright, so correspondence with the previous frame carries little
information there.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInputError
from .gaussians import GaussianSet, sh_coeff_count
from .motion import quat_from_axis_angle, quat_multiply, quat_normalize


@dataclass(frozen=True)
class SceneSpec:
    """Shape and motion description for a generated sequence.

    Amplitude fields accept either a scalar (same for every transition) or a
    sequence with one entry per transition (frames - 1 entries). `amplitude`
    is the per-splat translation magnitude in scene units; splat magnitudes
    jitter by +-20% around it, so the mean translation norm of a transition
    tracks the configured value.
    """

    count: int
    frames: int = 1
    sh_degree: int = 1
    amplitude: float | Sequence[float] = 0.0
    rotation_amplitude: float | Sequence[float] = 0.0
    scale_amplitude: float | Sequence[float] = 0.0
    opacity_amplitude: float | Sequence[float] = 0.0
    sh_amplitude: float | Sequence[float] = 0.0
    redirect_frames: tuple[int, ...] = ()
    position_extent: float = 1.0
    scale_range: tuple[float, float] = (0.005, 0.05)
    opacity_range: tuple[float, float] = (0.2, 1.0)
    sh_dc_range: tuple[float, float] = (-1.5, 1.5)

    def __post_init__(self):
        if self.count < 1:
            raise InvalidInputError("count must be >= 1")
        if self.frames < 1:
            raise InvalidInputError("frames must be >= 1")
        if self.position_extent <= 0:
            raise InvalidInputError("position_extent must be positive")
        for name in ("scale_range", "opacity_range", "sh_dc_range"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise InvalidInputError(f"{name} must be an increasing pair")
        if self.scale_range[0] <= 0:
            raise InvalidInputError("scale_range must be positive")
        if not 0.0 <= self.opacity_range[0] < self.opacity_range[1] <= 1.0:
            raise InvalidInputError("opacity_range must lie inside [0, 1]")
        for name in ("amplitude", "rotation_amplitude", "scale_amplitude",
                     "opacity_amplitude", "sh_amplitude"):
            self._per_transition(name)  # validates length and sign
        if any(not 1 <= t < self.frames for t in self.redirect_frames):
            raise InvalidInputError("redirect_frames must be transition indices 1..frames-1")

    def _per_transition(self, name: str) -> np.ndarray:
        value = getattr(self, name)
        n = max(self.frames - 1, 0)
        if np.isscalar(value):
            arr = np.full(n, float(value))
        else:
            arr = np.asarray(value, dtype=np.float64)
            if arr.shape != (n,):
                raise InvalidInputError(f"{name} needs one entry per transition ({n})")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise InvalidInputError(f"{name} entries must be finite and >= 0")
        return arr


@dataclass
class _MotionState:
    directions: np.ndarray   # (N, 3) unit
    magnitudes: np.ndarray   # (N,) ~ U(0.8, 1.2)
    axes: np.ndarray         # (N, 3) unit
    scale_drift: np.ndarray  # (N, 3) in [-1, 1]
    opacity_drift: np.ndarray
    sh_drift: np.ndarray


def _unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    v = rng.normal(size=(n, dim))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return v / norms


def _draw_motion_state(rng: np.random.Generator, n: int, shdim: int) -> _MotionState:
    return _MotionState(
        directions=_unit_rows(rng, n, 3),
        magnitudes=rng.uniform(0.8, 1.2, size=n),
        axes=_unit_rows(rng, n, 3),
        scale_drift=rng.uniform(-1.0, 1.0, size=(n, 3)),
        opacity_drift=rng.uniform(-1.0, 1.0, size=n),
        sh_drift=rng.uniform(-1.0, 1.0, size=(n, shdim)),
    )


def _draw_attributes(rng: np.random.Generator, spec: SceneSpec):
    n, shdim = spec.count, sh_coeff_count(spec.sh_degree)
    scales = rng.uniform(*spec.scale_range, size=(n, 3))
    opacities = rng.uniform(*spec.opacity_range, size=n)
    sh = rng.uniform(-0.3, 0.3, size=(n, shdim))
    sh[:, :3] = rng.uniform(*spec.sh_dc_range, size=(n, 3))
    return scales, opacities, sh


def _drift(values, rate, drift, lo, hi):
    """Additive drift reflected at the range ends so values stay in [lo, hi]."""
    out = values + rate * drift
    over, under = out > hi, out < lo
    out[over] = np.maximum(2 * hi - out[over], lo)
    out[under] = np.minimum(2 * lo - out[under], hi)
    return out


def gen_synthetic_scene(spec: SceneSpec, seed: int) -> list[GaussianSet]:
    """Generate one GaussianSet per frame, bit-reproducible for (spec, seed)."""
    rng = np.random.default_rng(seed)
    n, shdim = spec.count, sh_coeff_count(spec.sh_degree)
    half = spec.position_extent / 2.0

    positions = rng.uniform(-half, half, size=(n, 3))
    rotations = quat_normalize(rng.normal(size=(n, 4)))
    scales, opacities, sh = _draw_attributes(rng, spec)
    state = _draw_motion_state(rng, n, shdim)

    amp = spec._per_transition("amplitude")
    rot_amp = spec._per_transition("rotation_amplitude")
    scale_amp = spec._per_transition("scale_amplitude")
    op_amp = spec._per_transition("opacity_amplitude")
    sh_amp = spec._per_transition("sh_amplitude")

    frames = []
    for t in range(spec.frames):
        if t > 0:
            a = t - 1  # transition index
            if t in spec.redirect_frames:
                state = _draw_motion_state(rng, n, shdim)
                scales, opacities, sh = _draw_attributes(rng, spec)
                rotations = quat_normalize(rng.normal(size=(n, 4)))
            else:
                scales = _drift(scales, scale_amp[a], state.scale_drift, *spec.scale_range)
                opacities = _drift(opacities, op_amp[a], state.opacity_drift, *spec.opacity_range)
                sh = sh + sh_amp[a] * state.sh_drift
            if amp[a] != 0.0:
                positions = positions + amp[a] * state.magnitudes[:, None] * state.directions
            if rot_amp[a] != 0.0:
                dq = quat_from_axis_angle(state.axes, rot_amp[a] * state.magnitudes)
                rotations = quat_normalize(quat_multiply(dq, rotations))
        frames.append(GaussianSet(
            positions=positions.copy(),
            rotations=rotations.copy(),
            scales=scales.copy(),
            opacities=opacities.copy(),
            sh=sh.copy(),
            sh_degree=spec.sh_degree,
        ))
    return frames
