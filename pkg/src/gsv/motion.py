"""Inter-frame motion: rigid/residual deltas, adaptive grouping, reconstruction.

Frame-to-frame change is decomposed into a rigid part (per-splat translation
and rotation) and a residual part (additive updates to scales, opacity and SH
coefficients). A sequence is cut into groups at frames whose mean translation
magnitude exceeds a threshold; each group is a keyframe plus per-frame deltas.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError
from .gaussians import GaussianSet, LayeredFrame

OPACITY_MIN, OPACITY_MAX = 0.0, 1.0
SCALE_FLOOR = 1e-7
ROTATION_NORM_TOL = 1e-6


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a*b for (.., 4) arrays in (w, x, y, z) order."""
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    out = np.array(q, dtype=np.float64, copy=True)
    out[..., 1:] *= -1.0
    return out


def quat_normalize(q: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise InvalidInputError("zero quaternion cannot be normalized")
    return q / norms


def quat_from_axis_angle(axis: np.ndarray, angle) -> np.ndarray:
    """Unit quaternions for rotations of `angle` radians about unit `axis`."""
    angle = np.asarray(angle, dtype=np.float64)
    half = angle / 2.0
    w = np.cos(half)
    xyz = np.asarray(axis, dtype=np.float64) * np.sin(half)[..., None]
    return np.concatenate([w[..., None], xyz], axis=-1)


@dataclass(frozen=True)
class RigidDelta:
    """Per-splat translation and rotation update for one frame step."""

    translations: np.ndarray  # (N, 3)
    rotations: np.ndarray     # (N, 4) unit quaternions, applied on the left

    def __post_init__(self):
        t = np.ascontiguousarray(np.asarray(self.translations, dtype=np.float64))
        r = np.ascontiguousarray(np.asarray(self.rotations, dtype=np.float64))
        if t.ndim != 2 or t.shape[1] != 3 or r.shape != (t.shape[0], 4):
            raise InvalidInputError("translations must be (N,3) and rotations (N,4)")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(r))):
            raise InvalidInputError("non-finite rigid delta")
        norms = np.linalg.norm(r, axis=1)
        if np.any(np.abs(norms - 1.0) > ROTATION_NORM_TOL):
            raise InvalidInputError("delta rotations must be unit quaternions")
        t.flags.writeable = False
        r.flags.writeable = False
        object.__setattr__(self, "translations", t)
        object.__setattr__(self, "rotations", r)

    def __len__(self) -> int:
        return self.translations.shape[0]


@dataclass(frozen=True)
class ResidualDelta:
    """Additive per-splat updates to scales, opacity and SH coefficients."""

    d_scales: np.ndarray   # (N, 3)
    d_opacity: np.ndarray  # (N,)
    d_sh: np.ndarray       # (N, shdim)

    def __post_init__(self):
        ds = np.ascontiguousarray(np.asarray(self.d_scales, dtype=np.float64))
        do = np.ascontiguousarray(np.asarray(self.d_opacity, dtype=np.float64))
        dsh = np.ascontiguousarray(np.asarray(self.d_sh, dtype=np.float64))
        n = ds.shape[0]
        if ds.shape != (n, 3) or do.shape != (n,) or dsh.ndim != 2 or dsh.shape[0] != n:
            raise InvalidInputError("residual delta arrays must share length N")
        for arr in (ds, do, dsh):
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError("non-finite residual delta")
            arr.flags.writeable = False
        object.__setattr__(self, "d_scales", ds)
        object.__setattr__(self, "d_opacity", do)
        object.__setattr__(self, "d_sh", dsh)

    def __len__(self) -> int:
        return self.d_scales.shape[0]


@dataclass(frozen=True)
class FrameDelta:
    """Rigid plus residual update taking frame_index-1 to frame_index.

    Arrays follow the group keyframe's layered order, so a client holding only
    the first l layers applies the corresponding prefix of each array.
    """

    rigid: RigidDelta
    residual: ResidualDelta
    frame_index: int

    def __post_init__(self):
        if len(self.rigid) != len(self.residual):
            raise InvalidInputError("rigid and residual deltas must match in length")

    def __len__(self) -> int:
        return len(self.rigid)

    def prefix(self, count: int) -> "FrameDelta":
        """Delta restricted to the first `count` splats (layer prefix)."""
        if not 0 <= count <= len(self):
            raise InvalidInputError("prefix count out of range")
        return FrameDelta(
            rigid=RigidDelta(self.rigid.translations[:count],
                             self.rigid.rotations[:count]),
            residual=ResidualDelta(self.residual.d_scales[:count],
                                   self.residual.d_opacity[:count],
                                   self.residual.d_sh[:count]),
            frame_index=self.frame_index,
        )


@dataclass(frozen=True)
class GroupPlan:
    """Keyframe positions chosen for a sequence plus the threshold used."""

    boundaries: tuple[int, ...]
    motion_threshold: float

    def __post_init__(self):
        b = tuple(int(x) for x in self.boundaries)
        if not b or b[0] != 0:
            raise InvalidInputError("boundaries must start at frame 0")
        if any(b[i] >= b[i + 1] for i in range(len(b) - 1)):
            raise InvalidInputError("boundaries must be strictly increasing")
        object.__setattr__(self, "boundaries", b)

    def group_ranges(self, frame_count: int) -> list[tuple[int, int]]:
        """(start, end) half-open frame ranges for each group."""
        ends = list(self.boundaries[1:]) + [frame_count]
        return [(s, e) for s, e in zip(self.boundaries, ends)]


def apply_rigid(gset: GaussianSet, delta: RigidDelta) -> GaussianSet:
    """Translate positions and left-compose rotations; other fields untouched."""
    if len(delta) != len(gset):
        raise InvalidInputError(f"delta sized {len(delta)} vs set {len(gset)}")
    rotations = quat_normalize(quat_multiply(delta.rotations, gset.rotations))
    return GaussianSet(
        positions=gset.positions + delta.translations,
        rotations=rotations,
        scales=gset.scales,
        opacities=gset.opacities,
        sh=gset.sh,
        sh_degree=gset.sh_degree,
    )


def apply_residual(gset: GaussianSet, delta: ResidualDelta) -> GaussianSet:
    """Add residuals; opacity is clamped to [0,1] and scales floored at 1e-7."""
    if len(delta) != len(gset):
        raise InvalidInputError(f"delta sized {len(delta)} vs set {len(gset)}")
    if delta.d_sh.shape[1] != gset.sh.shape[1]:
        raise InvalidInputError("d_sh width does not match the set's SH degree")
    return GaussianSet(
        positions=gset.positions,
        rotations=gset.rotations,
        scales=np.maximum(gset.scales + delta.d_scales, SCALE_FLOOR),
        opacities=np.clip(gset.opacities + delta.d_opacity, OPACITY_MIN, OPACITY_MAX),
        sh=gset.sh + delta.d_sh,
        sh_degree=gset.sh_degree,
    )


def mean_translation(delta: RigidDelta) -> float:
    """Mean Euclidean norm of the per-splat translations."""
    if len(delta) == 0:
        raise InvalidInputError("empty delta")
    return float(np.linalg.norm(delta.translations, axis=1).mean())


def plan_groups(per_frame_mean_translation: Sequence[float], motion_threshold: float) -> GroupPlan:
    """Start a new group at every frame whose mean translation exceeds the
    threshold (strictly). Entry i of the input describes frame i+1; frame 0 is
    always a keyframe. A triggering frame is itself re-encoded as a keyframe,
    so its deltas are never emitted."""
    if not np.isfinite(motion_threshold) or motion_threshold <= 0:
        raise InvalidInputError("motion_threshold must be positive")
    values = np.asarray(per_frame_mean_translation, dtype=np.float64)
    boundaries = [0]
    for i, v in enumerate(values):
        if v > motion_threshold:
            boundaries.append(i + 1)
    return GroupPlan(boundaries=tuple(boundaries), motion_threshold=float(motion_threshold))


def reconstruct_frame(group_keyframe: LayeredFrame, deltas: Sequence[FrameDelta],
                      t: int, up_to_layer: int | None = None) -> GaussianSet:
    """Fold deltas 1..t onto the keyframe (rigid first, then residual).

    t = 0 returns the flattened keyframe itself. With `up_to_layer` given,
    only that layer prefix is reconstructed, using the matching prefix of
    every delta.
    """
    if not 0 <= t <= len(deltas):
        raise InvalidInputError(f"frame index {t} out of range 0..{len(deltas)}")
    gset = group_keyframe.flatten(up_to_layer)
    count = len(gset)
    for delta in deltas[:t]:
        if len(delta) < count:
            raise InvalidInputError("delta shorter than the requested layer prefix")
        d = delta.prefix(count) if len(delta) != count else delta
        gset = apply_residual(apply_rigid(gset, d.rigid), d.residual)
    return gset


def frame_delta_between(prev: GaussianSet, cur: GaussianSet, frame_index: int) -> FrameDelta:
    """Exact delta taking `prev` to `cur` under index correspondence.

    The rotation delta is cur * conj(prev), so apply_rigid(prev, delta)
    reproduces `cur` up to normalization sign; residuals are plain
    differences.
    """
    if len(prev) != len(cur):
        raise InvalidInputError("frames differ in Gaussian count")
    dq = quat_normalize(quat_multiply(cur.rotations, quat_conjugate(quat_normalize(prev.rotations))))
    return FrameDelta(
        rigid=RigidDelta(translations=cur.positions - prev.positions, rotations=dq),
        residual=ResidualDelta(
            d_scales=cur.scales - prev.scales,
            d_opacity=cur.opacities - prev.opacities,
            d_sh=cur.sh - prev.sh,
        ),
        frame_index=frame_index,
    )
