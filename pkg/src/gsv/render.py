"""CPU reference renderer: EWA projection and front-to-back alpha compositing.

Each Gaussian's world covariance R diag(s)^2 R^T is pushed through the camera
rotation and the first-order perspective Jacobian to a 2x2 screen covariance,
dilated by 0.3 px^2 on the diagonal. Splats are composited per pixel in depth
order: color = sum_i c_i a'_i prod_{j<i} (1 - a'_j), with a'_i the projected
opacity capped at 0.99, stopping once transmittance falls below 1e-4.

The inner loop is JIT-compiled; output is bit-identical for a given splat
list regardless of how work is scheduled because each pixel accumulates in
strict depth order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from ._rc import njit
from .errors import InvalidInputError
from .gaussians import Gaussian, GaussianSet, LayeredFrame
from .motion import reconstruct_frame
from .splatio import _atomic_write

COV_DILATION = 0.3       # px^2 added to the screen covariance diagonal
ALPHA_CEILING = 0.99
TRANSMITTANCE_MIN = 1e-4
FOOTPRINT_SIGMAS = 3.0

# Real spherical-harmonics basis constants, degrees 0..3.
_SH_C0 = 0.28209479177387814
_SH_C1 = 0.4886025119029199
_SH_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
          -1.0925484305920792, 0.5462742152960396)
_SH_C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
          0.3731763325901154, -0.4570457994644658, 1.445305721320277,
          -0.5900435899266435)


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: x_cam = rotation @ x_world + translation."""

    rotation: np.ndarray      # (3, 3) world-to-camera
    translation: np.ndarray   # (3,)
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    near: float = 0.01
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        r = np.ascontiguousarray(np.asarray(self.rotation, dtype=np.float64))
        t = np.ascontiguousarray(np.asarray(self.translation, dtype=np.float64))
        if r.shape != (3, 3) or t.shape != (3,):
            raise InvalidInputError("rotation must be 3x3 and translation a 3-vector")
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidInputError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise InvalidInputError("image dimensions must be >= 1")
        if self.near <= 0:
            raise InvalidInputError("near plane must be positive")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation

    @classmethod
    def looking_at(cls, eye, target, up=(0.0, 1.0, 0.0), *, fov_deg=60.0,
                   width=256, height=256, near=0.01, background=(0.0, 0.0, 0.0)):
        """Convenience constructor aiming the camera from `eye` to `target`."""
        eye = np.asarray(eye, dtype=np.float64)
        fwd = np.asarray(target, dtype=np.float64) - eye
        norm = np.linalg.norm(fwd)
        if norm == 0:
            raise InvalidInputError("eye and target coincide")
        fwd = fwd / norm
        right = np.cross(fwd, np.asarray(up, dtype=np.float64))
        rnorm = np.linalg.norm(right)
        if rnorm < 1e-12:
            raise InvalidInputError("up vector is parallel to the view direction")
        right /= rnorm
        down = np.cross(fwd, right)
        rot = np.stack([right, down, fwd])
        fx = width / (2.0 * math.tan(math.radians(fov_deg) / 2.0))
        return cls(rotation=rot, translation=-rot @ eye, fx=fx, fy=fx,
                   cx=width / 2.0, cy=height / 2.0, width=width, height=height,
                   near=near, background=tuple(background))

    def to_json_dict(self) -> dict:
        return {
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height, "near": self.near,
            "background": list(self.background),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Camera":
        return cls(
            rotation=np.asarray(d["rotation"], dtype=np.float64),
            translation=np.asarray(d["translation"], dtype=np.float64),
            fx=float(d["fx"]), fy=float(d["fy"]),
            cx=float(d["cx"]), cy=float(d["cy"]),
            width=int(d["width"]), height=int(d["height"]),
            near=float(d.get("near", 0.01)),
            background=tuple(d.get("background", (0.0, 0.0, 0.0))),
        )


def load_camera(path) -> Camera:
    with open(path, "r", encoding="utf-8") as f:
        return Camera.from_json_dict(json.load(f))


def save_camera(cam: Camera, path) -> None:
    _atomic_write(path, json.dumps(cam.to_json_dict(), indent=2).encode())


@dataclass(frozen=True)
class Splat2D:
    """A projected Gaussian ready for compositing."""

    mean2d: np.ndarray    # (2,) pixel coordinates
    cov2d: np.ndarray     # (2, 2) symmetric positive definite, px^2
    depth: float          # camera-space z
    color: np.ndarray     # (3,) RGB in [0, 1]
    base_opacity: float


@dataclass(frozen=True)
class Image:
    """An HxWx3 float image with channels in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.ascontiguousarray(np.asarray(self.pixels, dtype=np.float64))
        if p.ndim != 3 or p.shape[2] != 3:
            raise InvalidInputError("pixels must be (H, W, 3)")
        p.flags.writeable = False
        object.__setattr__(self, "pixels", p)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def write_ppm(img: Image, path) -> None:
    """8-bit binary PPM (P6)."""
    u8 = np.clip(np.floor(img.pixels * 255.0 + 0.5), 0, 255).astype(np.uint8)
    header = f"P6\n{img.width} {img.height}\n255\n".encode()
    _atomic_write(path, header + u8.tobytes())


def write_raw_floats(img: Image, path) -> None:
    """Lossless float dump (.npy) for metric computation."""
    import io

    buf = io.BytesIO()
    np.save(buf, img.pixels)
    _atomic_write(path, buf.getvalue())


def load_raw_floats(path) -> Image:
    return Image(pixels=np.load(path))


def _quat_to_rotmats(q: np.ndarray) -> np.ndarray:
    """Rotation matrices from (N, 4) quaternions; normalizes defensively."""
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    m = np.empty((q.shape[0], 3, 3))
    m[:, 0, 0] = 1 - 2 * (y * y + z * z)
    m[:, 0, 1] = 2 * (x * y - w * z)
    m[:, 0, 2] = 2 * (x * z + w * y)
    m[:, 1, 0] = 2 * (x * y + w * z)
    m[:, 1, 1] = 1 - 2 * (x * x + z * z)
    m[:, 1, 2] = 2 * (y * z - w * x)
    m[:, 2, 0] = 2 * (x * z - w * y)
    m[:, 2, 1] = 2 * (y * z + w * x)
    m[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def eval_sh_colors(gset: GaussianSet, cam_center: np.ndarray) -> np.ndarray:
    """View-dependent RGB per splat from the SH blocks, clipped to [0, 1].

    The SH block of a splat is laid out coefficient-major: (deg+1)^2 triples
    of RGB. Degree 0 is view-independent.
    """
    n = len(gset)
    coeffs = gset.sh.reshape(n, -1, 3)
    color = _SH_C0 * coeffs[:, 0, :]
    if gset.sh_degree >= 1:
        d = gset.positions - cam_center[None, :]
        norms = np.linalg.norm(d, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        d = d / norms
        x, y, z = d[:, 0:1], d[:, 1:2], d[:, 2:3]
        color = color - _SH_C1 * y * coeffs[:, 1, :] + _SH_C1 * z * coeffs[:, 2, :] \
            - _SH_C1 * x * coeffs[:, 3, :]
        if gset.sh_degree >= 2:
            xx, yy, zz = x * x, y * y, z * z
            xy, yz, xz = x * y, y * z, x * z
            color = (color
                     + _SH_C2[0] * xy * coeffs[:, 4, :]
                     + _SH_C2[1] * yz * coeffs[:, 5, :]
                     + _SH_C2[2] * (2.0 * zz - xx - yy) * coeffs[:, 6, :]
                     + _SH_C2[3] * xz * coeffs[:, 7, :]
                     + _SH_C2[4] * (xx - yy) * coeffs[:, 8, :])
            if gset.sh_degree >= 3:
                color = (color
                         + _SH_C3[0] * y * (3.0 * xx - yy) * coeffs[:, 9, :]
                         + _SH_C3[1] * xy * z * coeffs[:, 10, :]
                         + _SH_C3[2] * y * (4.0 * zz - xx - yy) * coeffs[:, 11, :]
                         + _SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy) * coeffs[:, 12, :]
                         + _SH_C3[4] * x * (4.0 * zz - xx - yy) * coeffs[:, 13, :]
                         + _SH_C3[5] * z * (xx - yy) * coeffs[:, 14, :]
                         + _SH_C3[6] * x * (xx - 3.0 * yy) * coeffs[:, 15, :])
    return np.clip(color + 0.5, 0.0, 1.0)


def project_set(gset: GaussianSet, cam: Camera):
    """Project every splat; returns arrays plus the surviving input indices.

    Culls splats behind the near plane and splats whose 3-sigma screen
    footprint misses the image entirely.
    """
    n = len(gset)
    if n == 0:
        return (np.zeros((0, 2)), np.zeros((0, 2, 2)), np.zeros(0),
                np.zeros((0, 3)), np.zeros(0), np.zeros((0, 4), np.int64),
                np.zeros(0, np.int64))
    cam_pts = gset.positions @ cam.rotation.T + cam.translation
    depth = cam_pts[:, 2]
    alive = depth > cam.near

    rot = _quat_to_rotmats(gset.rotations)
    s2 = gset.scales ** 2
    cov_world = np.einsum("nij,nj,nkj->nik", rot, s2, rot)
    cov_cam = cam.rotation @ cov_world @ cam.rotation.T

    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(alive, depth, 1.0)
        u = cam.fx * cam_pts[:, 0] / z + cam.cx
        v = cam.fy * cam_pts[:, 1] / z + cam.cy
        jac = np.zeros((n, 2, 3))
        jac[:, 0, 0] = cam.fx / z
        jac[:, 0, 2] = -cam.fx * cam_pts[:, 0] / z ** 2
        jac[:, 1, 1] = cam.fy / z
        jac[:, 1, 2] = -cam.fy * cam_pts[:, 1] / z ** 2
    cov2d = np.einsum("nab,nbc,ndc->nad", jac, cov_cam, jac)
    cov2d[:, 0, 0] += COV_DILATION
    cov2d[:, 1, 1] += COV_DILATION

    a, b, c = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    lam_max = (a + c) / 2 + np.sqrt(((a - c) / 2) ** 2 + b ** 2)
    radius = np.ceil(FOOTPRINT_SIGMAS * np.sqrt(np.maximum(lam_max, 0.0)))
    x0 = np.maximum(np.floor(u - radius), 0)
    x1 = np.minimum(np.floor(u + radius) + 1, cam.width)
    y0 = np.maximum(np.floor(v - radius), 0)
    y1 = np.minimum(np.floor(v + radius) + 1, cam.height)
    alive &= (x0 < x1) & (y0 < y1)

    idx = np.nonzero(alive)[0]
    colors = eval_sh_colors(gset, cam.center)
    rects = np.stack([x0, x1, y0, y1], axis=1).astype(np.int64)
    means = np.stack([u, v], axis=1)
    return (means[idx], cov2d[idx], depth[idx], colors[idx],
            gset.opacities[idx].copy(), rects[idx], idx)


def project_gaussian(g: Gaussian, cam: Camera) -> Splat2D | None:
    """Project one splat; None when it is culled."""
    g.validate()
    gset = GaussianSet.from_gaussians([g], sh_degree=int(math.isqrt(g.sh.size // 3)) - 1)
    means, covs, depth, colors, opac, rects, idx = project_set(gset, cam)
    if idx.size == 0:
        return None
    return Splat2D(mean2d=means[0], cov2d=covs[0], depth=float(depth[0]),
                   color=colors[0], base_opacity=float(opac[0]))


@njit(cache=True, nogil=True)
def _composite(means, inv_a, inv_b, inv_c, colors, opacities, rects, width,
               height, bg):  # pragma: no cover - numba kernel
    img = np.zeros((height, width, 3), np.float64)
    trans = np.ones((height, width), np.float64)
    m = means.shape[0]
    for i in range(m):
        x0, x1, y0, y1 = rects[i, 0], rects[i, 1], rects[i, 2], rects[i, 3]
        mx, my = means[i, 0], means[i, 1]
        ia, ib, ic = inv_a[i], inv_b[i], inv_c[i]
        op = opacities[i]
        cr, cg, cb = colors[i, 0], colors[i, 1], colors[i, 2]
        for y in range(y0, y1):
            dy = y - my
            for x in range(x0, x1):
                t = trans[y, x]
                if t < TRANSMITTANCE_MIN:
                    continue
                dx = x - mx
                power = -0.5 * (ia * dx * dx + 2.0 * ib * dx * dy + ic * dy * dy)
                if power > 0.0:
                    power = 0.0
                alpha = op * np.exp(power)
                if alpha > ALPHA_CEILING:
                    alpha = ALPHA_CEILING
                if alpha <= 0.0:
                    continue
                w = t * alpha
                img[y, x, 0] += w * cr
                img[y, x, 1] += w * cg
                img[y, x, 2] += w * cb
                trans[y, x] = t * (1.0 - alpha)
    for y in range(height):
        for x in range(width):
            t = trans[y, x]
            img[y, x, 0] += t * bg[0]
            img[y, x, 1] += t * bg[1]
            img[y, x, 2] += t * bg[2]
    return img


def _composite_arrays(means, covs, depth, colors, opacities, rects, cam: Camera) -> Image:
    order = np.argsort(depth, kind="stable")
    means = np.ascontiguousarray(means[order])
    covs = covs[order]
    det = covs[:, 0, 0] * covs[:, 1, 1] - covs[:, 0, 1] ** 2
    inv_a = np.ascontiguousarray(covs[:, 1, 1] / det)
    inv_b = np.ascontiguousarray(-covs[:, 0, 1] / det)
    inv_c = np.ascontiguousarray(covs[:, 0, 0] / det)
    colors = np.ascontiguousarray(colors[order])
    opacities = np.ascontiguousarray(opacities[order])
    rects = np.ascontiguousarray(rects[order])
    bg = np.asarray(cam.background, dtype=np.float64)
    pixels = _composite(means, inv_a, inv_b, inv_c, colors, opacities, rects,
                        cam.width, cam.height, bg)
    return Image(pixels=np.clip(pixels, 0.0, 1.0))


def render(splats: list[Splat2D], cam: Camera) -> Image:
    """Composite projected splats; sorts by depth, ties by input order."""
    if not splats:
        bg = np.asarray(cam.background, dtype=np.float64)
        return Image(pixels=np.tile(bg, (cam.height, cam.width, 1)))
    means = np.stack([s.mean2d for s in splats])
    covs = np.stack([s.cov2d for s in splats])
    depth = np.array([s.depth for s in splats])
    colors = np.stack([s.color for s in splats])
    opac = np.array([s.base_opacity for s in splats])
    rects = np.empty((len(splats), 4), dtype=np.int64)
    a = covs[:, 0, 0]
    b = covs[:, 0, 1]
    c = covs[:, 1, 1]
    lam_max = (a + c) / 2 + np.sqrt(((a - c) / 2) ** 2 + b ** 2)
    radius = np.ceil(FOOTPRINT_SIGMAS * np.sqrt(np.maximum(lam_max, 0.0)))
    rects[:, 0] = np.maximum(np.floor(means[:, 0] - radius), 0)
    rects[:, 1] = np.minimum(np.floor(means[:, 0] + radius) + 1, cam.width)
    rects[:, 2] = np.maximum(np.floor(means[:, 1] - radius), 0)
    rects[:, 3] = np.minimum(np.floor(means[:, 1] + radius) + 1, cam.height)
    return _composite_arrays(means, covs, depth, colors, opac, rects, cam)


def render_set(gset: GaussianSet, cam: Camera) -> Image:
    """Project and composite a whole Gaussian set."""
    means, covs, depth, colors, opac, rects, _ = project_set(gset, cam)
    return _composite_arrays(means, covs, depth, colors, opac, rects, cam)


def render_progressive(frame: LayeredFrame, up_to_layer: int,
                       deltas, t: int, cam: Camera) -> Image:
    """Render frame t reconstructed from layers 1..up_to_layer only.

    With up_to_layer = layer_count this equals rendering the fully
    reconstructed set.
    """
    if not 1 <= up_to_layer <= frame.layer_count:
        raise InvalidInputError(f"layer {up_to_layer} out of range 1..{frame.layer_count}")
    gset = reconstruct_frame(frame, deltas, t, up_to_layer=up_to_layer)
    return render_set(gset, cam)
