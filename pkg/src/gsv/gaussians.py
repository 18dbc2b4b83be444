"""Gaussian scene model: splat records, significance ranking, layering, pruning.

A scene frame is a set of anisotropic 3D Gaussians. Each one carries a center
position, a unit quaternion orientation, per-axis radii, an opacity and a block
of spherical-harmonic color coefficients. Keyframes are partitioned into nested
significance layers so that decoding any prefix of layers yields a valid,
lower-detail reconstruction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError

ROTATION_NORM_TOL = 1e-6
FRACTION_SUM_TOL = 1e-9


def sh_coeff_count(sh_degree: int) -> int:
    """Number of SH color coefficients (all three channels) for a degree."""
    if sh_degree not in (0, 1, 2, 3):
        raise InvalidInputError(f"sh_degree must be 0..3, got {sh_degree}")
    return 3 * (sh_degree + 1) ** 2


@dataclass(frozen=True)
class Gaussian:
    """One splat: position, orientation, radii, opacity, SH color block."""

    position: np.ndarray  # (3,)
    rotation: np.ndarray  # (4,) quaternion, (w, x, y, z)
    scales: np.ndarray    # (3,) principal-axis radii, positive
    opacity: float
    sh: np.ndarray        # (3*(deg+1)**2,)

    def validate(self) -> None:
        for name in ("position", "rotation", "scales", "sh"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"non-finite {name}")
        if self.position.shape != (3,) or self.scales.shape != (3,):
            raise InvalidInputError("position and scales must be 3-vectors")
        if self.rotation.shape != (4,):
            raise InvalidInputError("rotation must be a quaternion (w,x,y,z)")
        if abs(np.linalg.norm(self.rotation) - 1.0) > ROTATION_NORM_TOL:
            raise InvalidInputError("rotation quaternion must be unit-norm")
        if np.any(self.scales <= 0):
            raise InvalidInputError("scales must be positive")
        if not np.isfinite(self.opacity) or not 0.0 <= self.opacity <= 1.0:
            raise InvalidInputError("opacity must lie in [0, 1]")
        if self.sh.shape[0] % 3 != 0:
            raise InvalidInputError("sh length must be a multiple of 3")


@dataclass(frozen=True)
class GaussianSet:
    """An ordered collection of Gaussians stored as column arrays.

    Arrays are frozen after construction; every operation returns a new set.
    Sets produced by the container decoder carry dequantized values, so their
    rotation norms are unit only up to the quantization step; `validate`
    checks the strict source-data invariants.
    """

    positions: np.ndarray   # (N, 3) float64
    rotations: np.ndarray   # (N, 4) float64
    scales: np.ndarray      # (N, 3) float64
    opacities: np.ndarray   # (N,)   float64
    sh: np.ndarray          # (N, 3*(deg+1)**2) float64
    sh_degree: int

    def __post_init__(self):
        n = self.positions.shape[0]
        expected = {
            "positions": (n, 3),
            "rotations": (n, 4),
            "scales": (n, 3),
            "opacities": (n,),
            "sh": (n, sh_coeff_count(self.sh_degree)),
        }
        for name, shape in expected.items():
            arr = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.float64))
            if arr.shape != shape:
                raise InvalidInputError(f"{name} has shape {arr.shape}, expected {shape}")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned (min, max) corners of the positions."""
        if len(self) == 0:
            raise InvalidInputError("empty set has no bounds")
        return self.positions.min(axis=0), self.positions.max(axis=0)

    def gaussian(self, i: int) -> Gaussian:
        return Gaussian(
            position=self.positions[i].copy(),
            rotation=self.rotations[i].copy(),
            scales=self.scales[i].copy(),
            opacity=float(self.opacities[i]),
            sh=self.sh[i].copy(),
        )

    def take(self, indices) -> "GaussianSet":
        """New set holding the given rows, in the given order."""
        idx = np.asarray(indices, dtype=np.int64)
        return GaussianSet(
            positions=self.positions[idx],
            rotations=self.rotations[idx],
            scales=self.scales[idx],
            opacities=self.opacities[idx],
            sh=self.sh[idx],
            sh_degree=self.sh_degree,
        )

    def validate(self) -> None:
        if len(self) == 0:
            raise InvalidInputError("empty set")
        for name in ("positions", "rotations", "scales", "opacities", "sh"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvalidInputError(f"non-finite {name}")
        norms = np.linalg.norm(self.rotations, axis=1)
        if np.any(np.abs(norms - 1.0) > ROTATION_NORM_TOL):
            raise InvalidInputError("rotations must be unit quaternions")
        if np.any(self.scales <= 0):
            raise InvalidInputError("scales must be positive")
        if np.any(self.opacities < 0) or np.any(self.opacities > 1):
            raise InvalidInputError("opacities must lie in [0, 1]")

    @classmethod
    def from_gaussians(cls, gaussians: Iterable[Gaussian], sh_degree: int) -> "GaussianSet":
        gs = list(gaussians)
        if not gs:
            raise InvalidInputError("empty set")
        return cls(
            positions=np.stack([g.position for g in gs]),
            rotations=np.stack([g.rotation for g in gs]),
            scales=np.stack([g.scales for g in gs]),
            opacities=np.array([g.opacity for g in gs]),
            sh=np.stack([g.sh for g in gs]),
            sh_degree=sh_degree,
        )


def concat_sets(sets: Sequence[GaussianSet]) -> GaussianSet:
    """Concatenate sets that share one SH degree, preserving order."""
    if not sets:
        raise InvalidInputError("nothing to concatenate")
    deg = sets[0].sh_degree
    if any(s.sh_degree != deg for s in sets):
        raise InvalidInputError("mixed SH degrees")
    return GaussianSet(
        positions=np.concatenate([s.positions for s in sets]),
        rotations=np.concatenate([s.rotations for s in sets]),
        scales=np.concatenate([s.scales for s in sets]),
        opacities=np.concatenate([s.opacities for s in sets]),
        sh=np.concatenate([s.sh for s in sets]),
        sh_degree=deg,
    )


@dataclass(frozen=True)
class LayeredFrame:
    """A keyframe split into nested significance layers.

    Concatenating the layers reproduces the source set as a multiset, ordered
    by non-increasing significance across layer boundaries. Layer 1 holds the
    most significant Gaussians; each further layer refines the reconstruction.
    """

    layers: tuple[GaussianSet, ...]
    layer_fractions: tuple[float, ...]
    volume_weight: float

    def __post_init__(self):
        if len(self.layers) < 1:
            raise InvalidInputError("at least one layer required")
        if len(self.layer_fractions) != len(self.layers):
            raise InvalidInputError("one fraction per layer required")

    @property
    def layer_count(self) -> int:
        return len(self.layers)

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.layers)

    def flatten(self, up_to: int | None = None) -> GaussianSet:
        """Concatenation of layers 1..up_to (all layers when omitted)."""
        l = self.layer_count if up_to is None else up_to
        if not 1 <= l <= self.layer_count:
            raise InvalidInputError(f"layer index {l} out of range 1..{self.layer_count}")
        return concat_sets(self.layers[:l])


def significance(g: Gaussian, volume_weight: float) -> float:
    """Perceptual significance of one splat: opacity plus weighted volume.

    The volume term is the ellipsoid volume 4/3*pi*a*b*c spanned by the three
    radii, so large structural splats rank high even at moderate opacity.
    """
    g.validate()
    if not np.isfinite(volume_weight) or volume_weight < 0:
        raise InvalidInputError("volume_weight must be finite and >= 0")
    volume = (4.0 / 3.0) * np.pi * float(np.prod(g.scales))
    return float(g.opacity + volume_weight * volume)


def significance_values(gset: GaussianSet, volume_weight: float) -> np.ndarray:
    """Vectorized significance for every member of a set."""
    if not np.isfinite(volume_weight) or volume_weight < 0:
        raise InvalidInputError("volume_weight must be finite and >= 0")
    volumes = (4.0 / 3.0) * np.pi * np.prod(gset.scales, axis=1)
    values = gset.opacities + volume_weight * volumes
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("non-finite significance values")
    return values


def significance_order(gset: GaussianSet, volume_weight: float) -> np.ndarray:
    """Indices sorting the set by significance, descending, stable by index."""
    psi = significance_values(gset, volume_weight)
    # stable ascending sort on -psi keeps original index order within ties
    return np.argsort(-psi, kind="stable")


def layer_sizes_for(n: int, fractions: Sequence[float]) -> list[int]:
    """Split n members into per-layer counts: round(f*n) each, remainder last."""
    fractions = list(fractions)
    if len(fractions) < 1:
        raise InvalidInputError("need at least one fraction")
    if any(f <= 0 for f in fractions):
        raise InvalidInputError("fractions must be positive")
    if abs(sum(fractions) - 1.0) > FRACTION_SUM_TOL:
        raise InvalidInputError("fractions must sum to 1")
    sizes = []
    remaining = n
    for f in fractions[:-1]:
        k = int(np.floor(f * n + 0.5))  # round half away from zero; f*n >= 0
        k = min(k, remaining)
        sizes.append(k)
        remaining -= k
    sizes.append(remaining)
    return sizes


def partition_layers(
    gset: GaussianSet,
    layer_count: int,
    fractions: Sequence[float],
    volume_weight: float,
) -> LayeredFrame:
    """Sort by descending significance and split into nested layers.

    Ties are broken by original index so repeated encodes produce identical
    bitstreams. Layer l receives round(fraction_l * N) members; any rounding
    remainder lands in the last layer.
    """
    if layer_count < 1:
        raise InvalidInputError("layer_count must be >= 1")
    if len(fractions) != layer_count:
        raise InvalidInputError("fraction list length must equal layer_count")
    if len(gset) == 0:
        raise InvalidInputError("empty set")
    order = significance_order(gset, volume_weight)
    sizes = layer_sizes_for(len(gset), fractions)
    layers = []
    start = 0
    for k in sizes:
        layers.append(gset.take(order[start:start + k]))
        start += k
    return LayeredFrame(
        layers=tuple(layers),
        layer_fractions=tuple(float(f) for f in fractions),
        volume_weight=float(volume_weight),
    )


def prune_keep_indices(gset: GaussianSet, fraction: float) -> np.ndarray:
    """Indices (ascending) of the survivors after dropping the lowest-opacity
    floor(fraction*N) members. Among equal opacities the higher original index
    is removed first."""
    if not 0.0 <= fraction < 1.0:
        raise InvalidInputError("fraction must lie in [0, 1)")
    n = len(gset)
    k = int(np.floor(fraction * n))
    if k == 0:
        return np.arange(n, dtype=np.int64)
    # ascending opacity, ties resolved so that higher index sorts first
    order = np.lexsort((-np.arange(n), gset.opacities))
    removed = order[:k]
    mask = np.ones(n, dtype=bool)
    mask[removed] = False
    return np.nonzero(mask)[0].astype(np.int64)


def prune_low_opacity(gset: GaussianSet, fraction: float) -> GaussianSet:
    """Drop the floor(fraction*N) lowest-opacity members, keeping input order."""
    return gset.take(prune_keep_indices(gset, fraction))
