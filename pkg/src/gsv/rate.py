"""Entropy models and rate/distortion loss evaluation.

Bitrates of quantized attribute symbols are predicted two ways. Keyframe
attributes have irregular distributions, so their probability mass function
comes from a kernel density estimate: a histogram is smoothed with a Gaussian
kernel by FFT convolution (bandwidth from Silverman's rule), integrated into a
CDF, and differenced at half-integers to give per-symbol mass. Inter-frame
residuals are close to Gaussian, so their PMF uses a fitted normal CDF
differenced the same way. Both feed per-symbol code-length estimates and the
layer-weighted keyframe/inter loss assemblies; everything here is a forward
evaluator with no gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtr

from . import defaults
from .errors import InvalidInputError

KEY_ATTRIBUTES = ("rotation", "scale", "sh", "opacity")
RESIDUAL_ATTRIBUTES = ("d_scale", "d_sh", "d_opacity")
ATTRIBUTE_TAGS = KEY_ATTRIBUTES + RESIDUAL_ATTRIBUTES

BANDWIDTH_FLOOR = 1e-3   # symbol units, for zero-spread inputs
STD_FLOOR = 1e-4
PROB_FLOOR = 1e-12       # inside log2, keeps tail symbols finite
MASS_TOL = 1e-3
_GRID_MIN = 1024
_GRID_MAX = 1 << 26


@dataclass(frozen=True)
class SymbolSamples:
    """Scalar symbols of one attribute, in quantized-symbol units."""

    values: np.ndarray
    attribute_tag: str

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64)).ravel()
        if self.attribute_tag not in ATTRIBUTE_TAGS:
            raise InvalidInputError(f"unknown attribute tag {self.attribute_tag!r}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("non-finite symbol values")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class PmfTable:
    """Per-symbol probability mass over an integer support range."""

    support_min: int
    support_max: int
    probs: np.ndarray

    def __post_init__(self):
        p = np.ascontiguousarray(np.asarray(self.probs, dtype=np.float64))
        if p.size != self.support_max - self.support_min + 1:
            raise InvalidInputError("probs length must match the support range")
        if np.any(p < 0):
            raise InvalidInputError("probabilities must be non-negative")
        total = float(p.sum())
        if not (1.0 - MASS_TOL) <= total <= (1.0 + MASS_TOL):
            raise InvalidInputError(f"PMF mass {total} outside 1 +- {MASS_TOL}")
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    def prob(self, symbol: int) -> float:
        if self.support_min <= symbol <= self.support_max:
            return float(self.probs[symbol - self.support_min])
        return 0.0

    def probs_for(self, symbols: np.ndarray) -> np.ndarray:
        """Mass per symbol, zero outside the support."""
        idx = np.asarray(symbols, dtype=np.int64) - self.support_min
        valid = (idx >= 0) & (idx < self.probs.size)
        out = np.zeros(idx.shape, dtype=np.float64)
        out[valid] = self.probs[idx[valid]]
        return out


@dataclass(frozen=True)
class LossWeights:
    """Weights of the layer-wise keyframe and inter loss assemblies."""

    ssim_weight: float = defaults.SSIM_WEIGHT
    key_rate_weight: float = defaults.KEY_RATE_WEIGHT
    inter_rate_weight: float = defaults.INTER_RATE_WEIGHT
    reg_weight: float = defaults.TEMPORAL_REG_WEIGHT
    per_level: tuple[float, ...] = field(
        default_factory=lambda: tuple(defaults.level_weights()))

    def __post_init__(self):
        values = (self.ssim_weight, self.key_rate_weight, self.inter_rate_weight,
                  self.reg_weight, *self.per_level)
        if any(not np.isfinite(v) or v < 0 for v in values):
            raise InvalidInputError("loss weights must be finite and >= 0")
        object.__setattr__(self, "per_level", tuple(float(v) for v in self.per_level))


def simulate_quantization(values, step_inverse: float, seed: int) -> np.ndarray:
    """Add i.i.d. uniform noise of one quantization step, U(-1/2q, 1/2q).

    Emulates rounding with step size 1/q without losing differentiability in
    a training loop; here it is a plain forward evaluator. Deterministic for a
    fixed seed; |out - in| <= 1/(2q) holds exactly.
    """
    if not np.isfinite(step_inverse) or step_inverse <= 0:
        raise InvalidInputError("quantization step parameter must be positive")
    vals = np.asarray(values, dtype=np.float64)
    rng = np.random.default_rng(seed)
    half = 1.0 / (2.0 * step_inverse)
    return vals + rng.uniform(-half, half, size=vals.shape)


def silverman_bandwidth(samples: SymbolSamples) -> float:
    """0.9 * min(sigma, IQR/1.34) * n^(-1/5), floored at 1e-3 symbol units."""
    v = samples.values
    n = v.size
    if n < 2:
        raise InvalidInputError("need at least 2 samples for a bandwidth")
    sigma = float(np.std(v, ddof=1))
    q75, q25 = np.percentile(v, [75, 25])
    spread = min(sigma, (q75 - q25) / 1.34)
    return max(0.9 * spread * n ** (-0.2), BANDWIDTH_FLOOR)


def _next_pow2(n: int) -> int:
    return 1 << max(int(n) - 1, 0).bit_length()


def kde_pmf(samples: SymbolSamples) -> PmfTable:
    """Integer-symbol PMF from an FFT-convolved kernel density estimate.

    The sample histogram spans [min - 4h, max + 4h] on a power-of-two grid of
    at least 1024 bins (at least 8 bins per bandwidth h), smoothed by circular
    FFT convolution with a discretized Gaussian kernel. The density integrates
    to one; its CDF is interpolated linearly and differenced at half-integers.
    The support covers the smoothed density's full reach (the data range plus
    the 4h margins), so the table keeps unit mass even when the bandwidth is
    much wider than one symbol.
    """
    v = samples.values
    if v.size < 2:
        raise InvalidInputError("need at least 2 samples for a PMF")
    h = silverman_bandwidth(samples)
    lo = float(v.min()) - 4.0 * h
    hi = float(v.max()) + 4.0 * h
    span = hi - lo
    m = max(_GRID_MIN, _next_pow2(int(np.ceil(8.0 * span / h))))
    if m > _GRID_MAX:
        raise InvalidInputError("degenerate grid: sample spread vastly exceeds bandwidth")
    counts, edges = np.histogram(v, bins=m, range=(lo, hi))
    dx = (hi - lo) / m
    # circular kernel centered at bin 0; margins keep wraparound negligible
    j = np.arange(m)
    dist = dx * np.minimum(j, m - j)
    kernel = np.exp(-0.5 * (dist / h) ** 2)
    kernel /= kernel.sum()
    density = np.fft.irfft(np.fft.rfft(counts) * np.fft.rfft(kernel), n=m)
    density = np.maximum(density, 0.0)
    cdf = np.concatenate([[0.0], np.cumsum(density)])
    cdf /= cdf[-1]
    support_min = int(np.rint(lo)) - 1
    support_max = int(np.rint(hi)) + 1
    ys = np.arange(support_min, support_max + 1, dtype=np.float64)
    upper = np.interp(ys + 0.5, edges, cdf, left=0.0, right=1.0)
    lower = np.interp(ys - 0.5, edges, cdf, left=0.0, right=1.0)
    return PmfTable(support_min=support_min, support_max=support_max,
                    probs=upper - lower)


def gaussian_pmf(mean: float, std: float, symbol: int) -> float:
    """Mass of one integer symbol under a discretized normal model."""
    if not (np.isfinite(mean) and np.isfinite(std)):
        raise InvalidInputError("non-finite Gaussian parameters")
    sigma = max(std, STD_FLOOR)
    return float(ndtr((symbol + 0.5 - mean) / sigma) - ndtr((symbol - 0.5 - mean) / sigma))


def gaussian_pmf_table(mean: float, std: float,
                       data_min: int, data_max: int) -> PmfTable:
    """Discretized-normal PmfTable covering the data range and +-8.5 sigma."""
    if not (np.isfinite(mean) and np.isfinite(std)):
        raise InvalidInputError("non-finite Gaussian parameters")
    sigma = max(std, STD_FLOOR)
    reach = int(np.ceil(8.5 * sigma)) + 1
    lo = min(int(data_min) - 1, int(np.floor(mean)) - reach)
    hi = max(int(data_max) + 1, int(np.ceil(mean)) + reach)
    ys = np.arange(lo, hi + 1, dtype=np.float64)
    probs = ndtr((ys + 0.5 - mean) / sigma) - ndtr((ys - 0.5 - mean) / sigma)
    return PmfTable(support_min=lo, support_max=hi, probs=probs)


def _code_length_bits(symbols: np.ndarray, table: PmfTable) -> float:
    """Total -log2 mass of the rounded symbols, with the probability floor."""
    rounded = np.rint(symbols).astype(np.int64)
    p = np.maximum(table.probs_for(rounded), PROB_FLOOR)
    return float(-np.log2(p).sum())


def rate_key(layer_attrs: Mapping[str, SymbolSamples]) -> float:
    """Mean KDE code length (bits/symbol) over keyframe attribute symbols."""
    if not layer_attrs:
        raise InvalidInputError("no attributes given")
    for tag, samples in layer_attrs.items():
        if tag not in KEY_ATTRIBUTES:
            raise InvalidInputError(f"{tag!r} is not a keyframe attribute")
        if len(samples) == 0:
            raise InvalidInputError(f"attribute {tag!r} is empty")
    total_bits = 0.0
    total_symbols = 0
    for samples in layer_attrs.values():
        table = kde_pmf(samples)
        total_bits += _code_length_bits(samples.values, table)
        total_symbols += len(samples)
    return total_bits / total_symbols


def fit_gaussian(samples: SymbolSamples) -> tuple[float, float]:
    """Maximum-likelihood (mean, std) of the samples."""
    v = samples.values
    if v.size == 0:
        raise InvalidInputError("empty samples")
    return float(v.mean()), float(v.std())


def rate_inter(residual_attrs: Mapping[str, SymbolSamples]) -> float:
    """Mean discretized-normal code length (bits/symbol) over residuals."""
    if not residual_attrs:
        raise InvalidInputError("no attributes given")
    total_bits = 0.0
    total_symbols = 0
    for tag, samples in residual_attrs.items():
        if tag not in RESIDUAL_ATTRIBUTES:
            raise InvalidInputError(f"{tag!r} is not a residual attribute")
        if len(samples) == 0:
            raise InvalidInputError(f"attribute {tag!r} is empty")
        mean, std = fit_gaussian(samples)
        rounded = np.rint(samples.values).astype(np.int64)
        table = gaussian_pmf_table(mean, std, int(rounded.min()), int(rounded.max()))
        total_bits += _code_length_bits(samples.values, table)
        total_symbols += len(samples)
    return total_bits / total_symbols


def reg_loss(residual_attrs: Mapping[str, SymbolSamples]) -> float:
    """Plain L1 sum over all residual symbols (temporal smoothness term)."""
    return float(sum(np.abs(s.values).sum() for s in residual_attrs.values()))


def color_loss(gt, pred, ssim_weight: float = defaults.SSIM_WEIGHT) -> float:
    """(1 - w) * mean|diff| + w * D-SSIM between two images."""
    from .metrics import d_ssim  # local import; metrics depends on nothing here

    if gt.pixels.shape != pred.pixels.shape:
        raise InvalidInputError("image dimensions differ")
    if not 0.0 <= ssim_weight <= 1.0:
        raise InvalidInputError("ssim_weight must lie in [0, 1]")
    l1 = float(np.abs(gt.pixels - pred.pixels).mean())
    if ssim_weight == 0.0:
        return l1
    return (1.0 - ssim_weight) * l1 + ssim_weight * d_ssim(gt, pred)


def keyframe_loss(per_level: Sequence[tuple[float, float]], weights: LossWeights) -> float:
    """Layer-weighted sum of (color + key_rate_weight * rate) terms."""
    if len(per_level) != len(weights.per_level):
        raise InvalidInputError("per_level length must match the weight list")
    return float(sum(
        lam * (color + weights.key_rate_weight * rate)
        for lam, (color, rate) in zip(weights.per_level, per_level)))


def inter_loss(per_level: Sequence[tuple[float, float, float]], weights: LossWeights) -> float:
    """Layer-weighted sum of (color + rate + temporal regularizer) terms."""
    if len(per_level) != len(weights.per_level):
        raise InvalidInputError("per_level length must match the weight list")
    return float(sum(
        lam * (color + weights.inter_rate_weight * rate + weights.reg_weight * reg)
        for lam, (color, rate, reg) in zip(weights.per_level, per_level)))
