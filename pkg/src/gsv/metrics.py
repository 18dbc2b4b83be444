"""Image quality and rate-distortion comparison metrics.

PSNR and SSIM follow their textbook definitions on [0,1] images (SSIM with an
11x11 Gaussian window, sigma 1.5, over valid window positions). Curve
comparisons use the Bjontegaard construction: fit a polynomial of PSNR against
log10(rate) (or the inverse for rate deltas), integrate the difference over
the curves' overlapping interval, and report the average.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import convolve2d

from .errors import InvalidInputError
from .render import Image
from .splatio import _atomic_write

PSNR_CAP = 99.0
_SSIM_C1 = 0.01 ** 2
_SSIM_C2 = 0.03 ** 2
_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5


def psnr(gt: Image, pred: Image) -> float:
    """10*log10(1/MSE) over all channels, capped at 99 dB for exact matches."""
    if gt.pixels.shape != pred.pixels.shape:
        raise InvalidInputError("image dimensions differ")
    mse = float(np.mean((gt.pixels - pred.pixels) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP)


def _ssim_kernel() -> np.ndarray:
    half = (_SSIM_WINDOW - 1) / 2.0
    x = np.arange(_SSIM_WINDOW) - half
    g = np.exp(-(x ** 2) / (2.0 * _SSIM_SIGMA ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(gt: Image, pred: Image) -> float:
    """Mean structural similarity of the grayscale (channel-mean) images."""
    if gt.pixels.shape != pred.pixels.shape:
        raise InvalidInputError("image dimensions differ")
    if gt.height < _SSIM_WINDOW or gt.width < _SSIM_WINDOW:
        raise InvalidInputError("image smaller than the SSIM window")
    x = gt.pixels.mean(axis=2)
    y = pred.pixels.mean(axis=2)
    k = _ssim_kernel()

    mu_x = convolve2d(x, k, mode="valid")
    mu_y = convolve2d(y, k, mode="valid")
    var_x = convolve2d(x * x, k, mode="valid") - mu_x ** 2
    var_y = convolve2d(y * y, k, mode="valid") - mu_y ** 2
    cov = convolve2d(x * y, k, mode="valid") - mu_x * mu_y
    num = (2 * mu_x * mu_y + _SSIM_C1) * (2 * cov + _SSIM_C2)
    den = (mu_x ** 2 + mu_y ** 2 + _SSIM_C1) * (var_x + var_y + _SSIM_C2)
    return float(np.mean(num / den))


def d_ssim(gt: Image, pred: Image) -> float:
    """(1 - SSIM) / 2, the dissimilarity used inside the color loss."""
    return (1.0 - ssim(gt, pred)) / 2.0


@dataclass(frozen=True)
class RdPoint:
    """One operating point: a positive rate and its quality in dB."""

    rate: float
    psnr: float
    rate_unit: str = "MB/frame"

    def __post_init__(self):
        if not (np.isfinite(self.rate) and self.rate > 0):
            raise InvalidInputError("rate must be positive")
        if not np.isfinite(self.psnr):
            raise InvalidInputError("psnr must be finite")


@dataclass(frozen=True)
class RdCurve:
    points: tuple[RdPoint, ...]

    def __post_init__(self):
        pts = tuple(self.points)
        if len(pts) < 2:
            raise InvalidInputError("a curve needs at least two points")
        rates = [p.rate for p in pts]
        if any(r2 <= r1 for r1, r2 in zip(rates, rates[1:])):
            raise InvalidInputError("rates must be strictly increasing")
        units = {p.rate_unit for p in pts}
        if len(units) != 1:
            raise InvalidInputError("mixed rate units in one curve")
        object.__setattr__(self, "points", pts)

    @property
    def rates(self) -> np.ndarray:
        return np.array([p.rate for p in self.points])

    @property
    def psnrs(self) -> np.ndarray:
        return np.array([p.psnr for p in self.points])


def _fit_degree(anchor: RdCurve, test: RdCurve) -> int:
    return min(3, len(anchor.points) - 1, len(test.points) - 1)


def bd_psnr(anchor: RdCurve, test: RdCurve) -> float:
    """Average PSNR gain of `test` over `anchor` at equal rate, in dB."""
    deg = _fit_degree(anchor, test)
    la, lt = np.log10(anchor.rates), np.log10(test.rates)
    pa = np.polyfit(la, anchor.psnrs, deg)
    pt = np.polyfit(lt, test.psnrs, deg)
    lo = max(la.min(), lt.min())
    hi = min(la.max(), lt.max())
    if hi <= lo:
        raise InvalidInputError("curves have no overlapping rate range")
    ia, it = np.polyint(pa), np.polyint(pt)
    int_a = np.polyval(ia, hi) - np.polyval(ia, lo)
    int_t = np.polyval(it, hi) - np.polyval(it, lo)
    return float((int_t - int_a) / (hi - lo))


def bdbr(anchor: RdCurve, test: RdCurve) -> float:
    """Average rate change of `test` against `anchor` at equal quality, in
    percent; negative means the test curve needs less rate."""
    deg = _fit_degree(anchor, test)
    pa = np.polyfit(anchor.psnrs, np.log10(anchor.rates), deg)
    pt = np.polyfit(test.psnrs, np.log10(test.rates), deg)
    lo = max(anchor.psnrs.min(), test.psnrs.min())
    hi = min(anchor.psnrs.max(), test.psnrs.max())
    if hi <= lo:
        raise InvalidInputError("curves have no overlapping quality range")
    ia, it = np.polyint(pa), np.polyint(pt)
    int_a = np.polyval(ia, hi) - np.polyval(ia, lo)
    int_t = np.polyval(it, hi) - np.polyval(it, lo)
    avg_log_diff = (int_t - int_a) / (hi - lo)
    avg_log_diff = min(avg_log_diff, 200.0)
    return float((10.0 ** avg_log_diff - 1.0) * 100.0)


def write_rd_csv(curve: RdCurve, path) -> None:
    """CSV rows of "rate_unit,rate,psnr"."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["rate_unit", "rate", "psnr"])
    for p in curve.points:
        writer.writerow([p.rate_unit, repr(p.rate), repr(p.psnr)])
    _atomic_write(path, buf.getvalue().encode())


def read_rd_csv(path) -> RdCurve:
    with open(path, "r", encoding="utf-8", newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != ["rate_unit", "rate", "psnr"]:
        raise InvalidInputError("bad RD CSV header")
    points = [RdPoint(rate=float(r[1]), psnr=float(r[2]), rate_unit=r[0])
              for r in rows[1:] if r]
    return RdCurve(points=tuple(points))
