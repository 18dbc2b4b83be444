"""Range-coder kernels: adaptive binary coding of byte streams and static
frequency-table coding of symbol streams.

The binary coder is a carry-aware 32-bit range coder. Each byte of a value is
coded through a 256-node bit-tree of adaptive probabilities (12-bit scale,
shift-5 adaptation), one tree per byte position. The first output byte is
always zero and is skipped by the decoder; encoders flush five bytes at the
end. Decoders never read past the buffer (missing bytes act as zeros), so a
truncated stream decodes to garbage that the payload checksum rejects.

Kernels are JIT-compiled with numba when available; the pure-Python paths are
identical but slow and exist so the package still functions without it.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap


PROB_ONE = 4096          # 12-bit probability scale
PROB_INIT = PROB_ONE // 2
PROB_INIT_ZERO_PATH = 3686   # nodes on the all-zero byte path start biased
ADAPT_SHIFT = 4
RC_TOP = 1 << 24
MASK32 = 0xFFFFFFFF
STATIC_SCALE_BITS = 16   # frequency tables total ~2^16


def bittree_worst_case(total_bytes: int) -> int:
    """Generous output bound; encoders also guard and report overflow."""
    return total_bytes * 10 + 64


def static_worst_case(num_symbols: int) -> int:
    """Output bound: < 17.1 bits per symbol at scale 2^16, plus flush."""
    return num_symbols * 3 + 64


@njit(cache=True, nogil=True)
def encode_bittree(data, probs, out):  # pragma: no cover - numba kernel
    """Code `data` (num, nbytes) uint8 through per-position bit-trees.

    `probs` is (nbytes, 256) int64 initialized to PROB_INIT; mutated in place.
    Returns the number of bytes written into `out`, or -1 if `out` would
    overflow (callers then fall back to a raw block).
    """
    low = 0
    rng = MASK32
    cache = 0
    cache_size = 1
    pos = 0
    limit = out.shape[0] - 8
    num, nbytes = data.shape
    for i in range(num):
        for b in range(nbytes):
            byte = data[i, b]
            ctx = 1
            for bitpos in range(7, -1, -1):
                bit = (byte >> bitpos) & 1
                p = probs[b, ctx]
                bound = (rng >> 12) * p
                if bit == 0:
                    rng = bound
                    probs[b, ctx] = p + ((PROB_ONE - p) >> ADAPT_SHIFT)
                else:
                    low += bound
                    rng -= bound
                    probs[b, ctx] = p - (p >> ADAPT_SHIFT)
                ctx = (ctx << 1) | bit
                while rng < RC_TOP:
                    # shift_low: emit the settled top byte, tracking carries
                    if pos + cache_size > limit:
                        return -1
                    lo32 = low & MASK32
                    carry = low >> 32
                    if lo32 < 0xFF000000 or carry != 0:
                        out[pos] = (cache + carry) & 0xFF
                        pos += 1
                        for _ in range(cache_size - 1):
                            out[pos] = (0xFF + carry) & 0xFF
                            pos += 1
                        cache = (lo32 >> 24) & 0xFF
                        cache_size = 0
                    cache_size += 1
                    low = (lo32 & 0x00FFFFFF) << 8
                    rng = (rng << 8) & MASK32
    for _ in range(5):
        if pos + cache_size > limit:
            return -1
        lo32 = low & MASK32
        carry = low >> 32
        if lo32 < 0xFF000000 or carry != 0:
            out[pos] = (cache + carry) & 0xFF
            pos += 1
            for _ in range(cache_size - 1):
                out[pos] = (0xFF + carry) & 0xFF
                pos += 1
            cache = (lo32 >> 24) & 0xFF
            cache_size = 0
        cache_size += 1
        low = (lo32 & 0x00FFFFFF) << 8
    return pos


@njit(cache=True, nogil=True)
def decode_bittree(buf, probs, out):  # pragma: no cover - numba kernel
    """Inverse of encode_bittree; fills `out` (num, nbytes) uint8."""
    num, nbytes = out.shape
    n = buf.shape[0]
    pos = 1  # the first emitted byte is always zero
    code = 0
    for _ in range(4):
        nxt = buf[pos] if pos < n else 0
        code = ((code << 8) | nxt) & MASK32
        pos += 1
    rng = MASK32
    for i in range(num):
        for b in range(nbytes):
            ctx = 1
            for _ in range(8):
                p = probs[b, ctx]
                bound = (rng >> 12) * p
                if code < bound:
                    bit = 0
                    rng = bound
                    probs[b, ctx] = p + ((PROB_ONE - p) >> ADAPT_SHIFT)
                else:
                    bit = 1
                    code -= bound
                    rng -= bound
                    probs[b, ctx] = p - (p >> ADAPT_SHIFT)
                ctx = (ctx << 1) | bit
                while rng < RC_TOP:
                    nxt = buf[pos] if pos < n else 0
                    code = ((code << 8) | nxt) & MASK32
                    pos += 1
                    rng = (rng << 8) & MASK32
            out[i, b] = ctx & 0xFF
    return pos


@njit(cache=True, nogil=True)
def encode_static(symbols, cum, out):  # pragma: no cover - numba kernel
    """Code symbol indices against a frozen cumulative frequency table.

    Returns the number of bytes written, or -1 on output overflow.
    """
    low = 0
    rng = MASK32
    cache = 0
    cache_size = 1
    pos = 0
    limit = out.shape[0] - 8
    total = cum[-1]
    for i in range(symbols.shape[0]):
        s = symbols[i]
        r = rng // total
        low += r * cum[s]
        rng = r * (cum[s + 1] - cum[s])
        while rng < RC_TOP:
            if pos + cache_size > limit:
                return -1
            lo32 = low & MASK32
            carry = low >> 32
            if lo32 < 0xFF000000 or carry != 0:
                out[pos] = (cache + carry) & 0xFF
                pos += 1
                for _ in range(cache_size - 1):
                    out[pos] = (0xFF + carry) & 0xFF
                    pos += 1
                cache = (lo32 >> 24) & 0xFF
                cache_size = 0
            cache_size += 1
            low = (lo32 & 0x00FFFFFF) << 8
            rng = (rng << 8) & MASK32
    for _ in range(5):
        if pos + cache_size > limit:
            return -1
        lo32 = low & MASK32
        carry = low >> 32
        if lo32 < 0xFF000000 or carry != 0:
            out[pos] = (cache + carry) & 0xFF
            pos += 1
            for _ in range(cache_size - 1):
                out[pos] = (0xFF + carry) & 0xFF
                pos += 1
            cache = (lo32 >> 24) & 0xFF
            cache_size = 0
        cache_size += 1
        low = (lo32 & 0x00FFFFFF) << 8
    return pos


@njit(cache=True, nogil=True)
def decode_static(buf, cum, out):  # pragma: no cover - numba kernel
    """Inverse of encode_static; fills `out` with symbol indices."""
    n = buf.shape[0]
    pos = 1
    code = 0
    for _ in range(4):
        nxt = buf[pos] if pos < n else 0
        code = ((code << 8) | nxt) & MASK32
        pos += 1
    rng = MASK32
    total = cum[-1]
    nsym = cum.shape[0] - 1
    for i in range(out.shape[0]):
        r = rng // total
        v = code // r
        if v >= total:
            v = total - 1
        # binary search: largest s with cum[s] <= v
        lo = 0
        hi = nsym
        while hi - lo > 1:
            mid = (lo + hi) >> 1
            if cum[mid] > v:
                hi = mid
            else:
                lo = mid
        s = lo
        code -= r * cum[s]
        rng = r * (cum[s + 1] - cum[s])
        out[i] = s
        while rng < RC_TOP:
            nxt = buf[pos] if pos < n else 0
            code = ((code << 8) | nxt) & MASK32
            pos += 1
            rng = (rng << 8) & MASK32
    return pos


@njit(cache=True, nogil=True)
def plane_residuals(plane, prev, has_prev, bits):  # pragma: no cover - kernel
    """Prediction residuals of one plane, scan order (y, x).

    Predictor per sample: the previous plane's co-located sample when one
    exists (temporal), else the left neighbor, else the sample above, else
    128 scaled to the bit width. Residuals are wrapped into
    [-2^(bits-1), 2^(bits-1)) so that, once zigzag-mapped, every sample codes
    in exactly bits/8 bytes.
    """
    h, w = plane.shape
    default = 128 << (bits - 8)
    half = 1 << (bits - 1)
    full = 1 << bits
    out = np.empty(h * w, np.int64)
    idx = 0
    for y in range(h):
        for x in range(w):
            if has_prev:
                pred = prev[y, x]
            elif x > 0:
                pred = plane[y, x - 1]
            elif y > 0:
                pred = plane[y - 1, x]
            else:
                pred = default
            r = plane[y, x] - pred
            r = ((r + half) % full) - half
            out[idx] = r
            idx += 1
    return out


@njit(cache=True, nogil=True)
def plane_from_residuals(residuals, prev, has_prev, h, w, bits):  # pragma: no cover
    """Rebuild one plane from wrapped prediction residuals (inverse scan)."""
    default = 128 << (bits - 8)
    mask = (1 << bits) - 1
    plane = np.empty((h, w), np.int64)
    idx = 0
    for y in range(h):
        for x in range(w):
            if has_prev:
                pred = prev[y, x]
            elif x > 0:
                pred = plane[y, x - 1]
            elif y > 0:
                pred = plane[y - 1, x]
            else:
                pred = default
            plane[y, x] = (pred + residuals[idx]) & mask
            idx += 1
    return plane


def new_bittree_probs(nbytes: int) -> np.ndarray:
    """Fresh per-byte-position bit-tree states.

    Residuals cluster hard around zero on well-predicted planes, so the eight
    tree nodes that an all-zero byte walks (ctx 1, 2, 4, ..., 128) start with
    a strong zero bias; everything else starts at one half. This is part of
    the coded-stream definition: encoder and decoder must match it exactly.
    """
    probs = np.full((nbytes, 256), PROB_INIT, dtype=np.int64)
    ctx = 1
    for _ in range(8):
        probs[:, ctx] = PROB_INIT_ZERO_PATH
        ctx <<= 1
    return probs


def zigzag(values: np.ndarray) -> np.ndarray:
    """Signed to unsigned: 0,-1,1,-2,2,... -> 0,1,2,3,4,..."""
    v = values.astype(np.int64)
    return np.where(v >= 0, 2 * v, -2 * v - 1)


def unzigzag(values: np.ndarray) -> np.ndarray:
    v = values.astype(np.int64)
    return np.where(v & 1, -((v + 1) // 2), v // 2)
