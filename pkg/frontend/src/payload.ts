/**
 * Coded-payload decoder, held bit-exact to the reference implementation by
 * the fixtures in ../conformance/.
 *
 * Payload layout (little-endian): codec u8, bits u8, W u16, H u16, count u16,
 * reserved u16, length u32, body, crc32 of the decoded samples' bytes.
 * Codec 0 is a verbatim sample dump. Codec 1 starts its body with a run flag
 * (1 = whole run verbatim, 0 = per-plane mode bytes follow), predicts each
 * sample from the previous plane / left / above / a bit-width-scaled 128,
 * wraps residuals mod 2^bits, zigzag-maps them and codes each byte through an
 * adaptive bit-tree driven by a 32-bit binary range coder. Models persist
 * across the run's coded planes; verbatim planes leave them untouched.
 */

const PROB_ONE = 4096;
const PROB_INIT = 2048;
const PROB_INIT_ZERO_PATH = 3686;
const ADAPT_SHIFT = 4;
const RC_TOP = 1 << 24;
const MODE_RC = 0;
const MODE_RAW = 1;

export interface CodedPayload {
  codecId: number;
  bits: number;
  width: number;
  height: number;
  count: number;
  body: Uint8Array;
  checksum: number;
}

export class CodecError extends Error {}

export function parsePayload(data: Uint8Array, offset = 0): { payload: CodedPayload; end: number } {
  if (data.length - offset < 14) {
    throw new CodecError("payload header truncated");
  }
  const view = new DataView(data.buffer, data.byteOffset + offset);
  const codecId = view.getUint8(0);
  const bits = view.getUint8(1);
  const width = view.getUint16(2, true);
  const height = view.getUint16(4, true);
  const count = view.getUint16(6, true);
  const length = view.getUint32(10, true);
  const end = offset + 14 + length + 4;
  if (data.length < end) {
    throw new CodecError("payload body truncated");
  }
  const body = data.subarray(offset + 14, offset + 14 + length);
  const checksum = view.getUint32(14 + length, true);
  return { payload: { codecId, bits, width, height, count, body, checksum }, end };
}

export function parsePayloadStream(data: Uint8Array): CodedPayload[] {
  const out: CodedPayload[] = [];
  let offset = 0;
  while (offset < data.length) {
    const { payload, end } = parsePayload(data, offset);
    out.push(payload);
    offset = end;
  }
  return out;
}

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

export function crc32(data: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < data.length; i++) {
    c = CRC_TABLE[(c ^ data[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

/** Fresh bit-tree states; the all-zero byte path starts biased toward zero. */
function newProbs(nbytes: number): Int32Array {
  const probs = new Int32Array(nbytes * 256).fill(PROB_INIT);
  for (let b = 0; b < nbytes; b++) {
    let ctx = 1;
    for (let level = 0; level < 8; level++) {
      probs[b * 256 + ctx] = PROB_INIT_ZERO_PATH;
      ctx <<= 1;
    }
  }
  return probs;
}

/** Binary range decoder over per-byte-position adaptive bit-trees. */
function decodeBittree(buf: Uint8Array, probs: Int32Array, num: number, nbytes: number): Uint8Array {
  const out = new Uint8Array(num * nbytes);
  const n = buf.length;
  let pos = 1; // the first emitted byte is always zero
  let code = 0;
  for (let i = 0; i < 4; i++) {
    const next = pos < n ? buf[pos] : 0;
    code = ((code << 8) | next) >>> 0;
    pos += 1;
  }
  let rng = 0xffffffff;
  for (let i = 0; i < num; i++) {
    for (let b = 0; b < nbytes; b++) {
      let ctx = 1;
      for (let bit = 0; bit < 8; bit++) {
        const slot = b * 256 + ctx;
        const p = probs[slot];
        // rng < 2^32 and p < 2^12, so the product stays exact in a double
        const bound = (rng >>> 12) * p;
        if (code < bound) {
          rng = bound;
          probs[slot] = p + ((PROB_ONE - p) >> ADAPT_SHIFT);
          ctx = ctx << 1;
        } else {
          code -= bound;
          rng -= bound;
          probs[slot] = p - (p >> ADAPT_SHIFT);
          ctx = (ctx << 1) | 1;
        }
        while (rng < RC_TOP) {
          const next = pos < n ? buf[pos] : 0;
          code = ((code << 8) | next) >>> 0;
          pos += 1;
          rng = (rng << 8) >>> 0;
        }
      }
      out[i * nbytes + b] = ctx & 0xff;
    }
  }
  return out;
}

function unzigzag(z: number): number {
  return z % 2 === 1 ? -((z + 1) / 2) : z / 2;
}

function residualBytesPer(bits: number): number {
  return bits / 8;
}

/**
 * Rebuild one plane from its coded residual bytes; `prev` is the previous
 * plane of the run (temporal predictor) or null for the first plane.
 */
function planeFromResiduals(
  data: Uint8Array,
  nbytes: number,
  prev: Float64Array | null,
  h: number,
  w: number,
  bits: number,
): Float64Array {
  const defaultPred = 128 * 2 ** (bits - 8);
  const modulus = 2 ** bits;
  const plane = new Float64Array(h * w);
  let idx = 0;
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      let z = 0;
      for (let b = nbytes - 1; b >= 0; b--) {
        z = z * 256 + data[idx * nbytes + b];
      }
      const r = unzigzag(z);
      let pred: number;
      if (prev !== null) {
        pred = prev[idx];
      } else if (x > 0) {
        pred = plane[idx - 1];
      } else if (y > 0) {
        pred = plane[idx - w];
      } else {
        pred = defaultPred;
      }
      plane[idx] = (((pred + r) % modulus) + modulus) % modulus;
      idx += 1;
    }
  }
  return plane;
}

function readRawPlane(bytes: Uint8Array, bits: number, n: number): Float64Array {
  const item = bits / 8;
  const out = new Float64Array(n);
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  for (let i = 0; i < n; i++) {
    if (bits === 8) out[i] = view.getUint8(i);
    else if (bits === 16) out[i] = view.getUint16(i * item, true);
    else out[i] = view.getUint32(i * item, true);
  }
  return out;
}

function sampleBytes(planes: Float64Array[], bits: number): Uint8Array {
  const item = bits / 8;
  const per = planes[0].length;
  const out = new Uint8Array(planes.length * per * item);
  const view = new DataView(out.buffer);
  let o = 0;
  for (const plane of planes) {
    for (let i = 0; i < per; i++, o += item) {
      if (bits === 8) view.setUint8(o, plane[i]);
      else if (bits === 16) view.setUint16(o, plane[i], true);
      else view.setUint32(o, plane[i], true);
    }
  }
  return out;
}

/** Decode every plane of a payload as row-major sample arrays. */
export function decodePlanes(payload: CodedPayload): Float64Array[] {
  const { bits, width: w, height: h, count } = payload;
  if (bits !== 8 && bits !== 16 && bits !== 32) {
    throw new CodecError(`bad bit width ${bits}`);
  }
  const per = h * w;
  const item = bits / 8;
  const planes: Float64Array[] = [];
  if (payload.codecId === 0) {
    if (payload.body.length !== count * per * item) {
      throw new CodecError("raw body length mismatch");
    }
    for (let f = 0; f < count; f++) {
      planes.push(readRawPlane(payload.body.subarray(f * per * item, (f + 1) * per * item), bits, per));
    }
  } else if (payload.codecId === 1) {
    if (payload.body.length === 0) throw new CodecError("empty body");
    const flag = payload.body[0];
    const coded = payload.body.subarray(1);
    if (flag === 1) {
      if (coded.length !== count * per * item) {
        throw new CodecError("raw fallback length mismatch");
      }
      for (let f = 0; f < count; f++) {
        planes.push(readRawPlane(coded.subarray(f * per * item, (f + 1) * per * item), bits, per));
      }
    } else if (flag === 0) {
      if (coded.length < count) throw new CodecError("mode table truncated");
      const modes = coded.subarray(0, count);
      let pos = count;
      const nbytes = residualBytesPer(bits);
      const probs = newProbs(nbytes);
      for (let f = 0; f < count; f++) {
        const prev = f > 0 ? planes[f - 1] : null;
        if (modes[f] === MODE_RAW) {
          const end = pos + per * item;
          if (end > coded.length) throw new CodecError("raw plane block truncated");
          planes.push(readRawPlane(coded.subarray(pos, end), bits, per));
          pos = end;
        } else if (modes[f] === MODE_RC) {
          if (pos + 4 > coded.length) throw new CodecError("plane length truncated");
          const view = new DataView(coded.buffer, coded.byteOffset + pos);
          const length = view.getUint32(0, true);
          pos += 4;
          const end = pos + length;
          if (end > coded.length) throw new CodecError("coded plane block truncated");
          const data = decodeBittree(coded.subarray(pos, end), probs, per, nbytes);
          planes.push(planeFromResiduals(data, nbytes, prev, h, w, bits));
          pos = end;
        } else {
          throw new CodecError(`unknown plane mode ${modes[f]}`);
        }
      }
      if (pos !== coded.length) throw new CodecError("trailing bytes after planes");
    } else {
      throw new CodecError(`unknown body flag ${flag}`);
    }
  } else {
    throw new CodecError(`unsupported codec id ${payload.codecId}`);
  }
  if (crc32(sampleBytes(planes, bits)) !== payload.checksum) {
    throw new CodecError("checksum mismatch (corrupt or truncated payload)");
  }
  return planes;
}

/** Inverse of the quantizer: code 0 maps to rangeMin, the top code to rangeMax. */
export function dequantize(codes: Float64Array, bits: number, rangeMin: number, rangeMax: number): Float64Array {
  const top = 2 ** bits - 1;
  const out = new Float64Array(codes.length);
  for (let i = 0; i < codes.length; i++) {
    out[i] = rangeMin + (codes[i] / top) * (rangeMax - rangeMin);
  }
  return out;
}
