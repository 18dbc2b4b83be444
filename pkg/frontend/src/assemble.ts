/**
 * Turn decoded segment payloads back into per-frame splat attribute arrays.
 *
 * A segment holds one payload per channel, in the manifest's channel order
 * for that (group, layer). Each payload decodes to `frames` planes; the
 * first gauss_counts[layer] samples of a plane are that channel's column for
 * one frame. Layers concatenate in order, so a prefix of layers yields a
 * valid lower-detail splat set per frame.
 */

import { Manifest } from "./manifest.js";
import { decodePlanes, dequantize, parsePayloadStream } from "./payload.js";

export interface FrameSplats {
  count: number;
  shDegree: number;
  positions: Float64Array; // (n, 3) flattened
  rotations: Float64Array; // (n, 4)
  scales: Float64Array;    // (n, 3)
  opacities: Float64Array; // (n,)
  sh: Float64Array;        // (n, 3*(deg+1)^2)
}

const WIDTHS: Record<string, (shDim: number) => number> = {
  position: () => 3,
  rotation: () => 4,
  scales: () => 3,
  opacity: () => 1,
  sh: (shDim) => shDim,
};

export function shCoeffCount(degree: number): number {
  return 3 * (degree + 1) ** 2;
}

/** Per-channel dequantized columns: columns[frame][attr][comp] = values. */
export function decodeSegment(
  manifest: Manifest,
  group: number,
  layer: number,
  blob: Uint8Array,
): Map<string, Float64Array[]> {
  const g = manifest.groups[group];
  const channels = g.channels[layer - 1];
  const n = g.gauss_counts[layer - 1];
  const payloads = parsePayloadStream(blob);
  if (payloads.length !== channels.length) {
    throw new Error(
      `segment ${group}/${layer}: ${payloads.length} payloads for ${channels.length} channels`,
    );
  }
  const columns = new Map<string, Float64Array[]>();
  for (let c = 0; c < channels.length; c++) {
    const ch = channels[c];
    const planes = decodePlanes(payloads[c]);
    const perFrame: Float64Array[] = planes.map((plane) =>
      dequantize(plane.subarray(0, n), ch.bits, ch.min, ch.max),
    );
    columns.set(`${ch.attr}[${ch.comp}]`, perFrame);
  }
  return columns;
}

/**
 * Assemble the frames of one group from the decoded layer columns
 * (layers 1..L in order).
 */
export function assembleFrames(
  manifest: Manifest,
  group: number,
  layers: Map<string, Float64Array[]>[],
): FrameSplats[] {
  const g = manifest.groups[group];
  const shDim = shCoeffCount(manifest.sh_degree);
  const counts = layers.map((_, i) => g.gauss_counts[i]);
  const total = counts.reduce((a, b) => a + b, 0);
  const frames: FrameSplats[] = [];
  for (let f = 0; f < g.frames; f++) {
    const splats: FrameSplats = {
      count: total,
      shDegree: manifest.sh_degree,
      positions: new Float64Array(total * 3),
      rotations: new Float64Array(total * 4),
      scales: new Float64Array(total * 3),
      opacities: new Float64Array(total),
      sh: new Float64Array(total * shDim),
    };
    let base = 0;
    for (let l = 0; l < layers.length; l++) {
      const cols = layers[l];
      const n = counts[l];
      const fill = (attr: string, width: number, target: Float64Array) => {
        for (let comp = 0; comp < width; comp++) {
          const col = cols.get(`${attr}[${comp}]`);
          if (!col) throw new Error(`missing channel ${attr}[${comp}]`);
          const values = col[f];
          for (let i = 0; i < n; i++) {
            target[(base + i) * width + comp] = values[i];
          }
        }
      };
      fill("position", 3, splats.positions);
      fill("rotation", 4, splats.rotations);
      fill("scales", 3, splats.scales);
      fill("opacity", 1, splats.opacities);
      fill("sh", shDim, splats.sh);
      base += n;
    }
    frames.push(splats);
  }
  return frames;
}
