/**
 * Bandwidth estimation and layer selection, mirroring the server toolkit's
 * arithmetic: pick the largest layer whose cumulative bytes/frame * fps * 8
 * fits within safety * estimated bps, never below the base layer.
 */

import { Manifest, cumBytesPerFrame, framesPerSecond } from "./manifest.js";

export const DEFAULT_ALPHA = 0.3;
export const DEFAULT_SAFETY = 0.8;

export interface BandwidthEstimate {
  ewmaBps: number | null;
  alpha: number;
  lastSampleBps: number;
}

export function freshEstimate(alpha: number = DEFAULT_ALPHA): BandwidthEstimate {
  return { ewmaBps: null, alpha, lastSampleBps: 0 };
}

export function updateBandwidth(est: BandwidthEstimate, bytes: number, seconds: number): BandwidthEstimate {
  if (!(seconds > 0)) {
    throw new Error("duration must be positive");
  }
  const sample = (8 * bytes) / seconds;
  const ewma = est.ewmaBps === null ? sample : est.alpha * sample + (1 - est.alpha) * est.ewmaBps;
  return { ewmaBps: ewma, alpha: est.alpha, lastSampleBps: sample };
}

export function selectLayer(
  manifest: Manifest,
  est: BandwidthEstimate,
  safety: number = DEFAULT_SAFETY,
  group: number = 0,
): number {
  const ewma = est.ewmaBps ?? 0;
  const fps = framesPerSecond(manifest);
  let chosen = 1;
  for (let layer = 1; layer <= manifest.layers; layer++) {
    const bps = cumBytesPerFrame(manifest, layer, group) * fps * 8;
    if (bps <= safety * ewma) {
      chosen = layer;
    }
  }
  return chosen;
}
