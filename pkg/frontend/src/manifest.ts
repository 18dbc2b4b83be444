/** Streaming manifest types, matching the server's manifest.json schema. */

export interface ManifestChannel {
  attr: string;
  comp: number;
  bits: number;
  min: number;
  max: number;
}

export interface ManifestGroup {
  start: number;
  frames: number;
  gauss_counts: number[];
  position_bits: number;
  layer_bytes: number[];
  cum_bytes: number[];
  channels: ManifestChannel[][];
}

export interface Manifest {
  version: number;
  layers: number;
  fps: [number, number];
  sh_degree: number;
  url: string;
  groups: ManifestGroup[];
}

export function parseManifest(text: string): Manifest {
  const doc = JSON.parse(text) as Manifest;
  if (!doc.groups || !doc.layers || !doc.fps) {
    throw new Error("malformed manifest");
  }
  for (const g of doc.groups) {
    for (let l = 1; l < g.cum_bytes.length; l++) {
      if (g.cum_bytes[l] < g.cum_bytes[l - 1]) {
        throw new Error("cumulative layer sizes must be non-decreasing");
      }
    }
  }
  return doc;
}

export function framesPerSecond(manifest: Manifest): number {
  return manifest.fps[0] / manifest.fps[1];
}

/** Average bytes per frame when fetching layers 1..layer of one group. */
export function cumBytesPerFrame(manifest: Manifest, layer: number, group: number): number {
  const g = manifest.groups[group];
  return g.cum_bytes[layer - 1] / g.frames;
}
