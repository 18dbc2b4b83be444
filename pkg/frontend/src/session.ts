/**
 * The playback session: fetch each group's layers per the mode chosen at the
 * group boundary, decode and hand frames to a sink, update stats, and adapt.
 *
 * Auto mode mirrors the server toolkit's layer selection using manifest
 * sizes and measured throughput under the user's throttle; a zero throttle
 * therefore pins selection to the base layer. Fetch failures degrade the
 * group to layer 1 and raise a banner; the loop never throws.
 */

import {
  BandwidthEstimate,
  DEFAULT_SAFETY,
  freshEstimate,
  selectLayer,
  updateBandwidth,
} from "./adapt.js";
import { FrameSplats, assembleFrames, decodeSegment } from "./assemble.js";
import { SegmentFetcher } from "./fetcher.js";
import { Manifest, parseManifest } from "./manifest.js";
import { Store } from "./state.js";

export interface GroupResult {
  group: number;
  layer: number;
  bytes: number;
  decodeMs: number;
  frames: FrameSplats[];
}

export type FrameSink = (result: GroupResult) => Promise<void> | void;

export class Session {
  readonly store: Store;
  private fetcher: SegmentFetcher;
  estimate: BandwidthEstimate = freshEstimate();
  manifest: Manifest | null = null;

  constructor(fetcher: SegmentFetcher, store: Store) {
    this.fetcher = fetcher;
    this.store = store;
  }

  async loadManifest(): Promise<Manifest> {
    this.manifest = parseManifest(await this.fetcher.manifestText());
    return this.manifest;
  }

  /** Layer for the next group under the state snapshot taken at its boundary. */
  chooseLayer(group: number): number {
    const manifest = this.manifest!;
    const state = this.store.get();
    if (state.mode.kind === "manual") {
      return Math.min(Math.max(state.mode.layer, 1), manifest.layers);
    }
    const throttle = state.throttleBps;
    if (throttle !== null && throttle <= 0) {
      return 1;
    }
    let est = this.estimate;
    if (throttle !== null && est.ewmaBps !== null) {
      est = { ...est, ewmaBps: Math.min(est.ewmaBps, throttle) };
    } else if (throttle !== null && est.ewmaBps === null) {
      est = { ...est, ewmaBps: throttle };
    }
    if (est.ewmaBps === null) {
      est = { ...est, ewmaBps: Number.POSITIVE_INFINITY };
    }
    return selectLayer(manifest, est, DEFAULT_SAFETY, group);
  }

  /** Fetch + decode one group at the given layer; returns null on failure. */
  async playGroup(group: number, layer: number): Promise<GroupResult | null> {
    const manifest = this.manifest!;
    const state = this.store.get();
    let target = layer;
    const blobs: Uint8Array[] = [];
    let bytes = 0;
    for (let l = 1; l <= target; l++) {
      try {
        const seg = await this.fetcher.segment(group, l, state.throttleBps);
        blobs.push(seg.bytes);
        bytes += seg.contentLength;
        this.estimate = updateBandwidth(this.estimate, seg.contentLength, seg.seconds);
      } catch (err) {
        if (l === 1) {
          this.store.patchStats({ banner: `group ${group}: base layer unreachable (${err})` });
          return null;
        }
        this.store.patchStats({ banner: `group ${group}: degraded to layer 1 (${err})` });
        target = 1;
        blobs.length = 1;
        bytes = blobs[0].length;
        break;
      }
    }
    const t0 = performance.now();
    const layerColumns = blobs.map((blob, i) => decodeSegment(manifest, group, i + 1, blob));
    const frames = assembleFrames(manifest, group, layerColumns);
    const decodeMs = performance.now() - t0;
    this.store.patchStats({
      fetchedBytes: this.store.get().stats.fetchedBytes + bytes,
      decodeMs,
      currentLayer: target,
      currentGroup: group,
    });
    return { group, layer: target, bytes, decodeMs, frames };
  }

  /** Play every group once, invoking the sink per group. */
  async run(sink: FrameSink): Promise<GroupResult[]> {
    const manifest = this.manifest ?? (await this.loadManifest());
    const results: GroupResult[] = [];
    for (let g = 0; g < manifest.groups.length; g++) {
      const layer = this.chooseLayer(g);
      const result = await this.playGroup(g, layer);
      if (result === null) {
        break;
      }
      results.push(result);
      await sink(result);
    }
    return results;
  }
}
