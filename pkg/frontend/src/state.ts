/**
 * The single viewer state store. UI events mutate it through `update`, which
 * serializes changes and notifies subscribers; the session loop reads a
 * snapshot at each group boundary so slider and throttle changes take effect
 * exactly there, while camera changes apply on the next drawn frame.
 */

export type QualityMode = { kind: "auto" } | { kind: "manual"; layer: number };

export interface OrbitCamera {
  azimuth: number;
  elevation: number;
  distance: number;
  target: [number, number, number];
}

export interface ViewerStats {
  fetchedBytes: number;
  decodeMs: number;
  drawMs: number;
  currentLayer: number;
  currentGroup: number;
  currentFrame: number;
  banner: string | null;
}

export interface ViewerState {
  camera: OrbitCamera;
  mode: QualityMode;
  throttleBps: number | null; // null = unthrottled
  playing: boolean;
  stats: ViewerStats;
}

export function initialState(): ViewerState {
  return {
    camera: { azimuth: 0.6, elevation: 0.25, distance: 2.6, target: [0, 0, 0] },
    mode: { kind: "auto" },
    throttleBps: null,
    playing: true,
    stats: {
      fetchedBytes: 0,
      decodeMs: 0,
      drawMs: 0,
      currentLayer: 0,
      currentGroup: 0,
      currentFrame: 0,
      banner: null,
    },
  };
}

export type Listener = (state: ViewerState) => void;

export class Store {
  private state: ViewerState;
  private listeners: Listener[] = [];

  constructor(state: ViewerState = initialState()) {
    this.state = state;
  }

  get(): ViewerState {
    return this.state;
  }

  update(change: Partial<ViewerState>): void {
    this.state = { ...this.state, ...change };
    for (const fn of this.listeners) {
      fn(this.state);
    }
  }

  patchStats(change: Partial<ViewerStats>): void {
    this.update({ stats: { ...this.state.stats, ...change } });
  }

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((x) => x !== fn);
    };
  }
}
