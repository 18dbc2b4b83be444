/**
 * Segment fetching with byte accounting, retries, and an optional throttle.
 *
 * The displayed fetched-bytes counter adds up exactly the HTTP content
 * lengths received. A positive throttle delays completion so the effective
 * rate never exceeds it (and the throughput sample fed to the estimator is
 * capped at the throttle); a zero throttle only pins adaptive selection to
 * the base layer, it does not block transfers outright.
 */

export type FetchFn = (url: string) => Promise<Response>;

export interface SegmentResult {
  bytes: Uint8Array;
  contentLength: number;
  seconds: number;
  retries: number;
}

const sleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

export class SegmentFetcher {
  private base: string;
  private fetchFn: FetchFn;
  retries = 3;

  constructor(baseUrl: string, fetchFn: FetchFn = (url) => fetch(url)) {
    this.base = baseUrl.replace(/\/$/, "");
    this.fetchFn = fetchFn;
  }

  async manifestText(): Promise<string> {
    const resp = await this.fetchFn(`${this.base}/manifest`);
    if (!resp.ok) throw new Error(`manifest fetch failed: ${resp.status}`);
    return await resp.text();
  }

  async segment(group: number, layer: number, throttleBps: number | null): Promise<SegmentResult> {
    const url = `${this.base}/segment?group=${group}&layer=${layer}`;
    let lastError: unknown = null;
    let attempts = 0;
    for (; attempts < this.retries; attempts++) {
      try {
        const started = performance.now();
        const resp = await this.fetchFn(url);
        if (!resp.ok) throw new Error(`segment ${group}/${layer}: HTTP ${resp.status}`);
        const buffer = new Uint8Array(await resp.arrayBuffer());
        const header = resp.headers.get("Content-Length");
        const contentLength = header !== null ? parseInt(header, 10) : buffer.length;
        if (contentLength !== buffer.length) {
          throw new Error(`segment ${group}/${layer}: content length mismatch`);
        }
        let seconds = Math.max((performance.now() - started) / 1000, 1e-6);
        if (throttleBps !== null && throttleBps > 0) {
          const floor = (8 * buffer.length) / throttleBps;
          if (seconds < floor) {
            await sleep((floor - seconds) * 1000);
            seconds = floor;
          }
        }
        return { bytes: buffer, contentLength, seconds, retries: attempts };
      } catch (err) {
        lastError = err;
      }
    }
    throw lastError instanceof Error ? lastError : new Error(String(lastError));
  }
}
