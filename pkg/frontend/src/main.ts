/**
 * Browser entry point: orbit-camera canvas, quality slider, throttle control,
 * and live stats, driving a streaming session against a gsv server.
 */

import { framesPerSecond } from "./manifest.js";
import { drawFrame } from "./render2d.js";
import { Session } from "./session.js";
import { SegmentFetcher } from "./fetcher.js";
import { Store } from "./state.js";

const app = document.querySelector<HTMLDivElement>("#app");
if (!app) throw new Error("missing #app root");

app.innerHTML = `
  <div class="bar">
    <label>server <input id="url" value="http://127.0.0.1:8080" size="28"></label>
    <button id="play">play</button>
    <label>quality
      <select id="mode">
        <option value="auto">auto</option>
        <option value="manual">manual</option>
      </select>
    </label>
    <label>layer <input id="layer" type="range" min="1" max="6" value="6" disabled></label>
    <label>throttle (Mbit/s, 0 = base layer, blank = off)
      <input id="throttle" size="6" value=""></label>
  </div>
  <div id="banner" class="banner" hidden></div>
  <canvas id="view" width="640" height="480"></canvas>
  <pre id="stats"></pre>
`;

const canvas = document.querySelector<HTMLCanvasElement>("#view")!;
const ctx = canvas.getContext("2d")!;
const store = new Store();

const banner = document.querySelector<HTMLDivElement>("#banner")!;
const statsBox = document.querySelector<HTMLPreElement>("#stats")!;
store.subscribe((state) => {
  const s = state.stats;
  statsBox.textContent =
    `layer ${s.currentLayer}   group ${s.currentGroup}   frame ${s.currentFrame}\n` +
    `fetched ${(s.fetchedBytes / 1e6).toFixed(2)} MB   ` +
    `decode ${s.decodeMs.toFixed(1)} ms   draw ${s.drawMs.toFixed(1)} ms`;
  banner.hidden = s.banner === null;
  if (s.banner !== null) banner.textContent = s.banner;
});

const layerInput = document.querySelector<HTMLInputElement>("#layer")!;
const modeInput = document.querySelector<HTMLSelectElement>("#mode")!;
modeInput.addEventListener("change", () => {
  const manual = modeInput.value === "manual";
  layerInput.disabled = !manual;
  store.update({
    mode: manual ? { kind: "manual", layer: parseInt(layerInput.value, 10) } : { kind: "auto" },
  });
});
layerInput.addEventListener("input", () => {
  if (modeInput.value === "manual") {
    store.update({ mode: { kind: "manual", layer: parseInt(layerInput.value, 10) } });
  }
});
document.querySelector<HTMLInputElement>("#throttle")!.addEventListener("change", (ev) => {
  const text = (ev.target as HTMLInputElement).value.trim();
  store.update({ throttleBps: text === "" ? null : parseFloat(text) * 1e6 });
});

// orbit controls: drag to rotate, wheel to zoom
let dragging = false;
let last: [number, number] = [0, 0];
canvas.addEventListener("mousedown", (e) => {
  dragging = true;
  last = [e.clientX, e.clientY];
});
window.addEventListener("mouseup", () => (dragging = false));
window.addEventListener("mousemove", (e) => {
  if (!dragging) return;
  const cam = store.get().camera;
  store.update({
    camera: {
      ...cam,
      azimuth: cam.azimuth + (e.clientX - last[0]) * 0.01,
      elevation: Math.max(-1.4, Math.min(1.4, cam.elevation + (e.clientY - last[1]) * 0.01)),
    },
  });
  last = [e.clientX, e.clientY];
});
canvas.addEventListener("wheel", (e) => {
  const cam = store.get().camera;
  store.update({
    camera: { ...cam, distance: Math.max(0.3, cam.distance * (1 + e.deltaY * 0.001)) },
  });
  e.preventDefault();
});

document.querySelector<HTMLButtonElement>("#play")!.addEventListener("click", async () => {
  const url = document.querySelector<HTMLInputElement>("#url")!.value;
  const session = new Session(new SegmentFetcher(url), store);
  store.patchStats({ fetchedBytes: 0, banner: null });
  try {
    const manifest = await session.loadManifest();
    layerInput.max = String(manifest.layers);
    const frameMs = 1000 / framesPerSecond(manifest);
    await session.run(async (result) => {
      for (let f = 0; f < result.frames.length; f++) {
        const t0 = performance.now();
        const drawMs = drawFrame(ctx, result.frames[f], store.get().camera,
                                 canvas.width, canvas.height);
        store.patchStats({
          drawMs,
          currentFrame: manifest.groups[result.group].start + f,
        });
        const spent = performance.now() - t0;
        await new Promise((resolve) => setTimeout(resolve, Math.max(0, frameMs - spent)));
      }
    });
  } catch (err) {
    store.patchStats({ banner: `session failed: ${err}` });
  }
});
