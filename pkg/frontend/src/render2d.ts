/**
 * Approximate splat rendering on a 2D canvas: each splat becomes a screen-
 * aligned ellipse from its projected covariance, painter-sorted far to near
 * and alpha-blended. Image-exactness is the reference renderer's job; this
 * path is built for interactive frame rates.
 */

import { FrameSplats } from "./assemble.js";
import { OrbitCamera } from "./state.js";

const SH_C0 = 0.28209479177387814;
const SH_C1 = 0.4886025119029199;

interface Sprite {
  x: number;
  y: number;
  radiusA: number;
  radiusB: number;
  angle: number;
  depth: number;
  color: string;
  alpha: number;
}

export function cameraBasis(cam: OrbitCamera) {
  const ce = Math.cos(cam.elevation);
  const eye = [
    cam.target[0] + cam.distance * ce * Math.sin(cam.azimuth),
    cam.target[1] + cam.distance * Math.sin(cam.elevation),
    cam.target[2] - cam.distance * ce * Math.cos(cam.azimuth),
  ];
  const fwd = normalize([
    cam.target[0] - eye[0],
    cam.target[1] - eye[1],
    cam.target[2] - eye[2],
  ]);
  const right = normalize(cross(fwd, [0, 1, 0]));
  const down = cross(fwd, right);
  return { eye, right, down, fwd };
}

function normalize(v: number[]): number[] {
  const n = Math.hypot(v[0], v[1], v[2]) || 1;
  return [v[0] / n, v[1] / n, v[2] / n];
}

function cross(a: number[], b: number[]): number[] {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

function shColor(splats: FrameSplats, i: number, dir: number[]): [number, number, number] {
  const dim = splats.sh.length / splats.count;
  const base = i * dim;
  const out: [number, number, number] = [0, 0, 0];
  for (let c = 0; c < 3; c++) {
    let v = SH_C0 * splats.sh[base + c];
    if (splats.shDegree >= 1 && dim >= 12) {
      v +=
        -SH_C1 * dir[1] * splats.sh[base + 3 + c] +
        SH_C1 * dir[2] * splats.sh[base + 6 + c] -
        SH_C1 * dir[0] * splats.sh[base + 9 + c];
    }
    out[c] = Math.min(1, Math.max(0, v + 0.5));
  }
  return out;
}

export function drawFrame(
  ctx: CanvasRenderingContext2D,
  splats: FrameSplats,
  cam: OrbitCamera,
  width: number,
  height: number,
): number {
  const t0 = performance.now();
  const { eye, right, down, fwd } = cameraBasis(cam);
  const focal = width / (2 * Math.tan((60 * Math.PI) / 360));
  const near = 0.02;
  const sprites: Sprite[] = [];
  for (let i = 0; i < splats.count; i++) {
    const px = splats.positions[i * 3] - eye[0];
    const py = splats.positions[i * 3 + 1] - eye[1];
    const pz = splats.positions[i * 3 + 2] - eye[2];
    const z = px * fwd[0] + py * fwd[1] + pz * fwd[2];
    if (z <= near) continue;
    const cx = px * right[0] + py * right[1] + pz * right[2];
    const cy = px * down[0] + py * down[1] + pz * down[2];
    const u = (focal * cx) / z + width / 2;
    const v = (focal * cy) / z + height / 2;
    // screen-aligned ellipse from the projected principal radii
    const s0 = splats.scales[i * 3];
    const s1 = splats.scales[i * 3 + 1];
    const s2 = splats.scales[i * 3 + 2];
    const big = Math.max(s0, s1, s2);
    const small = (s0 + s1 + s2 - big) / 2;
    const radiusA = Math.max(1, (2 * focal * big) / z);
    const radiusB = Math.max(1, (2 * focal * small) / z);
    if (u + radiusA < 0 || u - radiusA > width || v + radiusA < 0 || v - radiusA > height) {
      continue;
    }
    const dir = normalize([px, py, pz]);
    const [r, g, b] = shColor(splats, i, dir);
    // orientation from the quaternion's z-rotation component (approximate)
    const qw = splats.rotations[i * 4];
    const qz = splats.rotations[i * 4 + 3];
    sprites.push({
      x: u,
      y: v,
      radiusA,
      radiusB,
      angle: Math.atan2(2 * qw * qz, 1 - 2 * qz * qz),
      depth: z,
      color: `rgb(${(r * 255) | 0},${(g * 255) | 0},${(b * 255) | 0})`,
      alpha: Math.min(0.99, Math.max(0, splats.opacities[i])),
    });
  }
  sprites.sort((a, b) => b.depth - a.depth); // painter: far first
  ctx.fillStyle = "#000";
  ctx.fillRect(0, 0, width, height);
  for (const s of sprites) {
    ctx.save();
    ctx.translate(s.x, s.y);
    ctx.rotate(s.angle);
    ctx.globalAlpha = s.alpha;
    ctx.fillStyle = s.color;
    ctx.beginPath();
    ctx.ellipse(0, 0, s.radiusA, s.radiusB, 0, 0, 2 * Math.PI);
    ctx.fill();
    ctx.restore();
  }
  ctx.globalAlpha = 1;
  return performance.now() - t0;
}
