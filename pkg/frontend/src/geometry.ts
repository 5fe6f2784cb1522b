/** Client-side copies of the server's mask and lattice constructions, used
 * for gesture previews. Formulas replicate the server expression for expression
 * so preview pixels match what an edit will actually touch. */

import type { Field, LatticeDoc } from "./types";

/** Normalized coords: origin at the top-left element center, x rightward,
 * y downward, pixel (r, c) at (c/(w-1), r/(h-1)). */
export function normToPixel(
  x: number,
  y: number,
  width: number,
  height: number,
): { row: number; col: number } {
  return { row: Math.round(y * (height - 1)), col: Math.round(x * (width - 1)) };
}

export function pixelToNorm(
  row: number,
  col: number,
  width: number,
  height: number,
): { x: number; y: number } {
  return { x: col / (width - 1), y: row / (height - 1) };
}

export interface BinaryMask {
  width: number;
  height: number;
  values: Uint8Array; // 0 or 1, row-major
}

export function maskPixelCount(mask: BinaryMask): number {
  let n = 0;
  for (let i = 0; i < mask.values.length; i++) n += mask.values[i]!;
  return n;
}

/** Disk of `radius` around `center`, both normalized; radius measured in
 * units of the longer grid side. radius <= 0 gives an empty mask. */
export function holeMask(
  center: [number, number],
  radius: number,
  width: number,
  height: number,
): BinaryMask {
  const [cx, cy] = center;
  if (!(cx >= 0 && cx <= 1 && cy >= 0 && cy <= 1)) {
    throw new Error("hole center must lie in [0, 1]^2");
  }
  const values = new Uint8Array(width * height);
  if (radius <= 0) return { width, height, values };
  const scale = Math.max(width - 1, height - 1);
  const r2 = radius * radius;
  const dx2 = new Float64Array(width);
  for (let c = 0; c < width; c++) {
    const dx = ((c / (width - 1)) - cx) * (width - 1) / scale;
    dx2[c] = dx * dx;
  }
  for (let r = 0; r < height; r++) {
    const dy = ((r / (height - 1)) - cy) * (height - 1) / scale;
    const dy2 = dy * dy;
    for (let c = 0; c < width; c++) {
      values[r * width + c] = dy2 + dx2[c]! <= r2 ? 1 : 0;
    }
  }
  return { width, height, values };
}

const INF = Number.POSITIVE_INFINITY;

// lower-envelope-of-parabolas pass over finite heights: exact 1D squared
// distance transform d[q] = min_p ((q-p)^2 + f[p])
function edt1d(f: Float64Array, n: number, d: Float64Array, v: Int32Array, z: Float64Array): void {
  let k = 0;
  v[0] = 0;
  z[0] = -INF;
  z[1] = INF;
  for (let q = 1; q < n; q++) {
    let s = (f[q]! + q * q - (f[v[k]!]! + v[k]! * v[k]!)) / (2 * q - 2 * v[k]!);
    while (s <= z[k]!) {
      k--;
      s = (f[q]! + q * q - (f[v[k]!]! + v[k]! * v[k]!)) / (2 * q - 2 * v[k]!);
    }
    k++;
    v[k] = q;
    z[k] = s;
    z[k + 1] = INF;
  }
  k = 0;
  for (let q = 0; q < n; q++) {
    while (z[k + 1]! < q) k++;
    const dq = q - v[k]!;
    d[q] = dq * dq + f[v[k]!]!;
  }
}

/** Exact squared Euclidean distance from each pixel to the nearest void pixel,
 * the domain exterior counting as void (one-pixel pad ring, as on the server).
 * Solid is density >= threshold. Void pixels get 0. */
export function squaredDistanceToVoid(field: Field, threshold = 0.5): Float64Array {
  const w = field.width + 2;
  const h = field.height + 2;
  // per-column row distance to the nearest void; the pad ring keeps every
  // column finite, so the parabola pass never sees an infinite height
  const g = new Float64Array(w * h);
  for (let c = 0; c < w; c++) {
    let d = 0;
    for (let r = 0; r < h; r++) {
      const inner =
        r >= 1 && r <= field.height && c >= 1 && c <= field.width
          ? field.values[(r - 1) * field.width + (c - 1)]! >= threshold
          : false;
      d = inner ? d + 1 : 0;
      g[r * w + c] = d;
    }
    d = 0;
    for (let r = h - 1; r >= 0; r--) {
      const cur = g[r * w + c]!;
      d = cur === 0 ? 0 : Math.min(cur, d + 1);
      g[r * w + c] = d;
    }
  }
  const f = new Float64Array(w);
  const d1 = new Float64Array(w);
  const v = new Int32Array(w);
  const z = new Float64Array(w + 1);
  const out = new Float64Array(field.width * field.height);
  for (let r = 1; r <= field.height; r++) {
    for (let c = 0; c < w; c++) {
      const gr = g[r * w + c]!;
      f[c] = gr * gr;
    }
    edt1d(f, w, d1, v, z);
    for (let c = 1; c <= field.width; c++) {
      out[(r - 1) * field.width + (c - 1)] = d1[c]!;
    }
  }
  return out;
}

/** Interior deeper than `shell` pixels from any void or the domain boundary.
 * Comparison runs on integer squared distances, so it agrees with the server
 * bit for bit whenever shell^2 is exactly representable. */
export function infillMask(field: Field, shell: number, threshold = 0.5): BinaryMask {
  if (shell < 0) throw new Error("shell thickness must be nonnegative");
  const d2 = squaredDistanceToVoid(field, threshold);
  const values = new Uint8Array(field.width * field.height);
  const s2 = shell * shell;
  for (let i = 0; i < d2.length; i++) values[i] = d2[i]! > s2 ? 1 : 0;
  return { width: field.width, height: field.height, values };
}

function pymod(a: number, m: number): number {
  return ((a % m) + m) % m;
}

/** Periodic lattice pattern anchored at pixel (0, 0). */
export function renderLattice(lat: LatticeDoc, width: number, height: number): BinaryMask {
  if (lat.pattern !== "grid" && lat.pattern !== "cross") {
    throw new Error(`unknown lattice pattern ${lat.pattern}`);
  }
  const values = new Uint8Array(width * height);
  for (let r = 0; r < height; r++) {
    for (let c = 0; c < width; c++) {
      const on =
        lat.pattern === "grid"
          ? r % lat.pitch < lat.member || c % lat.pitch < lat.member
          : pymod(r + c, lat.pitch) < lat.member || pymod(r - c, lat.pitch) < lat.member;
      values[r * width + c] = on ? 1 : 0;
    }
  }
  return { width, height, values };
}

export interface LatticePreview {
  /** Lattice pixels inside the infill region (what the edit will draw). */
  pattern: BinaryMask;
  /** The infill region itself. */
  region: BinaryMask;
  /** Volume fraction of the composed field, the edit's new target. */
  vf: number;
}

/** Lattice preview clipped to the live infill mask of `field`. */
export function latticePreview(field: Field, lat: LatticeDoc, shell: number): LatticePreview {
  const region = infillMask(field, shell);
  const latMask = renderLattice(lat, field.width, field.height);
  const pattern = new Uint8Array(field.width * field.height);
  let sum = 0;
  for (let i = 0; i < pattern.length; i++) {
    const m = region.values[i]!;
    pattern[i] = m === 1 && latMask.values[i] === 1 ? 1 : 0;
    const composed = field.values[i]! * (1 - m) + latMask.values[i]! * m;
    sum += Math.min(1, Math.max(0, composed));
  }
  return {
    pattern: { width: field.width, height: field.height, values: pattern },
    region,
    vf: sum / pattern.length,
  };
}
