/** Canvas-free rendering core: density grids and overlays to RGBA buffers,
 * glyph geometry in output pixels. The DOM layer just blits these. */

import type { BinaryMask } from "./geometry";
import type { Field, SpecDoc } from "./types";

export interface Raster {
  width: number;
  height: number;
  rgba: Uint8ClampedArray;
}

export type ZoomMode = "nearest" | "smooth";

export interface RGBA {
  r: number;
  g: number;
  b: number;
  a: number;
}

/** Density 1 renders black, 0 white (material is dark, like engineering plots). */
export function densityToGray(v: number): number {
  return Math.round(255 * (1 - Math.min(1, Math.max(0, v))));
}

function put(r: Raster, idx: number, c: RGBA): void {
  const o = idx * 4;
  r.rgba[o] = c.r;
  r.rgba[o + 1] = c.g;
  r.rgba[o + 2] = c.b;
  r.rgba[o + 3] = c.a;
}

/** Sample the field at integer output scale. Nearest replicates source values
 * exactly; smooth interpolates bilinearly between pixel centers (clamped at
 * the border), never leaving the hull of the four neighbors. */
export function sampleAt(field: Field, row: number, col: number, scale: number, mode: ZoomMode): number {
  if (mode === "nearest") {
    const sr = Math.min(field.height - 1, Math.floor(row / scale));
    const sc = Math.min(field.width - 1, Math.floor(col / scale));
    return field.values[sr * field.width + sc]!;
  }
  const fr = Math.min(field.height - 1, Math.max(0, (row + 0.5) / scale - 0.5));
  const fc = Math.min(field.width - 1, Math.max(0, (col + 0.5) / scale - 0.5));
  const r0 = Math.floor(fr);
  const c0 = Math.floor(fc);
  const r1 = Math.min(r0 + 1, field.height - 1);
  const c1 = Math.min(c0 + 1, field.width - 1);
  const ar = fr - r0;
  const ac = fc - c0;
  const top = field.values[r0 * field.width + c0]! * (1 - ac) + field.values[r0 * field.width + c1]! * ac;
  const bot = field.values[r1 * field.width + c0]! * (1 - ac) + field.values[r1 * field.width + c1]! * ac;
  return top * (1 - ar) + bot * ar;
}

/** Simple diverging ramp for the density heatmap: void blue, solid red. */
export function heatColor(v: number): RGBA {
  const t = Math.min(1, Math.max(0, v));
  return {
    r: Math.round(255 * t),
    g: Math.round(96 * (1 - Math.abs(2 * t - 1))),
    b: Math.round(255 * (1 - t)),
    a: 255,
  };
}

export function renderField(field: Field, scale: number, mode: ZoomMode, heatmap = false): Raster {
  if (!Number.isInteger(scale) || scale < 1) throw new Error("scale must be a positive integer");
  const width = field.width * scale;
  const height = field.height * scale;
  const out: Raster = { width, height, rgba: new Uint8ClampedArray(width * height * 4) };
  for (let r = 0; r < height; r++) {
    for (let c = 0; c < width; c++) {
      const v = sampleAt(field, r, c, scale, mode);
      const color = heatmap ? heatColor(v) : { r: densityToGray(v), g: densityToGray(v), b: densityToGray(v), a: 255 };
      put(out, r * width + c, color);
    }
  }
  return out;
}

/** Alpha-blend a binary mask over a raster; mask pixels are in field
 * resolution and expand by the integer scale factor. */
export function tintMask(raster: Raster, mask: BinaryMask, scale: number, color: RGBA): void {
  for (let r = 0; r < raster.height; r++) {
    const mr = Math.min(mask.height - 1, Math.floor(r / scale));
    for (let c = 0; c < raster.width; c++) {
      const mc = Math.min(mask.width - 1, Math.floor(c / scale));
      if (mask.values[mr * mask.width + mc] !== 1) continue;
      const o = (r * raster.width + c) * 4;
      const a = color.a / 255;
      raster.rgba[o] = Math.round(color.r * a + raster.rgba[o]! * (1 - a));
      raster.rgba[o + 1] = Math.round(color.g * a + raster.rgba[o + 1]! * (1 - a));
      raster.rgba[o + 2] = Math.round(color.b * a + raster.rgba[o + 2]! * (1 - a));
    }
  }
}

export const DIFF_REMOVED: RGBA = { r: 220, g: 60, b: 47, a: 255 };
export const DIFF_ADDED: RGBA = { r: 64, g: 160, b: 43, a: 255 };

/** Red/green structural diff of two density grids, binarized at 0.5: red
 * where material was removed vs the reference, green where added. */
export function diffOverlay(candidate: Field, reference: Field): Raster {
  if (candidate.width !== reference.width || candidate.height !== reference.height) {
    throw new Error("diff needs equal shapes");
  }
  const out: Raster = {
    width: candidate.width,
    height: candidate.height,
    rgba: new Uint8ClampedArray(candidate.width * candidate.height * 4),
  };
  for (let i = 0; i < candidate.values.length; i++) {
    const was = reference.values[i]! >= 0.5;
    const is = candidate.values[i]! >= 0.5;
    if (was && !is) put(out, i, DIFF_REMOVED);
    else if (!was && is) put(out, i, DIFF_ADDED);
    else if (is) put(out, i, { r: 40, g: 40, b: 40, a: 255 });
    else put(out, i, { r: 255, g: 255, b: 255, a: 0 });
  }
  return out;
}

/** Center of a normalized point's pixel, in output coordinates at `scale`. */
export function normToCanvas(
  x: number,
  y: number,
  width: number,
  height: number,
  scale: number,
): { cx: number; cy: number } {
  return {
    cx: Math.round(x * (width - 1)) * scale + scale / 2,
    cy: Math.round(y * (height - 1)) * scale + scale / 2,
  };
}

export interface Glyph {
  kind: "support" | "load" | "joint";
  cx: number;
  cy: number;
  /** Load arrow end point, offset from (cx, cy) in output pixels. */
  dx?: number;
  dy?: number;
  label?: string;
}

export const ARROW_LENGTH = 24;

/** Boundary condition and joint glyph geometry for a spec on a w x h grid. */
export function glyphs(
  spec: SpecDoc,
  joints: [number, number][],
  width: number,
  height: number,
  scale: number,
): Glyph[] {
  const out: Glyph[] = [];
  for (const s of spec.supports) {
    const { cx, cy } = normToCanvas(s.x, s.y, width, height, scale);
    const which = s.fix_x && s.fix_y ? "xy" : s.fix_x ? "x" : "y";
    out.push({ kind: "support", cx, cy, label: which });
  }
  for (const l of spec.loads) {
    const { cx, cy } = normToCanvas(l.x, l.y, width, height, scale);
    const mag = Math.hypot(l.fx, l.fy) || 1;
    out.push({
      kind: "load",
      cx,
      cy,
      dx: (l.fx / mag) * ARROW_LENGTH,
      dy: (l.fy / mag) * ARROW_LENGTH,
      label: `(${l.fx}, ${l.fy})`,
    });
  }
  for (const [x, y] of joints) {
    const { cx, cy } = normToCanvas(x, y, width, height, scale);
    out.push({ kind: "joint", cx, cy });
  }
  return out;
}
