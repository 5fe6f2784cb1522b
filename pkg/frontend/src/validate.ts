/** Client-side request validation mirroring the server's invariants, so the
 * UI never submits a request the server would reject. Numeric comparisons use
 * a small safety margin wherever float noise could straddle a strict bound. */

import type { EditConfigDoc, EditRequestDoc, HandleDoc, LatticeDoc } from "./types";

export type Validity = { ok: true } | { ok: false; reason: string };

const ok: Validity = { ok: true };

function bad(reason: string): Validity {
  return { ok: false, reason };
}

/** Margin applied to the invertibility bound: the server compares its own
 * float64 hypot against sigma*sqrt(e), which can differ from ours in the last
 * bits; staying 1e-9 relative inside the bound absorbs that. */
export const DRAG_MARGIN = 1e-9;

export function dragLimit(sigma: number): number {
  return sigma * Math.sqrt(Math.E);
}

export function validateHandle(h: HandleDoc): Validity {
  for (const [k, v] of Object.entries(h)) {
    if (typeof v !== "number" || !Number.isFinite(v)) return bad(`handle ${k} must be a finite number`);
  }
  if (!(h.x >= 0 && h.x <= 1 && h.y >= 0 && h.y <= 1)) {
    return bad("handle anchor must lie in [0, 1]^2");
  }
  if (!(h.sigma > 0)) return bad("sigma must be positive");
  const mag = Math.hypot(h.dx, h.dy);
  const limit = dragLimit(h.sigma);
  if (mag >= limit * (1 - DRAG_MARGIN)) {
    return bad(
      `drag length ${mag.toFixed(4)} reaches the invertibility bound ` +
        `sigma*sqrt(e) = ${limit.toFixed(4)}; shorten the drag or widen sigma`,
    );
  }
  return ok;
}

export function validateConfig(cfg: EditConfigDoc, defaultTotal: number): Validity {
  const ints: [string, number | undefined, number][] = [
    ["total_steps", cfg.total_steps, 2],
    ["partial_steps", cfg.partial_steps, 0],
    ["num_samples", cfg.num_samples, 1],
    ["seed", cfg.seed, 0],
    ["refine_steps", cfg.refine_steps, 0],
    ["stride", cfg.stride, 1],
  ];
  for (const [name, v, lo] of ints) {
    if (v === undefined) continue;
    if (!Number.isInteger(v)) return bad(`${name} must be an integer`);
    if (v < lo) return bad(`${name} must be at least ${lo}`);
  }
  if (cfg.guidance_scale !== undefined) {
    if (typeof cfg.guidance_scale !== "number" || !Number.isFinite(cfg.guidance_scale)) {
      return bad("guidance_scale must be a finite number");
    }
    if (cfg.guidance_scale < 0) return bad("guidance_scale must be nonnegative");
  }
  const total = cfg.total_steps ?? defaultTotal;
  if (cfg.partial_steps !== undefined && cfg.partial_steps > total) {
    return bad(`partial_steps must lie in [0, total_steps = ${total}]`);
  }
  return ok;
}

export function validateLattice(lat: LatticeDoc): Validity {
  if (lat.pattern !== "grid" && lat.pattern !== "cross") {
    return bad("lattice pattern must be grid or cross");
  }
  if (!Number.isInteger(lat.pitch) || lat.pitch < 2) return bad("pitch must be an integer >= 2 px");
  if (!Number.isInteger(lat.member) || lat.member < 1 || lat.member >= lat.pitch) {
    return bad("member width must be an integer in [1, pitch)");
  }
  return ok;
}

/** Per-kind server defaults for total_steps; partial_steps bounds depend on it. */
export const DEFAULT_TOTAL_STEPS: Record<string, number> = {
  warp: 100,
  lattice: 200,
  nodesign: 100,
};

export function validateRequest(req: EditRequestDoc): Validity {
  const total = DEFAULT_TOTAL_STEPS[req.kind];
  if (total === undefined) return bad(`unknown edit kind ${req.kind}`);
  const cfg = validateConfig(req.config ?? {}, total);
  if (!cfg.ok) return cfg;
  if (req.kind === "warp") {
    if (!req.warp || !Array.isArray(req.warp.handles) || req.warp.handles.length === 0) {
      return bad("warp edit needs at least one handle");
    }
    // gestures compose one handle at a time; multi-handle invertibility needs
    // the server's gradient probe, so the client only ever submits one
    if (req.warp.handles.length > 1) return bad("one handle per warp gesture");
    return validateHandle(req.warp.handles[0]!);
  }
  if (req.kind === "lattice") {
    if (!req.lattice) return bad("lattice edit needs a lattice spec");
    const lv = validateLattice(req.lattice);
    if (!lv.ok) return lv;
    if (typeof req.shell !== "number" || !Number.isFinite(req.shell) || req.shell < 0) {
      return bad("shell thickness must be a nonnegative number");
    }
    return ok;
  }
  if (
    !Array.isArray(req.center) ||
    req.center.length !== 2 ||
    !req.center.every((v) => typeof v === "number" && Number.isFinite(v))
  ) {
    return bad("no-design edit needs center [x, y]");
  }
  const [cx, cy] = req.center;
  if (!(cx >= 0 && cx <= 1 && cy >= 0 && cy <= 1)) {
    return bad("hole center must lie in [0, 1]^2");
  }
  if (typeof req.radius !== "number" || !Number.isFinite(req.radius) || req.radius <= 0) {
    return bad("radius must be positive");
  }
  return ok;
}
