/** Editor view state and gesture composition. Pure logic, no DOM: the entry
 * module feeds it pointer events in normalized coordinates and renders from
 * its snapshots. */

import { holeMask, maskPixelCount } from "./geometry";
import { selectBest, sortCandidates } from "./objective";
import type {
  CandidateDoc,
  EditConfigDoc,
  EditDoc,
  EditRequestDoc,
  Field,
  HandleDoc,
  LatticeDoc,
  TopologyDoc,
} from "./types";
import { dragLimit, validateRequest, type Validity } from "./validate";

export type Mode = "warp" | "sigma" | "hole" | "lattice";

export interface Toggles {
  skeleton: boolean;
  joints: boolean;
  bcs: boolean;
  hole: boolean;
  lattice: boolean;
  heatmap: boolean;
}

export interface WarpGesture {
  handle: HandleDoc;
  valid: boolean;
  /** Tooltip text when invalid, naming the violated bound. */
  tooltip: string;
}

export interface HoleGesture {
  center: [number, number];
  radius: number;
  /** Preview pixel count on the current grid. */
  area: number;
}

export interface GalleryState {
  edit: EditDoc;
  /** Candidates best first, by the selection objective. */
  ordered: CandidateDoc[];
  /** Highlighted candidate index (auto-best when N = 1). */
  highlighted: number;
}

export const SIGMA_DEFAULT = 0.1;
export const SIGMA_MIN = 0.02;
export const SIGMA_MAX = 0.5;

export class EditorState {
  sessionId = "";
  topology: TopologyDoc | null = null;
  field: Field | null = null;
  mode: Mode = "warp";
  toggles: Toggles = { skeleton: false, joints: true, bcs: true, hole: true, lattice: true, heatmap: false };
  zoomScale = 6;
  smooth = false;

  sigma = SIGMA_DEFAULT;
  warp: WarpGesture | null = null;
  holeGesture: HoleGesture | null = null;
  lattice: LatticeDoc = { pattern: "grid", pitch: 8, member: 2 };
  shell = 3;

  config: EditConfigDoc = { num_samples: 4, seed: 0 };

  /** At most one in-flight edit per session. */
  inFlightEdit: string | null = null;
  gallery: GalleryState | null = null;
  busy = false;

  loadTopology(doc: TopologyDoc, field: Field): void {
    this.sessionId = doc.session_id;
    this.topology = doc;
    this.field = field;
  }

  /** Drag from (x0, y0) to (x1, y1), all normalized. Zero-length drags leave
   * no gesture, which disables submit. */
  dragTo(x0: number, y0: number, x1: number, y1: number): void {
    const dx = x1 - x0;
    const dy = y1 - y0;
    if (dx === 0 && dy === 0) {
      this.warp = null;
      return;
    }
    const handle: HandleDoc = { x: x0, y: y0, dx, dy, sigma: this.sigma };
    const v = validHandle(handle);
    this.warp = {
      handle,
      valid: v.ok,
      tooltip: v.ok ? "" : v.reason,
    };
  }

  /** Sigma-circle drag: radius from the anchor in normalized units. */
  setSigma(r: number): void {
    this.sigma = Math.min(SIGMA_MAX, Math.max(SIGMA_MIN, r));
    if (this.warp) {
      const h = { ...this.warp.handle, sigma: this.sigma };
      const v = validHandle(h);
      this.warp = { handle: h, valid: v.ok, tooltip: v.ok ? "" : v.reason };
    }
  }

  placeHole(center: [number, number], radius: number): void {
    if (!this.field) return;
    const clamped: [number, number] = [clamp01(center[0]), clamp01(center[1])];
    const r = Math.max(0, radius);
    const mask = holeMask(clamped, r, this.field.width, this.field.height);
    this.holeGesture = { center: clamped, radius: r, area: maskPixelCount(mask) };
  }

  /** The EditRequest the current gesture composes, or null when nothing valid
   * is pending. Submit stays disabled while this is null. */
  pendingRequest(): EditRequestDoc | null {
    const req = this.buildRequest();
    if (req === null) return null;
    return validateRequest(req).ok ? req : null;
  }

  /** Why the pending gesture cannot be submitted, for the tooltip. */
  pendingProblem(): string {
    const req = this.buildRequest();
    if (req === null) return "compose a gesture first";
    const v = validateRequest(req);
    return v.ok ? "" : v.reason;
  }

  private buildRequest(): EditRequestDoc | null {
    if (this.mode === "warp" || this.mode === "sigma") {
      if (!this.warp) return null;
      return { kind: "warp", config: { ...this.config }, warp: { handles: [this.warp.handle] } };
    }
    if (this.mode === "hole") {
      if (!this.holeGesture || this.holeGesture.radius <= 0) return null;
      return {
        kind: "nodesign",
        config: { ...this.config },
        center: this.holeGesture.center,
        radius: this.holeGesture.radius,
      };
    }
    return { kind: "lattice", config: { ...this.config }, lattice: { ...this.lattice }, shell: this.shell };
  }

  beginEdit(editId: string): void {
    if (this.inFlightEdit !== null) throw new Error("an edit is already in flight for this session");
    this.inFlightEdit = editId;
    this.gallery = null;
  }

  finishEdit(doc: EditDoc): void {
    this.inFlightEdit = null;
    if (doc.status !== "done" || !doc.candidates || doc.kind === undefined) {
      this.gallery = null;
      return;
    }
    const ordered = sortCandidates(doc.kind, doc.candidates);
    this.gallery = {
      edit: doc,
      ordered,
      highlighted: doc.candidates.length === 1 ? 0 : selectBest(doc.kind, doc.candidates),
    };
  }

  /** A committed selection makes the session's working field the reference
   * for whatever is composed next; pending gestures are stale, so clear. */
  committed(doc: TopologyDoc, field: Field): void {
    this.loadTopology(doc, field);
    this.warp = null;
    this.holeGesture = null;
    this.gallery = null;
  }

  /** Drag bound circle radius for the current sigma, normalized units. */
  dragBound(): number {
    return dragLimit(this.sigma);
  }
}

function clamp01(v: number): number {
  return Math.min(1, Math.max(0, v));
}

function validHandle(h: HandleDoc): Validity {
  return validateRequest({ kind: "warp", config: {}, warp: { handles: [h] } });
}
