/** The server's candidate selection objective, mirrored so the gallery sort
 * is a pure function of returned metrics and agrees with best_index. */

import type { CandidateDoc, CandidateMetrics, EditKind } from "./types";

export const LATTICE_VF_TOLERANCE = 0.05;
export const NODESIGN_VIOLATION_LIMIT = 10.0;

function metric(m: CandidateMetrics, name: keyof CandidateMetrics): number {
  const v = m[name];
  if (typeof v !== "number" || !Number.isFinite(v)) return Number.POSITIVE_INFINITY;
  return v;
}

/** Lexicographic key, lower is better; last element is the candidate index
 * tiebreak. Failed candidates carry empty metrics and sort last. */
export function selectionKey(kind: EditKind, cand: CandidateDoc): number[] {
  const m = cand.metrics;
  if (kind === "warp") {
    return [metric(m, "ce") + metric(m, "de"), cand.index];
  }
  if (kind === "lattice") {
    const meets = Math.abs(metric(m, "vf") - metric(m, "vf_target")) <= LATTICE_VF_TOLERANCE;
    return [meets ? 0 : 1, metric(m, "compliance"), cand.index];
  }
  const meets = metric(m, "violation") <= NODESIGN_VIOLATION_LIMIT;
  return [meets ? 0 : 1, metric(m, "compliance"), cand.index];
}

export function compareKeys(a: number[], b: number[]): number {
  for (let i = 0; i < Math.min(a.length, b.length); i++) {
    const av = a[i]!;
    const bv = b[i]!;
    // Infinity - Infinity is NaN, so compare explicitly
    if (av < bv) return -1;
    if (av > bv) return 1;
  }
  return a.length - b.length;
}

/** Candidates ordered best first. */
export function sortCandidates(kind: EditKind, cands: CandidateDoc[]): CandidateDoc[] {
  return [...cands].sort((a, b) => compareKeys(selectionKey(kind, a), selectionKey(kind, b)));
}

/** Index of the best candidate; matches the server's best_index. */
export function selectBest(kind: EditKind, cands: CandidateDoc[]): number {
  if (cands.length === 0) throw new Error("empty candidate set");
  let best = cands[0]!;
  let bestKey = selectionKey(kind, best);
  for (const c of cands.slice(1)) {
    const key = selectionKey(kind, c);
    if (compareKeys(key, bestKey) < 0) {
      best = c;
      bestKey = key;
    }
  }
  return best.index;
}

/** Badges shown on a gallery tile, in display order. */
export function tileBadges(kind: EditKind, cand: CandidateDoc): { label: string; value: string }[] {
  const m = cand.metrics;
  const fmt = (v: number | undefined, digits = 2) =>
    typeof v === "number" && Number.isFinite(v) ? v.toFixed(digits) : "n/a";
  if (cand.failed) return [{ label: "failed", value: cand.failure_reason || "failed" }];
  if (kind === "warp") {
    return [
      { label: "CE%", value: fmt(m.ce) },
      { label: "DE%", value: fmt(m.de) },
      ...(m.violation !== undefined ? [{ label: "viol%", value: fmt(m.violation) }] : []),
    ];
  }
  if (kind === "lattice") {
    return [
      { label: "C", value: fmt(m.compliance, 4) },
      { label: "vf", value: fmt(m.vf, 3) },
      { label: "IoU", value: fmt(m.iou) },
    ];
  }
  return [
    { label: "C", value: fmt(m.compliance, 4) },
    { label: "viol%", value: fmt(m.violation) },
    { label: "IoU", value: fmt(m.iou) },
  ];
}
