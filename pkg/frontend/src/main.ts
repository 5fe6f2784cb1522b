/** Browser entry: wires the editor state to a canvas and sidebar. Served by
 * the API process (same origin), so the client base URL is empty. */

import { Client, ApiError } from "./api";
import { holeMask, latticePreview, type BinaryMask } from "./geometry";
import { selectionKey, tileBadges } from "./objective";
import { decodeFieldB64 } from "./pgm";
import {
  diffOverlay,
  glyphs,
  normToCanvas,
  renderField,
  tintMask,
  type Raster,
} from "./render";
import { EditorState, type Mode } from "./state";
import type { CandidateDoc, EditDoc, Field } from "./types";

const api = new Client("");
const state = new EditorState();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const canvas = el<HTMLCanvasElement>("view");
const ctx = canvas.getContext("2d")!;
const statusLine = el<HTMLDivElement>("status");
const tooltip = el<HTMLDivElement>("tooltip");
const gallery = el<HTMLDivElement>("gallery");
const submitBtn = el<HTMLButtonElement>("submit");
const refineBtn = el<HTMLButtonElement>("refine");
const complianceOut = el<HTMLSpanElement>("compliance");
const vfOut = el<HTMLSpanElement>("vf");

function setStatus(text: string): void {
  statusLine.textContent = text;
}

function rasterToCanvas(raster: Raster, target: HTMLCanvasElement): void {
  target.width = raster.width;
  target.height = raster.height;
  const image = new ImageData(new Uint8ClampedArray(raster.rgba), raster.width, raster.height);
  target.getContext("2d")!.putImageData(image, 0, 0);
}

function skeletonMask(): BinaryMask | null {
  if (!state.topology || !state.field) return null;
  const sk = decodeFieldB64(state.topology.skeleton);
  const values = new Uint8Array(sk.values.length);
  for (let i = 0; i < sk.values.length; i++) values[i] = sk.values[i]! >= 0.5 ? 1 : 0;
  return { width: sk.width, height: sk.height, values };
}

function draw(): void {
  if (!state.field || !state.topology) return;
  const f = state.field;
  const k = state.zoomScale;
  const raster = renderField(f, k, state.smooth ? "smooth" : "nearest", state.toggles.heatmap);

  if (state.toggles.skeleton) {
    const sk = skeletonMask();
    if (sk) tintMask(raster, sk, k, { r: 0, g: 180, b: 200, a: 190 });
  }
  if (state.toggles.hole && state.holeGesture) {
    const mask = holeMask(state.holeGesture.center, state.holeGesture.radius, f.width, f.height);
    tintMask(raster, mask, k, { r: 230, g: 80, b: 60, a: 120 });
  }
  if (state.toggles.lattice && state.mode === "lattice") {
    const pv = latticePreview(f, state.lattice, state.shell);
    tintMask(raster, pv.region, k, { r: 120, g: 120, b: 220, a: 50 });
    tintMask(raster, pv.pattern, k, { r: 20, g: 140, b: 120, a: 170 });
    el<HTMLSpanElement>("latvf").textContent = pv.vf.toFixed(3);
  }

  rasterToCanvas(raster, canvas);

  if (state.toggles.bcs || state.toggles.joints) {
    const gs = glyphs(
      state.topology.spec,
      state.toggles.joints ? state.topology.joints : [],
      f.width,
      f.height,
      k,
    );
    for (const g of gs) {
      if (g.kind === "joint") {
        ctx.strokeStyle = "#d03ad0";
        ctx.lineWidth = 1.5;
        ctx.beginPath();
        ctx.arc(g.cx, g.cy, Math.max(3, k / 2), 0, 2 * Math.PI);
        ctx.stroke();
      } else if (!state.toggles.bcs) {
        continue;
      } else if (g.kind === "support") {
        ctx.fillStyle = "#1f6fd0";
        ctx.beginPath();
        ctx.moveTo(g.cx, g.cy - 6);
        ctx.lineTo(g.cx - 6, g.cy + 6);
        ctx.lineTo(g.cx + 6, g.cy + 6);
        ctx.closePath();
        ctx.fill();
      } else {
        drawArrow(g.cx, g.cy, g.cx + (g.dx ?? 0), g.cy + (g.dy ?? 0), "#e07820");
      }
    }
  }

  if (state.warp) {
    const h = state.warp.handle;
    const a = normToCanvas(h.x, h.y, f.width, f.height, k);
    const b = normToCanvas(h.x + h.dx, h.y + h.dy, f.width, f.height, k);
    drawArrow(a.cx, a.cy, b.cx, b.cy, state.warp.valid ? "#d03030" : "#909090");
    ctx.strokeStyle = state.warp.valid ? "#d0303066" : "#90909066";
    ctx.setLineDash([4, 3]);
    ctx.beginPath();
    ctx.arc(a.cx, a.cy, h.sigma * (Math.max(f.width, f.height) - 1) * k, 0, 2 * Math.PI);
    ctx.stroke();
    ctx.setLineDash([]);
  }

  const c = state.topology.compliance;
  complianceOut.textContent = c === null ? "n/a" : c.toPrecision(5);
  vfOut.textContent = state.topology.volume_fraction.toFixed(3);
  updateSubmit();
}

function drawArrow(x0: number, y0: number, x1: number, y1: number, color: string): void {
  ctx.strokeStyle = color;
  ctx.fillStyle = color;
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(x0, y0);
  ctx.lineTo(x1, y1);
  ctx.stroke();
  const ang = Math.atan2(y1 - y0, x1 - x0);
  ctx.beginPath();
  ctx.moveTo(x1, y1);
  ctx.lineTo(x1 - 8 * Math.cos(ang - 0.4), y1 - 8 * Math.sin(ang - 0.4));
  ctx.lineTo(x1 - 8 * Math.cos(ang + 0.4), y1 - 8 * Math.sin(ang + 0.4));
  ctx.closePath();
  ctx.fill();
}

function updateSubmit(): void {
  const pending = state.pendingRequest();
  const blocked = state.inFlightEdit !== null || state.busy;
  submitBtn.disabled = pending === null || blocked;
  submitBtn.title = pending === null ? state.pendingProblem() : blocked ? "edit in flight" : "";
  refineBtn.disabled = blocked || !state.sessionId;
}

function canvasToNorm(ev: MouseEvent): { x: number; y: number } {
  const rect = canvas.getBoundingClientRect();
  const f = state.field!;
  const k = state.zoomScale;
  const px = ((ev.clientX - rect.left) / rect.width) * canvas.width;
  const py = ((ev.clientY - rect.top) / rect.height) * canvas.height;
  return {
    x: Math.min(1, Math.max(0, px / k / (f.width - 1))),
    y: Math.min(1, Math.max(0, py / k / (f.height - 1))),
  };
}

let dragStart: { x: number; y: number } | null = null;

canvas.addEventListener("mousedown", (ev) => {
  if (!state.field) return;
  dragStart = canvasToNorm(ev);
});

canvas.addEventListener("mousemove", (ev) => {
  if (!dragStart || !state.field) return;
  const cur = canvasToNorm(ev);
  applyGesture(dragStart, cur);
  draw();
  if (state.warp && !state.warp.valid) {
    tooltip.textContent = state.warp.tooltip;
    tooltip.style.display = "block";
    tooltip.style.left = `${ev.clientX + 12}px`;
    tooltip.style.top = `${ev.clientY + 12}px`;
  } else {
    tooltip.style.display = "none";
  }
});

window.addEventListener("mouseup", (ev) => {
  if (!dragStart || !state.field) return;
  const cur = canvasToNorm(ev as MouseEvent);
  applyGesture(dragStart, cur);
  dragStart = null;
  tooltip.style.display = "none";
  draw();
});

function applyGesture(from: { x: number; y: number }, to: { x: number; y: number }): void {
  const f = state.field!;
  if (state.mode === "warp") {
    state.dragTo(from.x, from.y, to.x, to.y);
  } else if (state.mode === "sigma") {
    state.setSigma(Math.hypot(to.x - from.x, to.y - from.y));
  } else if (state.mode === "hole") {
    const scale = Math.max(f.width - 1, f.height - 1);
    const r = Math.hypot(
      (to.x - from.x) * (f.width - 1),
      (to.y - from.y) * (f.height - 1),
    ) / scale;
    state.placeHole([from.x, from.y], r);
  }
}

canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  state.zoomScale = Math.min(24, Math.max(1, state.zoomScale + (ev.deltaY < 0 ? 1 : -1)));
  draw();
});

async function refreshTopology(): Promise<void> {
  const doc = await api.topology(state.sessionId);
  state.loadTopology(doc, decodeFieldB64(doc.field));
  draw();
}

async function openSession(): Promise<void> {
  const name = el<HTMLInputElement>("corpusname").value.trim();
  const file = el<HTMLInputElement>("pgmfile").files?.[0];
  try {
    state.busy = true;
    updateSubmit();
    let sid: string;
    if (file) {
      const bytes = new Uint8Array(await file.arrayBuffer());
      let bin = "";
      bytes.forEach((b) => (bin += String.fromCharCode(b)));
      const specText = el<HTMLTextAreaElement>("specjson").value;
      sid = (await api.createSessionFromField(btoa(bin), JSON.parse(specText))).session_id;
    } else if (name) {
      sid = (await api.createSessionFromCorpus(name)).session_id;
    } else {
      setStatus("name a corpus design or choose a PGM file");
      return;
    }
    state.sessionId = sid;
    await refreshTopology();
    setStatus(`session ${sid}`);
  } catch (e) {
    setStatus(e instanceof ApiError ? `${e.code}: ${e.message}` : String(e));
  } finally {
    state.busy = false;
    updateSubmit();
  }
}

async function submitEdit(): Promise<void> {
  const req = state.pendingRequest();
  if (!req) return;
  try {
    const { edit_id } = await api.submitEdit(state.sessionId, req);
    state.beginEdit(edit_id);
    updateSubmit();
    setStatus(`edit ${edit_id} sampling...`);
    const doc = await api.pollEdit(edit_id, {
      onPoll: (d) => setStatus(`edit ${edit_id}: ${d.status}`),
    });
    state.finishEdit(doc);
    if (doc.status === "failed") {
      setStatus(`edit failed: ${doc.error}`);
    } else {
      setStatus(`edit done, ${doc.candidates?.length ?? 0} candidates`);
    }
    renderGallery(doc);
  } catch (e) {
    state.inFlightEdit = null;
    setStatus(e instanceof ApiError ? `${e.code}: ${e.message}` : String(e));
  }
  updateSubmit();
}

function renderGallery(doc: EditDoc): void {
  gallery.replaceChildren();
  if (doc.status !== "done" || !doc.candidates || !doc.kind || !doc.reference) return;
  const reference = decodeFieldB64(doc.reference);
  const ordered = state.gallery?.ordered ?? doc.candidates;
  for (const cand of ordered) {
    gallery.appendChild(tile(doc, cand, reference));
  }
}

function tile(doc: EditDoc, cand: CandidateDoc, reference: Field): HTMLElement {
  const wrap = document.createElement("div");
  wrap.className = "tile" + (cand.index === state.gallery?.highlighted ? " best" : "");
  const base = document.createElement("canvas");
  const field = decodeFieldB64(cand.field);
  rasterToCanvas(renderField(field, 3, "nearest"), base);
  const diff = document.createElement("canvas");
  rasterToCanvas(renderField(field, 3, "nearest"), diff);
  const overlay = diffOverlay(field, reference);
  const octx = diff.getContext("2d")!;
  const up = document.createElement("canvas");
  rasterToCanvas(overlay, up);
  octx.imageSmoothingEnabled = false;
  octx.globalAlpha = 0.55;
  octx.drawImage(up, 0, 0, diff.width, diff.height);
  base.title = "candidate";
  diff.title = "diff vs reference: red removed, green added";
  wrap.appendChild(base);
  wrap.appendChild(diff);

  const meta = document.createElement("div");
  meta.className = "badges";
  for (const b of tileBadges(doc.kind!, cand)) {
    const span = document.createElement("span");
    span.textContent = `${b.label} ${b.value}`;
    meta.appendChild(span);
  }
  const key = document.createElement("span");
  key.className = "key";
  key.textContent = `#${cand.index}`;
  meta.appendChild(key);
  wrap.appendChild(meta);

  const pick = document.createElement("button");
  pick.textContent = "select";
  pick.addEventListener("click", async () => {
    try {
      await api.select(doc.edit_id, cand.index);
      await refreshTopology();
      state.committed(state.topology!, state.field!);
      gallery.replaceChildren();
      setStatus(`committed candidate ${cand.index} (objective ${JSON.stringify(selectionKey(doc.kind!, cand))})`);
      draw();
    } catch (e) {
      setStatus(e instanceof ApiError ? `${e.code}: ${e.message}` : String(e));
    }
  });
  wrap.appendChild(pick);
  return wrap;
}

async function refineTen(): Promise<void> {
  try {
    state.busy = true;
    updateSubmit();
    const doc = await api.refine(state.sessionId, 10);
    setStatus(`refined 10 steps, compliance ${doc.compliance.toPrecision(5)}`);
    await refreshTopology();
  } catch (e) {
    setStatus(e instanceof ApiError ? `${e.code}: ${e.message}` : String(e));
  } finally {
    state.busy = false;
    updateSubmit();
  }
}

function bindControls(): void {
  el<HTMLButtonElement>("open").addEventListener("click", openSession);
  submitBtn.addEventListener("click", submitEdit);
  refineBtn.addEventListener("click", refineTen);
  for (const mode of ["warp", "sigma", "hole", "lattice"] as Mode[]) {
    el<HTMLInputElement>(`mode-${mode}`).addEventListener("change", () => {
      state.mode = mode;
      draw();
    });
  }
  for (const t of ["skeleton", "joints", "bcs", "hole", "lattice", "heatmap"] as const) {
    el<HTMLInputElement>(`tog-${t}`).addEventListener("change", (ev) => {
      state.toggles[t] = (ev.target as HTMLInputElement).checked;
      draw();
    });
  }
  el<HTMLInputElement>("smooth").addEventListener("change", (ev) => {
    state.smooth = (ev.target as HTMLInputElement).checked;
    draw();
  });
  const num = (id: string, apply: (v: number) => void) =>
    el<HTMLInputElement>(id).addEventListener("change", (ev) => {
      apply(Number((ev.target as HTMLInputElement).value));
      draw();
    });
  num("samples", (v) => (state.config.num_samples = v));
  num("seed", (v) => (state.config.seed = v));
  num("partial", (v) => (state.config.partial_steps = v));
  num("refinesteps", (v) => (state.config.refine_steps = v));
  num("pitch", (v) => (state.lattice.pitch = v));
  num("member", (v) => (state.lattice.member = v));
  num("shell", (v) => (state.shell = v));
  el<HTMLSelectElement>("pattern").addEventListener("change", (ev) => {
    state.lattice.pattern = (ev.target as HTMLSelectElement).value as "grid" | "cross";
    draw();
  });
}

bindControls();
api
  .healthz()
  .then(() => setStatus("connected; open a session"))
  .catch(() => setStatus("API unreachable"));
