/** End-to-end tests against a real server process, exercising the same code
 * paths the browser uses: gesture composition, client validation, polling,
 * gallery ordering, selection, refinement. Requires python3 with the backend
 * package installed (this repo). */

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, dirname } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { Client } from "../src/api";
import { holeMask, maskPixelCount } from "../src/geometry";
import { selectBest, sortCandidates } from "../src/objective";
import { decodeFieldB64 } from "../src/pgm";
import { EditorState } from "../src/state";
import type { EditRequestDoc, SpecDoc } from "../src/types";
import { validateRequest } from "../src/validate";

const HERE = dirname(fileURLToPath(import.meta.url));
const LONG = 240_000;

let work = "";
let server: ChildProcess | null = null;
let api: Client;
let spec: SpecDoc;
let solidB64 = "";

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

async function freePort(): Promise<number> {
  const net = await import("node:net");
  return new Promise((resolve, reject) => {
    const srv = net.createServer();
    srv.listen(0, "127.0.0.1", () => {
      const addr = srv.address();
      if (addr && typeof addr === "object") {
        const port = addr.port;
        srv.close(() => resolve(port));
      } else {
        reject(new Error("no port"));
      }
    });
  });
}

beforeAll(async () => {
  work = mkdtempSync(join(tmpdir(), "tfui-"));
  const fix = spawnSync("python3", [join(HERE, "fixture.py"), work], {
    encoding: "utf8",
    timeout: 180_000,
  });
  if (!fix.stdout.includes("fixtures ready")) {
    throw new Error(`fixture build failed: ${fix.stderr}`);
  }
  spec = JSON.parse(readFileSync(join(work, "spec.json"), "utf8"));
  solidB64 = readFileSync(join(work, "solid.pgm")).toString("base64");

  const port = await freePort();
  server = spawn(
    "python3",
    [
      "-m",
      "topoforge.cli",
      "serve",
      "--model",
      join(work, "model.ckpt"),
      "--store",
      join(work, "store"),
      "--corpus",
      join(work, "corpus"),
      "--port",
      String(port),
    ],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  let stderr = "";
  server.stderr?.on("data", (d) => (stderr += String(d)));
  api = new Client(`http://127.0.0.1:${port}`);
  const deadline = Date.now() + 90_000;
  for (;;) {
    try {
      await api.healthz();
      break;
    } catch {
      if (Date.now() > deadline) throw new Error(`server never came up: ${stderr}`);
      if (server.exitCode !== null) throw new Error(`server exited: ${stderr}`);
      await new Promise((r) => setTimeout(r, 500));
    }
  }
}, LONG);

afterAll(() => {
  server?.kill("SIGTERM");
  if (work) rmSync(work, { recursive: true, force: true });
});

describe("session round trip", () => {
  it(
    "opens a corpus session and renders its topology",
    async () => {
      const { session_id } = await api.createSessionFromCorpus("d000");
      const topo = await api.topology(session_id);
      expect(topo.width).toBe(16);
      const field = decodeFieldB64(topo.field);
      expect(field.values.length).toBe(256);
      expect(topo.compliance).toBeGreaterThan(0);
      for (const [x, y] of topo.joints) {
        expect(x).toBeGreaterThanOrEqual(0);
        expect(x).toBeLessThanOrEqual(1);
        expect(y).toBeGreaterThanOrEqual(0);
        expect(y).toBeLessThanOrEqual(1);
      }
    },
    LONG,
  );

  it(
    "walks the full UI flow: gesture, sample N=4, select, refine",
    async () => {
      const { session_id } = await api.createSessionFromCorpus("d000");
      const topo = await api.topology(session_id);

      const state = new EditorState();
      state.loadTopology(topo, decodeFieldB64(topo.field));
      state.config = { num_samples: 4, seed: 21, partial_steps: 0, refine_steps: 0 };
      state.dragTo(0.5, 0.5, 0.55, 0.5);
      expect(state.warp?.valid).toBe(true);
      const req = state.pendingRequest();
      expect(req).not.toBeNull();

      const { edit_id } = await api.submitEdit(session_id, req!);
      state.beginEdit(edit_id);
      const doc = await api.pollEdit(edit_id, { timeoutMs: 120_000 });
      state.finishEdit(doc);
      expect(doc.status).toBe("done");
      expect(doc.candidates).toHaveLength(4);

      // gallery order is a pure function of metrics and matches the server
      expect(state.gallery).not.toBeNull();
      const ordered = state.gallery!.ordered;
      expect(ordered[0]!.index).toBe(doc.best_index);
      expect(selectBest(doc.kind!, doc.candidates!)).toBe(doc.best_index);

      const pick = state.gallery!.highlighted;
      const sel = await api.select(edit_id, pick);
      expect(sel.working).toBe(doc.candidates![pick]!.field);

      const after = await api.topology(session_id);
      state.committed(after, decodeFieldB64(after.field));
      expect(after.field).toBe(sel.working);
      expect(after.history.length).toBe(1);
      expect(after.history[0]).toMatchObject({ edit_id, candidate_index: pick });

      const refined = await api.refine(session_id, 10);
      expect(Number.isFinite(refined.compliance)).toBe(true);
      const final = await api.topology(session_id);
      expect(final.history.length).toBe(2);
      expect(final.history[1]).toMatchObject({ refine_steps: 10 });
    },
    LONG,
  );

  it(
    "commit-then-re-edit uses the committed field as the new reference",
    async () => {
      const { session_id } = await api.createSessionFromCorpus("d001");
      const topo = await api.topology(session_id);
      const state = new EditorState();
      state.loadTopology(topo, decodeFieldB64(topo.field));
      state.config = { num_samples: 1, seed: 3, partial_steps: 0, refine_steps: 0 };

      state.mode = "hole";
      state.placeHole([0.3, 0.3], 0.12);
      const first = await api.submitEdit(session_id, state.pendingRequest()!);
      const firstDoc = await api.pollEdit(first.edit_id, { timeoutMs: 120_000 });
      expect(firstDoc.status).toBe("done");
      await api.select(first.edit_id, 0);
      const committed = await api.topology(session_id);
      expect(committed.history.length).toBe(1);
      state.committed(committed, decodeFieldB64(committed.field));
      expect(state.warp).toBeNull();
      expect(state.gallery).toBeNull();

      // the second hole's reference must derive from the committed field,
      // not the original: outside the new mask it is byte-identical to the
      // committed field, inside it is cleared
      state.placeHole([0.7, 0.6], 0.15);
      const second = await api.submitEdit(session_id, state.pendingRequest()!);
      const secondDoc = await api.pollEdit(second.edit_id, { timeoutMs: 120_000 });
      expect(secondDoc.status).toBe("done");
      const reference = decodeFieldB64(secondDoc.reference!);
      const base = decodeFieldB64(committed.field);
      const mask = holeMask([0.7, 0.6], 0.15, base.width, base.height);
      expect(maskPixelCount(mask)).toBeGreaterThan(0);
      for (let i = 0; i < base.values.length; i++) {
        if (mask.values[i]) expect(reference.values[i]).toBe(0);
        else expect(reference.values[i]).toBe(base.values[i]);
      }
    },
    LONG,
  );

  it(
    "sampled candidates order the gallery exactly as the server ranks them",
    async () => {
      const { session_id } = await api.createSessionFromCorpus("d000");
      const req: EditRequestDoc = {
        kind: "warp",
        config: { num_samples: 4, seed: 7, partial_steps: 5, refine_steps: 0 },
        warp: { handles: [{ x: 0.4, y: 0.5, dx: 0.04, dy: -0.02, sigma: 0.12 }] },
      };
      expect(validateRequest(req).ok).toBe(true);
      const { edit_id } = await api.submitEdit(session_id, req);
      const doc = await api.pollEdit(edit_id, { timeoutMs: 180_000 });
      expect(doc.status).toBe("done");
      expect(doc.candidates).toHaveLength(4);
      expect(selectBest(doc.kind!, doc.candidates!)).toBe(doc.best_index);
      const ordered = sortCandidates(doc.kind!, doc.candidates!);
      expect(ordered[0]!.index).toBe(doc.best_index);
      const indices = ordered.map((c) => c.index).sort((a, b) => a - b);
      expect(indices).toEqual([0, 1, 2, 3]);
    },
    LONG,
  );
});

describe("hole preview parity", () => {
  it(
    "preview pixel count equals the server-side mask pixel count",
    async () => {
      const { session_id } = await api.createSessionFromField(solidB64, spec);
      const center: [number, number] = [0.3, 0.4];
      const radius = 0.21;
      const req: EditRequestDoc = {
        kind: "nodesign",
        config: { num_samples: 1, seed: 0, partial_steps: 0 },
        center,
        radius,
      };
      expect(validateRequest(req).ok).toBe(true);
      const { edit_id } = await api.submitEdit(session_id, req);
      const doc = await api.pollEdit(edit_id, { timeoutMs: 120_000 });
      expect(doc.status).toBe("done");
      // the reference is the hole-cleared solid field, so its void pixels
      // are exactly the server's mask
      const reference = decodeFieldB64(doc.reference!);
      let serverCount = 0;
      for (const v of reference.values) if (v < 0.5) serverCount++;
      const preview = maskPixelCount(holeMask(center, radius, 16, 16));
      expect(serverCount).toBeGreaterThan(0);
      expect(preview).toBe(serverCount);
    },
    LONG,
  );
});

describe("fuzzed gestures", () => {
  function randomRequest(rnd: () => number): EditRequestDoc {
    const config = {
      num_samples: 1,
      seed: Math.floor(rnd() * 1000),
      partial_steps: rnd() < 0.15 ? Math.floor(rnd() * 260) : 0,
      refine_steps: 0,
    };
    const roll = rnd();
    if (roll < 0.45) {
      // anchors sometimes out of bounds, drags sometimes over the limit
      const sigma = rnd() < 0.1 ? rnd() * 0.1 - 0.02 : 0.03 + rnd() * 0.25;
      const reach = 4 * Math.max(sigma, 0.01);
      return {
        kind: "warp",
        config,
        warp: {
          handles: [
            {
              x: rnd() * 1.4 - 0.2,
              y: rnd() * 1.4 - 0.2,
              dx: (rnd() - 0.5) * reach,
              dy: (rnd() - 0.5) * reach,
              sigma,
            },
          ],
        },
      };
    }
    if (roll < 0.75) {
      const pitch = Math.floor(rnd() * 12);
      return {
        kind: "lattice",
        config,
        lattice: {
          pattern: rnd() < 0.1 ? ("hex" as never) : rnd() < 0.5 ? "grid" : "cross",
          pitch,
          member: Math.floor(rnd() * 12),
        },
        shell: rnd() * 7 - 1,
      };
    }
    return {
      kind: "nodesign",
      config,
      center: [rnd() * 1.4 - 0.2, rnd() * 1.4 - 0.2],
      radius: rnd() * 0.5 - 0.1,
    };
  }

  it(
    "client-validated gestures are never rejected by the server",
    async () => {
      const { session_id } = await api.createSessionFromCorpus("d000");
      const rnd = mulberry32(0xf00d);
      let submitted = 0;
      let clientRejected = 0;
      for (let i = 0; i < 300; i++) {
        const req = randomRequest(rnd);
        if (!validateRequest(req).ok) {
          clientRejected++;
          continue;
        }
        // lattice composition needs a nondegenerate result; vf collapse is a
        // job-time concern, not a validation one, so submit everything
        const resp = await api.submitEdit(session_id, req);
        expect(resp.edit_id).toMatch(/^e_/);
        submitted++;
      }
      // the fuzz population must exercise both sides of the mirror
      expect(submitted).toBeGreaterThan(50);
      expect(clientRejected).toBeGreaterThan(50);
    },
    LONG,
  );

  it(
    "the mirror is tight: server rejects what the client rejects",
    async () => {
      const { session_id } = await api.createSessionFromCorpus("d000");
      const bad: EditRequestDoc[] = [
        {
          kind: "warp",
          config: {},
          warp: { handles: [{ x: 0.5, y: 0.5, dx: 0.3, dy: 0, sigma: 0.1 }] },
        },
        { kind: "lattice", config: {}, lattice: { pattern: "grid", pitch: 1, member: 1 }, shell: 2 },
        {
          kind: "lattice",
          config: {},
          lattice: { pattern: "hex" as never, pitch: 4, member: 1 },
          shell: 2,
        },
        { kind: "warp", config: { num_samples: 0 }, warp: { handles: [{ x: 0.5, y: 0.5, dx: 0.01, dy: 0, sigma: 0.1 }] } },
        { kind: "spiral" as never, config: {} },
      ];
      for (const req of bad) {
        expect(validateRequest(req).ok).toBe(false);
        await expect(api.submitEdit(session_id, req)).rejects.toMatchObject({ status: 422 });
      }
    },
    LONG,
  );
});
