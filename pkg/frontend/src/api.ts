/** Typed client for the editing API. All mutations send an idempotency key;
 * edit jobs are polled with capped exponential backoff. */

import type {
  EditDoc,
  EditRequestDoc,
  ErrorDoc,
  ModelDoc,
  RefineDoc,
  SelectDoc,
  SpecDoc,
  TopologyDoc,
} from "./types";

export class ApiError extends Error {
  status: number;
  code: string;

  constructor(status: number, body: ErrorDoc) {
    super(body.message);
    this.status = status;
    this.code = body.code;
  }
}

function newKey(): string {
  if (typeof crypto !== "undefined" && "randomUUID" in crypto) return crypto.randomUUID();
  return `k_${Date.now()}_${Math.random().toString(36).slice(2)}`;
}

export interface PollOptions {
  initialMs?: number;
  maxMs?: number;
  timeoutMs?: number;
  onPoll?: (doc: EditDoc) => void;
}

export class Client {
  constructor(
    readonly base: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown, key?: string): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (key) headers["Idempotency-Key"] = key;
    const resp = await this.fetchFn(this.base + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const doc = (await resp.json()) as T | ErrorDoc;
    if (!resp.ok) throw new ApiError(resp.status, doc as ErrorDoc);
    return doc as T;
  }

  healthz(): Promise<{ schema: number; status: string }> {
    return this.request("GET", "/healthz");
  }

  model(): Promise<ModelDoc> {
    return this.request("GET", "/model");
  }

  createSessionFromField(fieldB64: string, spec: SpecDoc): Promise<{ session_id: string }> {
    return this.request("POST", "/sessions", { field: fieldB64, spec }, newKey());
  }

  createSessionFromCorpus(name: string): Promise<{ session_id: string }> {
    return this.request("POST", "/sessions", { corpus_item: name }, newKey());
  }

  topology(sessionId: string): Promise<TopologyDoc> {
    return this.request("GET", `/sessions/${sessionId}/topology`);
  }

  submitEdit(sessionId: string, req: EditRequestDoc): Promise<{ edit_id: string }> {
    return this.request("POST", `/sessions/${sessionId}/edits`, req, newKey());
  }

  editStatus(editId: string): Promise<EditDoc> {
    return this.request("GET", `/edits/${editId}`);
  }

  select(editId: string, candidateIndex: number): Promise<SelectDoc> {
    return this.request("POST", `/edits/${editId}/select`, { candidate_index: candidateIndex }, newKey());
  }

  refine(sessionId: string, steps: number): Promise<RefineDoc> {
    return this.request("POST", `/sessions/${sessionId}/refine`, { steps }, newKey());
  }

  /** Poll an edit until done or failed. Resolves with the final doc either
   * way; the caller inspects status. */
  async pollEdit(editId: string, opts: PollOptions = {}): Promise<EditDoc> {
    const initial = opts.initialMs ?? 250;
    const max = opts.maxMs ?? 2000;
    const deadline = Date.now() + (opts.timeoutMs ?? 300_000);
    let wait = initial;
    for (;;) {
      const doc = await this.editStatus(editId);
      opts.onPoll?.(doc);
      if (doc.status === "done" || doc.status === "failed") return doc;
      if (Date.now() > deadline) throw new Error(`edit ${editId} still ${doc.status} at timeout`);
      await new Promise((res) => setTimeout(res, wait));
      wait = Math.min(max, wait * 2);
    }
  }
}
