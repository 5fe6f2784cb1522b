/** Wire types for the editing API. Field payloads are base64 binary PGM. */

export interface SupportDoc {
  x: number;
  y: number;
  fix_x: boolean;
  fix_y: boolean;
}

export interface LoadDoc {
  x: number;
  y: number;
  fx: number;
  fy: number;
}

export interface SpecDoc {
  supports: SupportDoc[];
  loads: LoadDoc[];
  volume_fraction: number;
  aspect: [number, number];
  cell_size: number;
}

export interface TopologyDoc {
  schema: number;
  session_id: string;
  width: number;
  height: number;
  field: string;
  skeleton: string;
  joints: [number, number][];
  compliance: number | null;
  volume_fraction: number;
  spec: SpecDoc;
  history: Record<string, unknown>[];
}

export interface HandleDoc {
  x: number;
  y: number;
  dx: number;
  dy: number;
  sigma: number;
}

export interface EditConfigDoc {
  total_steps?: number;
  partial_steps?: number;
  guidance_scale?: number;
  num_samples?: number;
  seed?: number;
  refine_steps?: number;
  stride?: number;
}

export interface LatticeDoc {
  pattern: "grid" | "cross";
  pitch: number;
  member: number;
}

export type EditKind = "warp" | "lattice" | "nodesign";

export interface EditRequestDoc {
  kind: EditKind;
  config: EditConfigDoc;
  warp?: { handles: HandleDoc[] };
  lattice?: LatticeDoc;
  shell?: number;
  center?: [number, number];
  radius?: number;
}

export interface CandidateMetrics {
  compliance?: number;
  ce?: number;
  de?: number;
  ratio?: number;
  vf?: number;
  vf_target?: number;
  vfe?: number;
  violation?: number;
  iou?: number;
}

export interface CandidateDoc {
  index: number;
  field: string;
  metrics: CandidateMetrics;
  failed: boolean;
  failure_reason: string;
  record: Record<string, unknown>;
}

export interface EditDoc {
  schema: number;
  edit_id: string;
  session_id: string;
  status: "queued" | "running" | "done" | "failed";
  request: EditRequestDoc;
  error: string;
  kind?: EditKind;
  best_index?: number;
  updated_spec?: SpecDoc;
  reference?: string;
  candidates?: CandidateDoc[];
}

export interface SelectDoc {
  schema: number;
  session_id: string;
  candidate_index: number;
  working: string;
  record: Record<string, unknown>;
}

export interface RefineDoc {
  schema: number;
  session_id: string;
  steps: number;
  working: string;
  compliance: number;
  volume_fraction: number;
}

export interface ModelDoc {
  schema: number;
  architecture: Record<string, unknown>;
  arch_hash: string;
  parameter_count: number;
  checkpoint_hash: string;
  schedule?: { total_steps: number; alpha_bar: number[] };
}

export interface ErrorDoc {
  schema: number;
  code: string;
  message: string;
}

/** Decoded density grid, row-major, values in [0, 1]. */
export interface Field {
  width: number;
  height: number;
  values: Float64Array;
}
