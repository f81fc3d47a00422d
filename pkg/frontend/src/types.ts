/** JSON shapes of the tuning service; mirrors the documented endpoint bodies. */

export interface SessionStats {
  statements: number;
  candidates: number;
  templates: number;
  variables: number;
  variables_z: number;
  variables_y: number;
  variables_x: number;
  structural_constraints: number;
  user_constraints: number;
}

export interface CreateSessionResponse {
  session_id: string;
  stats: SessionStats;
}

export interface ProgressEvent {
  type: "progress";
  elapsed_ms: number;
  incumbent: number;
  lower_bound: number;
  gap: number;
  nodes_explored: number;
}

export interface IndexInfo {
  id: string;
  table: string;
  key: string[];
  include: string[];
  clustered: boolean;
  size_bytes: number;
  provenance?: string;
}

export interface PerQueryRow {
  id: string;
  kind: string;
  weight: number;
  cost_baseline: number;
  cost_recommended?: number;
  cost_whatif?: number;
}

export interface Recommendation {
  type?: "recommendation";
  indexes: IndexInfo[];
  objective: number;
  lower_bound: number;
  gap: number;
  status: string;
  nodes_explored: number;
  elapsed_ms: number;
  per_query: PerQueryRow[];
  total_baseline: number;
  total_recommended: number;
  perf: number;
  constraint_report: { origin: string; satisfied: boolean }[];
  stats: SessionStats;
}

export interface StreamError {
  type: "error";
  error: string;
  module: string;
  message: string;
  report?: string[];
}

export type SolveEvent = ProgressEvent | (Recommendation & { type: "recommendation" }) | StreamError;

export interface ParetoPoint {
  lambda: number[];
  objectives: number[];
  indexes: string[];
  solve_ms: number;
}

export interface WhatifReport {
  rows: PerQueryRow[];
  total_baseline: number;
  total_whatif: number;
}

export interface DeltaRequest {
  add_candidates?: { table: string; key: string[]; include?: string[]; clustered?: boolean }[];
  remove_candidates?: string[];
  add_constraints?: string[];
  remove_constraints?: string[];
  set_weights?: Record<string, number>;
}
