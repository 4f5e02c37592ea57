// Wire types mirroring the service's event stream and run endpoints.

export interface TraceEvent {
  run_id: string;
  seq: number;
  phase: string;
  payload: Record<string, unknown>;
  wall_time: number;
}

export interface PlanView {
  answerable: boolean;
  steps: string[];
  rationale: string;
}

export interface RequestView {
  text: string;
  streams: string[];
  repeat: boolean;
}

export interface MemoryView {
  summary: string;
  failed: boolean;
  requestText: string;
}

export interface UnderstandingView {
  narrative: string;
  needs: string[];
  failureNote: string | null;
}

export interface RunHandle {
  run_id: string;
  created_at: number;
  status: string;
  query: string;
  user_id: string;
}

export const TERMINAL_PHASES = new Set([
  "answered",
  "unanswerable",
  "halted_failure",
  "cutoff",
  "error",
]);
