// View state and its reducer. The UI computes nothing itself: every panel
// renders data carried by the event stream, and applyEvent is a pure
// function so replaying one stream always yields one state.

import {
  MemoryView,
  PlanView,
  RequestView,
  TERMINAL_PHASES,
  TraceEvent,
  UnderstandingView,
} from "./types.js";

export interface ViewState {
  runId: string | null;
  phase: string;
  statusDetail: string;
  iteration: number;
  plan: PlanView | null;
  requests: RequestView[];
  memory: MemoryView[];
  understanding: UnderstandingView | null;
  answer: string | null;
  done: boolean;
  lastSeq: number;
  error: string | null;
}

export function initialState(): ViewState {
  return {
    runId: null,
    phase: "idle",
    statusDetail: "",
    iteration: 0,
    plan: null,
    requests: [],
    memory: [],
    understanding: null,
    answer: null,
    done: false,
    lastSeq: -1,
    error: null,
  };
}

function asRecord(value: unknown): Record<string, unknown> {
  return (value ?? {}) as Record<string, unknown>;
}

function asStrings(value: unknown): string[] {
  return Array.isArray(value) ? value.map(String) : [];
}

/** Fold one trace event into the view state (pure: inputs are not mutated). */
export function applyEvent(state: ViewState, event: TraceEvent): ViewState {
  if (event.seq <= state.lastSeq) {
    return state; // duplicate delivery; the stream itself is gap-free
  }
  const next: ViewState = {
    ...state,
    requests: state.requests.slice(),
    memory: state.memory.slice(),
    runId: event.run_id,
    lastSeq: event.seq,
  };
  const payload = event.payload ?? {};
  const output = asRecord(payload["output"]);

  switch (event.phase) {
    case "action_plan": {
      next.plan = {
        answerable: Boolean(output["answerable"]),
        steps: asStrings(output["steps"]),
        rationale: String(output["rationale"] ?? ""),
      };
      break;
    }
    case "next_step": {
      next.statusDetail = `next step: ${String(output["verdict"] ?? "")}`;
      break;
    }
    case "information_seeking": {
      next.requests.push({
        text: String(output["text"] ?? ""),
        streams: asStrings(output["target_streams"]),
        repeat: Boolean(output["repeat"]),
      });
      break;
    }
    case "code_generation": {
      next.statusDetail = `generating code (attempt ${String(payload["attempt"] ?? 1)})`;
      break;
    }
    case "data_manager": {
      const ok = Boolean(output["ok"]);
      next.statusDetail = ok ? "data retrieved" : "data retrieval failed";
      break;
    }
    case "local_sensemaking": {
      const request = asRecord(output["request"]);
      next.memory.push({
        summary: String(output["summary"] ?? ""),
        failed: Boolean(output["failed"]),
        requestText: String(request["text"] ?? ""),
      });
      break;
    }
    case "global_sensemaking": {
      next.understanding = {
        narrative: String(output["narrative"] ?? ""),
        needs: asStrings(output["needs"]),
        failureNote:
          output["failure_note"] == null ? null : String(output["failure_note"]),
      };
      break;
    }
    case "presentation": {
      next.answer = String(asRecord(output)["text"] ?? "");
      break;
    }
    default: {
      // a status-transition event (pending, planning, ..., answered)
      const status = payload["status"];
      if (typeof status === "string") {
        next.phase = status;
        next.iteration = Number(payload["iteration"] ?? next.iteration);
        if (TERMINAL_PHASES.has(status)) {
          next.done = true;
          const answer = asRecord(payload["answer"]);
          if (typeof answer["text"] === "string") {
            next.answer = answer["text"];
          }
          if (status === "error") {
            next.error = String(payload["message"] ?? "run failed");
          }
        }
      }
      break;
    }
  }
  return next;
}

/** Replay a whole event sequence from scratch. */
export function replay(events: TraceEvent[]): ViewState {
  let state = initialState();
  for (const event of events) {
    state = applyEvent(state, event);
  }
  return state;
}
