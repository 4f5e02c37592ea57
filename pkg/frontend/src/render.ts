// Pure HTML rendering of the view state; no DOM access, so renders are
// snapshot-testable and guaranteed to be a function of state alone.

import { ViewState } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

const PHASE_LABELS: Record<string, string> = {
  idle: "Idle",
  pending: "Starting",
  planning: "Drafting action plan",
  deciding: "Checking whether the answer is ready",
  seeking: "Formulating information request",
  executing: "Fetching data (generated code)",
  local_sense: "Summarizing results",
  global_sense: "Refining understanding",
  answered: "Answered",
  unanswerable: "Not answerable with the available data",
  halted_failure: "Stopped: data could not be fetched",
  cutoff: "Stopped at the iteration limit",
  error: "Run failed",
};

export function phaseLabel(phase: string): string {
  return PHASE_LABELS[phase] ?? phase;
}

function section(title: string, body: string, extraClass = ""): string {
  return (
    `<section class="panel ${extraClass}">` +
    `<h2>${escapeHtml(title)}</h2>${body}</section>`
  );
}

function renderPlan(state: ViewState): string {
  if (!state.plan) {
    return `<p class="placeholder">No plan yet.</p>`;
  }
  const steps = state.plan.steps
    .map((s) => `<li>${escapeHtml(s)}</li>`)
    .join("");
  const marker = state.plan.answerable
    ? ""
    : `<p class="warn">The query cannot be answered with the available databases.</p>`;
  return (
    marker +
    (steps ? `<ol class="plan-steps">${steps}</ol>` : "") +
    `<p class="rationale">${escapeHtml(state.plan.rationale)}</p>`
  );
}

function renderRequests(state: ViewState): string {
  if (state.requests.length === 0) {
    return `<p class="placeholder">No information requests yet.</p>`;
  }
  const items = state.requests
    .map((r, i) => {
      const streams = r.streams.length
        ? ` <span class="streams">[${r.streams.map(escapeHtml).join(", ")}]</span>`
        : "";
      const repeat = r.repeat ? ` <span class="repeat">(repeat)</span>` : "";
      return `<li class="request-row" data-index="${i}">${escapeHtml(r.text)}${streams}${repeat}</li>`;
    })
    .join("");
  return `<ol class="request-list">${items}</ol>`;
}

function renderMemory(state: ViewState): string {
  if (state.memory.length === 0) {
    return `<p class="placeholder">Memory is empty.</p>`;
  }
  const items = state.memory
    .map((m, i) => {
      const flag = m.failed ? ` <span class="failed">FAILED</span>` : "";
      return (
        `<li class="memory-row" data-index="${i}">` +
        `<span class="memory-request">${escapeHtml(m.requestText)}</span>${flag}` +
        `<p class="memory-summary">${escapeHtml(m.summary)}</p></li>`
      );
    })
    .join("");
  return `<ol class="memory-list">${items}</ol>`;
}

function renderUnderstanding(state: ViewState): string {
  if (!state.understanding) {
    return `<p class="placeholder">No understanding yet.</p>`;
  }
  const u = state.understanding;
  const needs = u.needs.length
    ? `<p class="needs">Would help: ${u.needs.map(escapeHtml).join("; ")}</p>`
    : "";
  const failure = u.failureNote
    ? `<p class="failure-note">Data gap: ${escapeHtml(u.failureNote)}</p>`
    : "";
  return `<p class="narrative">${escapeHtml(u.narrative)}</p>${needs}${failure}`;
}

function renderAnswer(state: ViewState): string {
  if (state.error) {
    return `<p class="error">${escapeHtml(state.error)}</p>`;
  }
  if (!state.answer) {
    return `<p class="placeholder">The answer appears here when the run finishes.</p>`;
  }
  const note =
    state.phase === "cutoff"
      ? `<p class="warn">Iteration limit reached; answer derived from the latest understanding.</p>`
      : "";
  return `${note}<p class="answer-text">${escapeHtml(state.answer)}</p>`;
}

/** Status bar plus the four sensemaking panels plus the answer. */
export function renderRun(state: ViewState): string {
  const status =
    `<div class="status-bar" data-phase="${escapeHtml(state.phase)}">` +
    `<span class="phase">${escapeHtml(phaseLabel(state.phase))}</span>` +
    `<span class="iteration">iteration ${state.iteration}</span>` +
    (state.statusDetail
      ? `<span class="detail">${escapeHtml(state.statusDetail)}</span>`
      : "") +
    `</div>`;
  return (
    status +
    section("Action Plan", renderPlan(state), "plan-panel") +
    section("Information Requests", renderRequests(state), "requests-panel") +
    section("Memory", renderMemory(state), "memory-panel") +
    section("Understanding", renderUnderstanding(state), "understanding-panel") +
    section("Answer", renderAnswer(state), "answer-panel")
  );
}

export interface HistoryEntry {
  runId: string;
  query: string;
  status: string;
  createdAt: number;
}

export function renderHistory(entries: HistoryEntry[]): string {
  if (entries.length === 0) {
    return `<p class="placeholder">No past queries yet.</p>`;
  }
  const items = entries
    .map(
      (e) =>
        `<li class="history-row" data-run-id="${escapeHtml(e.runId)}">` +
        `<span class="history-status">${escapeHtml(e.status)}</span> ` +
        `<span class="history-query">${escapeHtml(e.query)}</span></li>`,
    )
    .join("");
  return `<ul class="history-list">${items}</ul>`;
}
