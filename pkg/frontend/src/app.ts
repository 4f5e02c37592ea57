// DOM wiring: form submission, one live stream at a time, history pane.
// All panel content flows through applyEvent/renderRun; this file only
// moves strings in and out of the document.

import { getRun, listRuns, startRun, streamEvents } from "./api.js";
import { QueryHistory } from "./history.js";
import { renderHistory, renderRun } from "./render.js";
import { applyEvent, initialState, replay, ViewState } from "./state.js";
import { TERMINAL_PHASES } from "./types.js";

const base = "";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

export function mount(): void {
  const queryInput = el<HTMLTextAreaElement>("query");
  const instructionsInput = el<HTMLInputElement>("instructions");
  const userInput = el<HTMLInputElement>("user-id");
  const startButton = el<HTMLButtonElement>("start");
  const runPane = el<HTMLDivElement>("run");
  const historyPane = el<HTMLDivElement>("history");
  const banner = el<HTMLDivElement>("banner");
  const history = new QueryHistory(window.localStorage);

  let state: ViewState = initialState();
  let streaming = false;

  const draw = () => {
    runPane.innerHTML = renderRun(state);
  };

  const drawHistory = async () => {
    try {
      const runs = await listRuns(base);
      historyPane.innerHTML = renderHistory(history.merge(runs));
    } catch {
      historyPane.innerHTML = renderHistory(history.merge([]));
    }
  };

  const showError = (message: string) => {
    banner.textContent = message;
    banner.hidden = false;
  };

  startButton.addEventListener("click", async () => {
    const query = queryInput.value.trim();
    if (!query || streaming) {
      return;
    }
    banner.hidden = true;
    state = initialState();
    draw();
    streaming = true;
    startButton.disabled = true;
    try {
      const runId = await startRun(
        base, query, instructionsInput.value.trim(), userInput.value.trim());
      history.record({
        runId, query, status: "running", createdAt: Date.now() / 1000,
      });
      await streamEvents(base, runId, (event) => {
        state = applyEvent(state, event);
        draw();
      });
      history.record({
        runId, query, status: state.phase, createdAt: Date.now() / 1000,
      });
    } catch (err) {
      showError(`Service unreachable or run failed: ${String(err)}. ` +
        "Check that the service is running, then retry.");
    } finally {
      streaming = false;
      startButton.disabled = false;
      void drawHistory();
    }
  });

  historyPane.addEventListener("click", async (evt) => {
    const row = (evt.target as HTMLElement).closest<HTMLElement>(".history-row");
    if (!row || streaming) {
      return;
    }
    const runId = row.dataset.runId;
    if (!runId) {
      return;
    }
    try {
      const finished = await getRun(base, runId);
      state = replay(finished.events ?? []);
      if (!TERMINAL_PHASES.has(state.phase) && finished.status) {
        state = { ...state, phase: finished.status };
      }
      draw();
    } catch (err) {
      showError(`Could not load run ${runId}: ${String(err)}`);
    }
  });

  draw();
  void drawHistory();
}

if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", mount);
}
