// Thin client over the service endpoints. Events arrive as one JSON object
// per line on a long-lived response body.

import { RunHandle, TraceEvent } from "./types.js";

export async function startRun(
  base: string,
  query: string,
  instructions: string,
  userId: string,
): Promise<string> {
  const resp = await fetch(`${base}/runs`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ query, instructions, user_id: userId }),
  });
  if (!resp.ok) {
    const body = await resp.text();
    throw new Error(`run rejected (${resp.status}): ${body}`);
  }
  const data = (await resp.json()) as { run_id: string };
  return data.run_id;
}

export async function streamEvents(
  base: string,
  runId: string,
  onEvent: (event: TraceEvent) => void,
): Promise<void> {
  const resp = await fetch(`${base}/runs/${runId}/events`);
  if (!resp.ok || !resp.body) {
    throw new Error(`event stream unavailable (${resp.status})`);
  }
  const reader = resp.body.getReader();
  const decoder = new TextDecoder();
  let buffer = "";
  for (;;) {
    const { value, done } = await reader.read();
    if (value) {
      buffer += decoder.decode(value, { stream: true });
      buffer = drainLines(buffer, onEvent);
    }
    if (done) {
      break;
    }
  }
  drainLines(buffer + "\n", onEvent);
}

export function drainLines(
  buffer: string,
  onEvent: (event: TraceEvent) => void,
): string {
  let start = 0;
  for (;;) {
    const nl = buffer.indexOf("\n", start);
    if (nl < 0) {
      break;
    }
    const line = buffer.slice(start, nl).trim();
    start = nl + 1;
    if (line) {
      onEvent(JSON.parse(line) as TraceEvent);
    }
  }
  return buffer.slice(start);
}

export interface FinishedRun {
  run_id: string;
  status: string;
  ready: boolean;
  answer: { text: string } | null;
  events: TraceEvent[];
}

export async function getRun(base: string, runId: string): Promise<FinishedRun> {
  const resp = await fetch(`${base}/runs/${runId}`);
  if (!resp.ok) {
    throw new Error(`run ${runId} unavailable (${resp.status})`);
  }
  return (await resp.json()) as FinishedRun;
}

export async function listRuns(base: string): Promise<RunHandle[]> {
  const resp = await fetch(`${base}/runs`);
  if (!resp.ok) {
    throw new Error(`run listing unavailable (${resp.status})`);
  }
  const data = (await resp.json()) as { runs: RunHandle[] };
  return data.runs;
}
