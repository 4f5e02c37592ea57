// Golden event streams are shared with the engine's test fixtures so the UI
// is always tested against exactly what the service emits.

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { TraceEvent } from "../src/types.js";

const here = dirname(fileURLToPath(import.meta.url));
const goldens = join(here, "..", "..", "tests", "fixtures", "goldens");

export function loadEvents(name: string): TraceEvent[] {
  const raw = readFileSync(join(goldens, `${name}.events.jsonl`), "utf-8");
  return raw
    .split("\n")
    .filter((line) => line.trim())
    .map((line) => JSON.parse(line) as TraceEvent);
}

export function loadAnswer(name: string): string {
  return readFileSync(join(goldens, `${name}.answer.txt`), "utf-8").trimEnd();
}
