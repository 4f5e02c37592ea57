// Query history: client-persisted entries merged with the server's run
// listing, newest first. Storage is injected so tests run without a browser.

import { HistoryEntry } from "./render.js";
import { RunHandle } from "./types.js";

export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

const STORAGE_KEY = "sensemaker.history";

export class QueryHistory {
  constructor(private storage: KeyValueStore) {}

  load(): HistoryEntry[] {
    const raw = this.storage.getItem(STORAGE_KEY);
    if (!raw) {
      return [];
    }
    try {
      return JSON.parse(raw) as HistoryEntry[];
    } catch {
      return [];
    }
  }

  record(entry: HistoryEntry): HistoryEntry[] {
    const entries = this.load().filter((e) => e.runId !== entry.runId);
    entries.unshift(entry);
    this.storage.setItem(STORAGE_KEY, JSON.stringify(entries));
    return entries;
  }

  /** Local entries merged with the server listing, newest first. */
  merge(serverRuns: RunHandle[]): HistoryEntry[] {
    const byId = new Map<string, HistoryEntry>();
    for (const run of serverRuns) {
      byId.set(run.run_id, {
        runId: run.run_id,
        query: run.query,
        status: run.status,
        createdAt: run.created_at,
      });
    }
    for (const entry of this.load()) {
      if (!byId.has(entry.runId)) {
        byId.set(entry.runId, entry);
      }
    }
    return [...byId.values()].sort((a, b) => b.createdAt - a.createdAt);
  }
}
