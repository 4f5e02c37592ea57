import { describe, expect, it } from "vitest";

import { applyEvent, initialState, replay } from "../src/state.js";
import { loadAnswer, loadEvents } from "./fixtures.js";

describe("happy path replay", () => {
  const events = loadEvents("happy-path");

  it("fills the panels in seq order: plan, request, memory, understanding, answer", () => {
    let state = initialState();
    const firstSeq: Record<string, number> = {};
    for (const event of events) {
      state = applyEvent(state, event);
      if (state.plan && firstSeq.plan === undefined) firstSeq.plan = event.seq;
      if (state.requests.length && firstSeq.request === undefined)
        firstSeq.request = event.seq;
      if (state.memory.length && firstSeq.memory === undefined)
        firstSeq.memory = event.seq;
      if (state.understanding && firstSeq.understanding === undefined)
        firstSeq.understanding = event.seq;
      if (state.answer && firstSeq.answer === undefined)
        firstSeq.answer = event.seq;
    }
    expect(firstSeq.plan).toBeLessThan(firstSeq.request);
    expect(firstSeq.request).toBeLessThan(firstSeq.memory);
    expect(firstSeq.memory).toBeLessThan(firstSeq.understanding);
    expect(firstSeq.understanding).toBeLessThan(firstSeq.answer);
  });

  it("ends answered with one request and one memory entry", () => {
    const state = replay(events);
    expect(state.phase).toBe("answered");
    expect(state.done).toBe(true);
    expect(state.requests).toHaveLength(1);
    expect(state.memory).toHaveLength(1);
    expect(state.answer).toBe(loadAnswer("happy-path"));
  });

  it("matches the snapshot of the final state", () => {
    expect(replay(events)).toMatchSnapshot();
  });

  it("is a pure function of the event sequence", () => {
    const once = replay(events);
    const twice = replay(events);
    expect(twice).toEqual(once);
    // folding must not mutate the previous state
    const base = initialState();
    const frozen = JSON.stringify(base);
    applyEvent(base, events[0]);
    expect(JSON.stringify(base)).toBe(frozen);
  });

  it("ignores duplicate deliveries of the same seq", () => {
    let state = initialState();
    for (const event of events) {
      state = applyEvent(state, event);
      state = applyEvent(state, event); // duplicate
    }
    expect(state.requests).toHaveLength(1);
    expect(state.memory).toHaveLength(1);
  });
});

describe("cutoff replay", () => {
  const events = loadEvents("cutoff");

  it("renders exactly five request and five memory rows", () => {
    const state = replay(events);
    expect(state.phase).toBe("cutoff");
    expect(state.requests).toHaveLength(5);
    expect(state.memory).toHaveLength(5);
    expect(state.iteration).toBe(5);
    expect(state.answer).toBe(loadAnswer("cutoff"));
  });

  it("keeps memory entries in stream order", () => {
    const state = replay(events);
    const markers = state.memory.map((m) => m.summary);
    expect(markers).toEqual([...markers].sort((a, b) => a.localeCompare(b)));
    expect(markers[0]).toContain("1");
    expect(markers[4]).toContain("5");
  });
});

describe("unanswerable replay", () => {
  const events = loadEvents("ppg");

  it("shows the plan rationale, no requests, and an explanatory answer", () => {
    const state = replay(events);
    expect(state.phase).toBe("unanswerable");
    expect(state.plan?.answerable).toBe(false);
    expect(state.plan?.rationale).toContain("PPG");
    expect(state.requests).toHaveLength(0);
    expect(state.memory).toHaveLength(0);
    expect(state.answer).toContain("PPG");
  });
});

describe("missing-data replay", () => {
  it("carries the failure note into the understanding panel", () => {
    const state = replay(loadEvents("missing-data"));
    expect(state.phase).toBe("halted_failure");
    expect(state.understanding?.failureNote).toContain("activity");
  });
});
