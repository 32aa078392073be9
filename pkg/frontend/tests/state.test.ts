import { describe, expect, it } from "vitest";

import type { FrameMessage } from "../src/protocol.js";
import {
  applyError,
  applyFrame,
  initialState,
  logEvent,
  markConnected,
  markDisconnected,
  MAX_EVENTS,
} from "../src/state.js";

function frame(seq: number): FrameMessage {
  return {
    type: "frame",
    seq,
    width: 64,
    height: 48,
    png: "",
    annotations: [{ label: "t", score: 1, bbox: [0, 0, 2, 2] }],
    status: "ACTIVE",
    timings: {},
  };
}

describe("frame application", () => {
  it("applies strictly increasing sequence numbers", () => {
    const state = initialState();
    expect(applyFrame(state, frame(3))).toBe(true);
    expect(state.seq).toBe(3);
    expect(applyFrame(state, frame(5))).toBe(true);
    expect(state.seq).toBe(5);
  });

  it("never displays a stale frame", () => {
    const state = initialState();
    applyFrame(state, frame(10));
    const before = state.frame;
    expect(applyFrame(state, frame(9))).toBe(false);
    expect(applyFrame(state, frame(10))).toBe(false);
    expect(state.frame).toBe(before);
    expect(state.seq).toBe(10);
  });
});

describe("error replies", () => {
  it("raise a toast and leave annotations unchanged", () => {
    const state = initialState();
    applyFrame(state, frame(2));
    const annotations = state.annotations;
    applyError(state, "OUT_OF_BOUNDS", "click outside frame");
    expect(state.toast).toEqual({
      code: "OUT_OF_BOUNDS",
      detail: "click outside frame",
    });
    expect(state.annotations).toBe(annotations);
    expect(state.seq).toBe(2);
    expect(state.events.at(-1)?.kind).toBe("error");
  });
});

describe("connection lifecycle", () => {
  it("backoff doubles up to a cap and resets on connect", () => {
    const state = initialState();
    const delays = [
      markDisconnected(state),
      markDisconnected(state),
      markDisconnected(state),
    ];
    expect(delays).toEqual([500, 1000, 2000]);
    for (let i = 0; i < 20; i++) markDisconnected(state);
    expect(markDisconnected(state)).toBe(10_000);
    markConnected(state);
    expect(state.connection).toBe("open");
    expect(markDisconnected(state)).toBe(500);
  });
});

describe("event log", () => {
  it("is bounded", () => {
    const state = initialState();
    for (let i = 0; i < MAX_EVENTS + 50; i++) {
      logEvent(state, "info", `event ${i}`);
    }
    expect(state.events.length).toBe(MAX_EVENTS);
    expect(state.events.at(-1)?.text).toBe(`event ${MAX_EVENTS + 49}`);
  });
});
