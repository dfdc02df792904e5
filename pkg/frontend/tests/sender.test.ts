import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import { ParamSender, SLIDER_SETTLE_MS, paramProblems } from "../src/controls.js";
import { SessionState } from "../src/state.js";

describe("paramProblems", () => {
  it("accepts a sane parameter set", () => {
    expect(paramProblems({ dt_ref: 255, dt_max: 2550, m: 6, m_max: 48 })).toEqual([]);
    expect(paramProblems({})).toEqual([]);
  });

  it("rejects non-positive or fractional intervals", () => {
    expect(paramProblems({ dt_ref: 0 })).not.toHaveLength(0);
    expect(paramProblems({ dt_max: -5 })).not.toHaveLength(0);
    expect(paramProblems({ dt_ref: 2.5 })).not.toHaveLength(0);
  });

  it("rejects a deadline shorter than the reference interval", () => {
    expect(paramProblems({ dt_ref: 1000, dt_max: 500 })).not.toHaveLength(0);
    expect(paramProblems({ dt_ref: 500, dt_max: 500 })).toHaveLength(0);
  });

  it("rejects threshold floors above their ceiling", () => {
    expect(paramProblems({ m: 50, m_max: 10 })).not.toHaveLength(0);
    expect(paramProblems({ m: NaN })).not.toHaveLength(0);
    expect(paramProblems({ m_v: 0 })).not.toHaveLength(0);
  });
});

describe("ParamSender", () => {
  let sent: string[];
  let state: SessionState;
  let sender: ParamSender;

  beforeEach(() => {
    vi.useFakeTimers();
    sent = [];
    state = new SessionState();
    sender = new ParamSender((text) => sent.push(text), state);
  });

  afterEach(() => {
    vi.useRealTimers();
  });

  it("settles a whole slider drag into exactly one message", () => {
    for (let v = 0; v <= 9; v += 1) {
      sender.setCrf(v);
      vi.advanceTimersByTime(SLIDER_SETTLE_MS / 3); // still dragging
    }
    expect(sent).toHaveLength(0); // nothing until the hand comes off
    vi.advanceTimersByTime(SLIDER_SETTLE_MS + 1);
    expect(sent).toHaveLength(1);
    expect(JSON.parse(sent[0])).toEqual({ set_crf: 9 });
    expect(state.pending.get("set_crf")).toBe(9);
  });

  it("sends one message per settled drag", () => {
    sender.setCrf(2);
    vi.advanceTimersByTime(SLIDER_SETTLE_MS + 1);
    sender.setCrf(5);
    vi.advanceTimersByTime(SLIDER_SETTLE_MS + 1);
    expect(sent.map((s) => JSON.parse(s))).toEqual([
      { set_crf: 2 },
      { set_crf: 5 },
    ]);
  });

  it("debounces verbs independently", () => {
    sender.setCrf(4);
    sender.seek(7);
    vi.advanceTimersByTime(SLIDER_SETTLE_MS + 1);
    expect(sent.map((s) => JSON.parse(s))).toEqual([
      { set_crf: 4 },
      { seek_adu: 7 },
    ]);
  });

  it("keeps only the last value of a rapid parameter burst", () => {
    sender.setParams({ dt_ref: 100, dt_max: 1000 });
    sender.setParams({ dt_ref: 200, dt_max: 2000 });
    vi.advanceTimersByTime(SLIDER_SETTLE_MS + 1);
    expect(sent).toHaveLength(1);
    expect(JSON.parse(sent[0])).toEqual({
      set_params: { dt_ref: 200, dt_max: 2000 },
    });
  });

  it("refuses to send invalid parameters and reports why", () => {
    const problems = sender.setParams({ dt_ref: 0, dt_max: -1 });
    expect(problems.length).toBeGreaterThan(0);
    vi.advanceTimersByTime(10_000);
    expect(sent).toHaveLength(0);
    expect(state.pending.size).toBe(0);
  });

  it("sends switch-style verbs immediately", () => {
    sender.toggleFeatures(true);
    sender.setView("dt");
    sender.pause(true);
    expect(sent.map((s) => JSON.parse(s))).toEqual([
      { toggle_features: true },
      { toggle_view: "dt" },
      { pause: true },
    ]);
    expect(state.pending.get("toggle_features")).toBe(true);
    expect(state.pending.get("toggle_view")).toBe("dt");
    expect(state.pending.get("pause")).toBe(true);
  });

  it("flush pushes a waiting message out early", () => {
    sender.setCrf(8);
    expect(sent).toHaveLength(0);
    sender.flush();
    expect(sent).toHaveLength(1);
    expect(JSON.parse(sent[0])).toEqual({ set_crf: 8 });
  });

  it("cancelPending drops queued edits entirely", () => {
    sender.setCrf(8);
    sender.cancelPending();
    vi.advanceTimersByTime(10_000);
    expect(sent).toHaveLength(0);
  });
});
