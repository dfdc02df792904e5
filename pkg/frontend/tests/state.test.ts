import { describe, expect, it } from "vitest";
import { SessionState } from "../src/state.js";
import {
  controlFrame,
  engineState,
  frame,
  metricFrame,
  pngBytes,
  previewFrame,
  tick,
} from "./helpers.js";

const enc = new TextEncoder();

describe("SessionState control flow", () => {
  it("hello opens the session and becomes the baseline", () => {
    const st = new SessionState();
    expect(st.status).toBe("connecting");
    st.handleFrame(controlFrame({ hello: engineState({ crf: 6 }) }));
    expect(st.status).toBe("open");
    expect(st.acked?.crf).toBe(6);
    expect(st.lastError).toBeNull();
  });

  it("ack clears the verb and adopts the server's state", () => {
    const st = new SessionState();
    st.handleFrame(controlFrame({ hello: engineState() }));
    st.markSent({ set_crf: 7 });
    expect(st.pending.has("set_crf")).toBe(true);
    st.handleFrame(
      controlFrame({
        ack: { set_crf: 7 },
        applies_at_unit: 5,
        state: engineState({ crf: 7 }),
      }),
    );
    expect(st.pending.size).toBe(0);
    expect(st.acked?.crf).toBe(7);
    expect(st.lastAppliesAt).toBe(5);
  });

  it("an ack for one verb leaves other pending edits alone", () => {
    const st = new SessionState();
    st.markSent({ set_crf: 7 });
    st.markSent({ pause: true });
    st.handleFrame(controlFrame({ ack: { set_crf: 7 } }));
    expect(st.pending.has("set_crf")).toBe(false);
    expect(st.pending.get("pause")).toBe(true);
  });

  it("errors are surfaced without touching acked state", () => {
    const st = new SessionState();
    st.handleFrame(controlFrame({ hello: engineState({ crf: 2 }) }));
    st.handleFrame(controlFrame({ error: "view must be one of intensity|d|dt" }));
    expect(st.lastError).toMatch(/view/);
    expect(st.acked?.crf).toBe(2);
    expect(st.status).toBe("open");
  });

  it("a fresh hello after reconnect wipes stale pending edits", () => {
    const st = new SessionState();
    st.handleFrame(controlFrame({ hello: engineState({ crf: 1 }) }));
    st.markSent({ set_crf: 9 }); // in flight when the link died
    st.handleClose();
    expect(st.status).toBe("closed");
    st.handleFrame(controlFrame({ hello: engineState({ crf: 1 }) }));
    expect(st.status).toBe("open");
    expect(st.pending.size).toBe(0);
    expect(st.effective().crf).toBe(1); // server truth, not the ghost edit
  });

  it("counts malformed frames instead of throwing", () => {
    const st = new SessionState();
    st.handleFrame(new Uint8Array()); // empty
    st.handleFrame(new Uint8Array([0x42, 1, 2])); // unknown kind
    st.handleFrame(frame(0x01, enc.encode("{not json"))); // broken body
    st.handleFrame(controlFrame({ ack: {} })); // ack without a verb
    expect(st.badFrames).toBe(4);
    expect(st.status).toBe("connecting");
  });
});

describe("SessionState metric history", () => {
  it("stays bounded when 10k ticks flood in", () => {
    const st = new SessionState(600);
    for (let i = 0; i < 10_000; i += 1) {
      st.handleFrame(metricFrame(tick(i)));
    }
    expect(st.ticks.length).toBe(600);
    expect(st.ticks.at(0)?.unit).toBe(9_400);
    expect(st.ticks.last()?.unit).toBe(9_999);
    expect(st.badFrames).toBe(0);
  });

  it("keeps feature lists attached to their tick", () => {
    const st = new SessionState();
    st.handleFrame(metricFrame(tick(0)));
    st.handleFrame(metricFrame(tick(1, { features: [[5, 6], [7, 8]] })));
    expect(st.ticks.last()?.features).toEqual([
      [5, 6],
      [7, 8],
    ]);
  });
});

describe("SessionState preview backpressure", () => {
  it("a burst collapses to the newest frame, counting the drops", () => {
    const st = new SessionState();
    for (let i = 0; i < 5; i += 1) {
      st.handleFrame(previewFrame(pngBytes(10 + i, 10)));
    }
    expect(st.previewsDropped).toBe(4);
    const got = st.takePreview();
    expect(got).not.toBeNull();
    // newest survives: width 14 was the last pushed
    expect(new DataView(got!.buffer, got!.byteOffset).getUint32(16)).toBe(14);
    expect(st.takePreview()).toBeNull(); // consumed
  });

  it("rendering between frames means nothing is dropped", () => {
    const st = new SessionState();
    st.handleFrame(previewFrame(pngBytes()));
    expect(st.takePreview()).not.toBeNull();
    st.handleFrame(previewFrame(pngBytes()));
    expect(st.takePreview()).not.toBeNull();
    expect(st.previewsDropped).toBe(0);
  });

  it("rejects a preview that is not a png", () => {
    const st = new SessionState();
    st.handleFrame(previewFrame(new Uint8Array([1, 2, 3, 4, 5, 6, 7, 8, 9])));
    expect(st.badFrames).toBe(1);
    expect(st.takePreview()).toBeNull();
  });
});

describe("SessionState.effective", () => {
  it("overlays optimistic edits on the acked baseline", () => {
    const st = new SessionState();
    st.handleFrame(controlFrame({ hello: engineState({ crf: 3 }) }));
    st.markSent({ set_crf: 9 });
    st.markSent({ toggle_view: "dt" });
    st.markSent({ pause: true });
    st.markSent({ set_params: { dt_ref: 100 } });
    const eff = st.effective();
    expect(eff.crf).toBe(9);
    expect(eff.view).toBe("dt");
    expect(eff.paused).toBe(true);
    expect(eff.dt_ref).toBe(100);
    expect(eff.features).toBe(false); // untouched field from the baseline
    expect(eff.width).toBe(64);
  });

  it("is empty before any hello", () => {
    const st = new SessionState();
    expect(st.effective()).toEqual({});
  });
});
