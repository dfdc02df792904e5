import {
  EngineState,
  KIND_CONTROL,
  KIND_METRIC,
  KIND_PREVIEW,
  MetricTick,
} from "../src/protocol.js";

const enc = new TextEncoder();

export function frame(kind: number, payload: Uint8Array): Uint8Array {
  const out = new Uint8Array(payload.length + 1);
  out[0] = kind;
  out.set(payload, 1);
  return out;
}

export function controlFrame(body: unknown): Uint8Array {
  return frame(KIND_CONTROL, enc.encode(JSON.stringify(body)));
}

export function metricFrame(tick: unknown): Uint8Array {
  return frame(KIND_METRIC, enc.encode(JSON.stringify(tick)));
}

export function previewFrame(png: Uint8Array): Uint8Array {
  return frame(KIND_PREVIEW, png);
}

export function engineState(over: Partial<EngineState> = {}): EngineState {
  return {
    crf: 3,
    view: "intensity",
    features: false,
    paused: false,
    unit: 0,
    units: 24,
    dt_ref: 255,
    dt_max: 2550,
    width: 64,
    height: 48,
    ...over,
  };
}

export function tick(unit: number, over: Partial<MetricTick> = {}): MetricTick {
  return {
    t: unit * 2550,
    unit,
    mse: 4.2,
    psnr: 41.9,
    ssim: 0.97,
    source_bps: 2_000_000,
    adder_bps: 350_000,
    events_per_s: 52_000,
    ...over,
  };
}

/** Smallest byte string that satisfies the signature check and carries
 *  real IHDR dimensions at the standard offsets. */
export function pngBytes(width = 64, height = 48): Uint8Array {
  const out = new Uint8Array(24);
  out.set([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a], 0);
  const view = new DataView(out.buffer);
  view.setUint32(8, 13); // IHDR chunk length
  out.set([0x49, 0x48, 0x44, 0x52], 12); // "IHDR"
  view.setUint32(16, width);
  view.setUint32(20, height);
  return out;
}
