import { MetricTick } from "./protocol.js";

/** Chart geometry as pure functions of the tick buffer: callers re-render
 *  from state every time; nothing here mutates a chart object. */

export interface SeriesPoint {
  x: number;
  y: number;
}

export interface Series {
  label: string;
  points: SeriesPoint[];
}

export type NumericKey =
  | "mse"
  | "psnr"
  | "ssim"
  | "source_bps"
  | "adder_bps"
  | "events_per_s";

export function metricSeries(
  ticks: MetricTick[],
  keys: NumericKey[],
): Series[] {
  return keys.map((k) => ({
    label: k,
    points: ticks
      .filter((t) => Number.isFinite(t[k]))
      .map((t) => ({ x: t.unit, y: t[k] as number })),
  }));
}

export interface Range {
  min: number;
  max: number;
}

export function valueRange(series: Series[], pad = 0.05): Range {
  let lo = Infinity;
  let hi = -Infinity;
  for (const s of series) {
    for (const p of s.points) {
      if (p.y < lo) lo = p.y;
      if (p.y > hi) hi = p.y;
    }
  }
  if (lo > hi) return { min: 0, max: 1 }; // empty chart stays drawable
  if (lo === hi) {
    lo -= 0.5;
    hi += 0.5; // flat series get headroom instead of a zero-height band
  }
  const gap = (hi - lo) * pad;
  return { min: lo - gap, max: hi + gap };
}

export function xRange(series: Series[]): Range {
  let lo = Infinity;
  let hi = -Infinity;
  for (const s of series) {
    for (const p of s.points) {
      if (p.x < lo) lo = p.x;
      if (p.x > hi) hi = p.x;
    }
  }
  if (lo > hi) return { min: 0, max: 1 };
  if (lo === hi) return { min: lo - 0.5, max: hi + 0.5 };
  return { min: lo, max: hi };
}

/** SVG path for one series.  The line breaks (a fresh move) across x gaps
 *  wider than maxStep, so missing ticks render as holes — never as an
 *  interpolated bridge. */
export function polylinePath(
  s: Series,
  width: number,
  height: number,
  xr: Range,
  yr: Range,
  maxStep = Infinity,
): string {
  const xspan = xr.max - xr.min;
  const yspan = yr.max - yr.min;
  const sx = (x: number) =>
    xspan === 0 ? width / 2 : ((x - xr.min) / xspan) * width;
  const sy = (y: number) =>
    yspan === 0 ? height / 2 : height - ((y - yr.min) / yspan) * height;
  let out = "";
  let prevX: number | null = null;
  for (const p of s.points) {
    const move = prevX === null || p.x - prevX > maxStep;
    out += `${move ? "M" : "L"}${sx(p.x).toFixed(1)},${sy(p.y).toFixed(1)}`;
    prevX = p.x;
  }
  return out;
}
