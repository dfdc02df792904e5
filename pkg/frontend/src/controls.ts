import { Debounced, debounce } from "./debounce.js";
import { ControlMessage, View, encodeControl } from "./protocol.js";
import { SessionState } from "./state.js";

export const SLIDER_SETTLE_MS = 150;

/** Client-side sanity checks so obviously bad edits never hit the wire. */
export function paramProblems(p: Record<string, number>): string[] {
  const problems: string[] = [];
  for (const f of ["dt_ref", "dt_max"]) {
    const v = p[f];
    if (v !== undefined && (!Number.isInteger(v) || v < 1)) {
      problems.push(`${f} must be a positive integer`);
    }
  }
  if (
    p.dt_ref !== undefined &&
    p.dt_max !== undefined &&
    p.dt_max < p.dt_ref
  ) {
    problems.push("dt_max must be at least dt_ref");
  }
  for (const f of ["m", "m_max"]) {
    const v = p[f];
    if (v !== undefined && (typeof v !== "number" || Number.isNaN(v) || v < 0)) {
      problems.push(`${f} must be a number >= 0`);
    }
  }
  if (p.m !== undefined && p.m_max !== undefined && p.m > p.m_max) {
    problems.push("m must not exceed m_max");
  }
  if (p.m_v !== undefined && (!Number.isInteger(p.m_v) || p.m_v < 1)) {
    problems.push("m_v must be a positive integer");
  }
  return problems;
}

/** Turns UI edits into wire messages.  Slider-like inputs (crf, params,
 *  seek) are debounced per verb so a drag settles into exactly one
 *  message; switches (view, features, pause) go out immediately. */
export class ParamSender {
  private channels = new Map<string, Debounced<[ControlMessage]>>();

  constructor(
    private readonly transmit: (text: string) => void,
    private readonly state: SessionState,
    readonly settleMs: number = SLIDER_SETTLE_MS,
  ) {}

  private post(msg: ControlMessage): void {
    this.state.markSent(msg);
    this.transmit(encodeControl(msg));
  }

  private channel(verb: string): Debounced<[ControlMessage]> {
    let ch = this.channels.get(verb);
    if (!ch) {
      ch = debounce((msg: ControlMessage) => this.post(msg), this.settleMs);
      this.channels.set(verb, ch);
    }
    return ch;
  }

  setCrf(value: number): void {
    this.channel("set_crf")({ set_crf: value });
  }

  /** Returns validation problems; sends only when the list is empty. */
  setParams(params: Record<string, number>): string[] {
    const problems = paramProblems(params);
    if (problems.length === 0) {
      this.channel("set_params")({ set_params: params });
    }
    return problems;
  }

  seek(adu: number): void {
    this.channel("seek_adu")({ seek_adu: adu });
  }

  toggleFeatures(on: boolean): void {
    this.post({ toggle_features: on });
  }

  setView(view: View): void {
    this.post({ toggle_view: view });
  }

  pause(on: boolean): void {
    this.post({ pause: on });
  }

  /** Push out anything still waiting on its settle timer. */
  flush(): void {
    for (const ch of this.channels.values()) ch.flush();
  }

  cancelPending(): void {
    for (const ch of this.channels.values()) ch.cancel();
  }
}
