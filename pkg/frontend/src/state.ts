import { Ring } from "./ring.js";
import {
  ControlMessage,
  ControlReply,
  EngineState,
  MetricTick,
  decodeServerFrame,
  isPng,
  verbOf,
} from "./protocol.js";

export type ConnectionStatus = "connecting" | "open" | "closed";

export const DEFAULT_TICK_CAPACITY = 600;

/** Everything the dashboard renders from: the last server-acknowledged
 *  engine state, optimistic pending edits, a bounded metric history, and
 *  the latest preview frame.
 *
 *  Message handlers only append/replace; rendering reads.  Edits are
 *  optimistic: `markSent` records them as pending until the matching ack
 *  (or a fresh hello) arrives, so controls can show a pending badge while
 *  always converging back to what the server actually holds.
 */
export class SessionState {
  status: ConnectionStatus = "connecting";
  acked: EngineState | null = null;
  readonly pending = new Map<string, unknown>();
  readonly ticks: Ring<MetricTick>;
  lastError: string | null = null;
  lastAppliesAt: number | null = null;
  badFrames = 0;
  previewsDropped = 0;

  private latestPreview: Uint8Array | null = null;
  private previewFresh = false;

  constructor(tickCapacity: number = DEFAULT_TICK_CAPACITY) {
    this.ticks = new Ring(tickCapacity);
  }

  /** Record an optimistic edit; cleared when the server acks the verb. */
  markSent(msg: ControlMessage): void {
    const verb = verbOf(msg);
    this.pending.set(verb, (msg as Record<string, unknown>)[verb]);
  }

  handleFrame(data: ArrayBuffer | Uint8Array): void {
    let frame;
    try {
      frame = decodeServerFrame(data);
    } catch {
      this.badFrames += 1;
      return;
    }
    if (frame.kind === "metric") {
      this.ticks.push(frame.tick);
      return;
    }
    if (frame.kind === "preview") {
      if (!isPng(frame.png)) {
        this.badFrames += 1;
        return;
      }
      if (this.previewFresh) this.previewsDropped += 1; // replaced unrendered
      this.latestPreview = frame.png;
      this.previewFresh = true;
      return;
    }
    this.handleControl(frame.body);
  }

  private handleControl(body: ControlReply): void {
    if (body.hello) {
      // Fresh session baseline: whatever we thought was in flight is
      // gone; the server's state is the truth (reconnect convergence).
      this.status = "open";
      this.acked = body.hello;
      this.pending.clear();
      this.lastError = null;
      return;
    }
    if (body.error !== undefined) {
      this.lastError = body.error;
      return;
    }
    if (body.ack) {
      try {
        this.pending.delete(verbOf(body.ack));
      } catch {
        this.badFrames += 1; // malformed ack shape
      }
      if (body.state) this.acked = body.state;
      if (typeof body.applies_at_unit === "number") {
        this.lastAppliesAt = body.applies_at_unit;
      }
    }
  }

  handleClose(): void {
    this.status = "closed";
  }

  /** Latest unrendered preview or null; marks it consumed so a burst of
   *  frames costs one render (and bumps previewsDropped), never a queue. */
  takePreview(): Uint8Array | null {
    if (!this.previewFresh) return null;
    this.previewFresh = false;
    return this.latestPreview;
  }

  /** Acked state with optimistic pending edits layered on top — what the
   *  controls should display. */
  effective(): Partial<EngineState> & Record<string, unknown> {
    const out: Record<string, unknown> = this.acked ? { ...this.acked } : {};
    const crf = this.pending.get("set_crf");
    if (crf !== undefined) out.crf = crf;
    const view = this.pending.get("toggle_view");
    if (view !== undefined) out.view = view;
    const features = this.pending.get("toggle_features");
    if (features !== undefined) out.features = features;
    const paused = this.pending.get("pause");
    if (paused !== undefined) out.paused = paused;
    const params = this.pending.get("set_params");
    if (params && typeof params === "object") Object.assign(out, params);
    return out as Partial<EngineState> & Record<string, unknown>;
  }
}
