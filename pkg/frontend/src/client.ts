import { SessionState } from "./state.js";

/** The subset of WebSocket the client touches; injectable for tests. */
export interface SocketLike {
  binaryType: string;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: ArrayBuffer | string }) => void) | null;
  onclose: (() => void) | null;
  send(data: string): void;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientOptions {
  reconnectMs?: number;
  maxReconnectMs?: number;
}

/** Owns the socket lifecycle: feeds binary frames into SessionState and
 *  reconnects with doubling backoff after a drop.  Messages sent while
 *  disconnected are dropped on purpose — the next hello resets pending
 *  state, so the UI converges to the server instead of ghost edits. */
export class TunerClient {
  private sock: SocketLike | null = null;
  private backoff: number;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private stopped = false;

  constructor(
    readonly url: string,
    readonly state: SessionState,
    private readonly factory: SocketFactory,
    private readonly opts: ClientOptions = {},
  ) {
    this.backoff = opts.reconnectMs ?? 1000;
  }

  connect(): void {
    this.stopped = false;
    this.state.status = "connecting";
    const sock = this.factory(this.url);
    sock.binaryType = "arraybuffer";
    this.sock = sock;
    sock.onopen = () => {
      this.backoff = this.opts.reconnectMs ?? 1000;
      // status flips to "open" when the hello frame lands
    };
    sock.onmessage = (ev) => {
      if (typeof ev.data === "string") return; // server frames are binary
      this.state.handleFrame(ev.data);
    };
    sock.onclose = () => {
      this.state.handleClose();
      this.sock = null;
      if (!this.stopped) this.scheduleReconnect();
    };
  }

  private scheduleReconnect(): void {
    const delay = this.backoff;
    this.backoff = Math.min(this.backoff * 2, this.opts.maxReconnectMs ?? 8000);
    this.timer = setTimeout(() => this.connect(), delay);
  }

  send(text: string): void {
    if (this.sock !== null && this.state.status === "open") {
      this.sock.send(text);
    }
  }

  close(): void {
    this.stopped = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = null;
    this.sock?.close();
  }
}
