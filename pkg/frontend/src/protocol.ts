/** Wire protocol shared with the tuning service.
 *
 * Server -> client: binary frames, one byte of kind followed by the
 * payload — control/ack JSON, metric-tick JSON, or raw PNG bytes.
 * Client -> server: JSON text carrying exactly one verb.
 */

export const KIND_CONTROL = 0x01;
export const KIND_METRIC = 0x02;
export const KIND_PREVIEW = 0x03;

export type View = "intensity" | "d" | "dt";

export const VIEWS: View[] = ["intensity", "d", "dt"];

/** Engine state as the server reports it in hello/ack frames. */
export interface EngineState {
  crf: number;
  view: View;
  features: boolean;
  paused: boolean;
  unit: number;
  units: number;
  dt_ref: number;
  dt_max: number;
  width: number;
  height: number;
}

export interface MetricTick {
  t: number;
  unit: number;
  mse: number;
  psnr: number;
  ssim: number;
  source_bps: number;
  adder_bps: number;
  events_per_s: number;
  features?: [number, number][];
}

export type ControlMessage =
  | { set_crf: number }
  | { set_params: Record<string, number> }
  | { toggle_features: boolean }
  | { toggle_view: View }
  | { pause: boolean }
  | { seek_adu: number };

export interface ControlReply {
  hello?: EngineState;
  ack?: ControlMessage;
  applies_at_unit?: number;
  state?: EngineState;
  error?: string;
}

export type ServerFrame =
  | { kind: "control"; body: ControlReply }
  | { kind: "metric"; tick: MetricTick }
  | { kind: "preview"; png: Uint8Array };

const utf8 = new TextDecoder();

export function decodeServerFrame(data: ArrayBuffer | Uint8Array): ServerFrame {
  const bytes = data instanceof Uint8Array ? data : new Uint8Array(data);
  if (bytes.length === 0) throw new Error("empty frame");
  const payload = bytes.subarray(1);
  switch (bytes[0]) {
    case KIND_CONTROL:
      return { kind: "control", body: JSON.parse(utf8.decode(payload)) };
    case KIND_METRIC:
      return { kind: "metric", tick: JSON.parse(utf8.decode(payload)) };
    case KIND_PREVIEW:
      return { kind: "preview", png: payload };
    default:
      throw new Error(`unknown frame kind 0x${bytes[0].toString(16)}`);
  }
}

/** The message's single verb; throws if the shape is off. */
export function verbOf(msg: ControlMessage): string {
  const keys = Object.keys(msg);
  if (keys.length !== 1) {
    throw new Error("control message needs exactly one verb");
  }
  return keys[0];
}

export function encodeControl(msg: ControlMessage): string {
  verbOf(msg); // shape check
  return JSON.stringify(msg);
}

const PNG_MAGIC = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];

export function isPng(bytes: Uint8Array): boolean {
  return bytes.length >= 8 && PNG_MAGIC.every((b, i) => bytes[i] === b);
}

/** Width/height straight from the header (IHDR is always first). */
export function pngDimensions(
  bytes: Uint8Array,
): { width: number; height: number } | null {
  if (!isPng(bytes) || bytes.length < 24) return null;
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  return { width: view.getUint32(16), height: view.getUint32(20) };
}
