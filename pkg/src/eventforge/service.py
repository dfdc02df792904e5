"""HTTP + WebSocket tuning service.

One playback engine drives the transcode loop on a worker thread: each
step consumes one input unit (a source frame), drains the events it
produced, folds them into a live canvas, and broadcasts a metric tick
plus a PNG preview to every connected client.  Parameter changes arrive
over the socket, land in a mailbox, and are applied at the next input
unit boundary; the loop never stops between changes.

Wire protocol (single multiplexed channel at ``/ws``):

* server -> client: binary frames ``[kind:1][payload]`` with kinds
  0x01 control (JSON: hello / ack / error / state), 0x02 metric tick
  (JSON), 0x03 preview (PNG bytes).
* client -> server: JSON text messages, one control verb each:
  ``{"set_crf": 0..9}``, ``{"set_params": {dt_ref?, dt_max?, m?,
  m_max?, m_v?, feature_radius?}}``, ``{"toggle_features": bool}``,
  ``{"toggle_view": "intensity"|"d"|"dt"}``, ``{"pause": bool}``,
  ``{"seek_adu": n}``.

Metric ticks carry ``{t, unit, mse, psnr, ssim, source_bps, adder_bps,
events_per_s, features?}``; bitrates are raw-representation rates over
a one-deadline sliding window.  A malformed control message produces an
error frame and the session keeps running.

Changing transcode parameters restarts pixel state at the boundary (the
stream is a live preview, not an archival encode, so a baseline reset
is the honest behaviour).  ``seek_adu`` jumps playback to the start of
coded unit *n*, i.e. input unit ``n * (dt_max / dt_ref)``.

``GET /`` serves the built dashboard bundle when present (see
``ui_dir``), otherwise a plain status page.
"""

from __future__ import annotations

import asyncio
import io
import json
import math
import threading
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import FileResponse, HTMLResponse

from .crf import MAX_CRF, MIN_CRF, feature_feedback, sensitivity_for_crf
from .metrics import RateMeter, compute_metrics
from .model import D_FILLER, D_ZERO, PlaneParams, SensitivityParams
from .stream import event_dtype
from .transcode import VectorTranscoder
from .vision import EventCornerDetector

KIND_CONTROL = 0x01
KIND_METRIC = 0x02
KIND_PREVIEW = 0x03

VIEWS = ("intensity", "d", "dt")


def _png_bytes(img: np.ndarray) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(img).save(buf, format="PNG")
    return buf.getvalue()


def _normalize(plane: np.ndarray, valid: np.ndarray) -> np.ndarray:
    out = np.zeros(plane.shape, np.uint8)
    if valid.any():
        vals = plane[valid]
        lo, hi = float(vals.min()), float(vals.max())
        span = (hi - lo) or 1.0
        out[valid] = ((plane[valid] - lo) / span * 255).astype(np.uint8)
    return out


class PlaybackEngine:
    """Loops a framed source through the transcoder one unit at a time."""

    def __init__(self, frames: np.ndarray, params: PlaneParams,
                 *, crf: int = 0, tick_interval: float = 1 / 30):
        if frames.ndim not in (3, 4) or frames.dtype != np.uint8:
            raise ValueError("playback needs uint8 (frames, h, w[, 3])")
        self.frames = frames
        self.n_units = len(frames)
        self.params = params
        self.crf = crf
        self.tick_interval = tick_interval
        self.unit = 0
        self.view = "intensity"
        self.features_on = False
        self.paused = False
        self._mailbox: list[dict] = []
        self._subscribers: list[tuple[asyncio.AbstractEventLoop,
                                      asyncio.Queue]] = []
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._record_size = event_dtype(params.channels).itemsize
        self._reset_pipeline()

    # -- pipeline state -------------------------------------------------

    def _reset_pipeline(self) -> None:
        p = self.params
        self.sens = sensitivity_for_crf(self.crf)
        self.transcoder = VectorTranscoder(p, self.sens)
        n = p.width * p.height * p.channels
        self.canvas = np.zeros(n, np.uint8)
        self.prev_t = np.zeros(n, np.float64)
        self.last_rate = np.zeros(n, np.float64)
        self.latest_d = np.full(n, -1, np.int64)
        self.latest_dt = np.full(n, np.nan)
        self.meter = RateMeter(window_ticks=p.dt_max, ticks_per_second=p.dt_s)
        det_params = p if p.channels == 1 else PlaneParams(
            width=p.width, height=p.height, channels=1, dt_s=p.dt_s,
            dt_ref=p.dt_ref, dt_max=p.dt_max, source_kind=p.source_kind,
            pixel_mode=p.pixel_mode)
        self.detector = EventCornerDetector(det_params)
        self.corners: set[tuple[int, int]] = set()

    def _apply_message(self, msg: dict) -> None:
        if "set_crf" in msg:
            self.crf = int(msg["set_crf"])
            self._rebuild()
        elif "set_params" in msg:
            upd = msg["set_params"]
            p = self.params
            dt_ref = int(upd.get("dt_ref", p.dt_ref))
            dt_max = int(upd.get("dt_max", p.dt_max))
            dt_s = dt_ref * max(1, round(p.dt_s / p.dt_ref))
            self.params = PlaneParams(
                width=p.width, height=p.height, channels=p.channels,
                dt_s=dt_s, dt_ref=dt_ref, dt_max=dt_max,
                source_kind=p.source_kind, pixel_mode=p.pixel_mode)
            overrides = {k: upd[k] for k in
                         ("m", "m_max", "m_v", "feature_radius") if k in upd}
            self._rebuild(overrides)
        elif "toggle_features" in msg:
            self.features_on = bool(msg["toggle_features"])
        elif "toggle_view" in msg:
            view = msg["toggle_view"]
            if view not in VIEWS:
                raise ValueError(f"unknown view {view!r}")
            self.view = view
        elif "pause" in msg:
            self.paused = bool(msg["pause"])
        elif "seek_adu" in msg:
            per_adu = max(1, self.params.dt_max // self.params.dt_ref)
            self.unit = (int(msg["seek_adu"]) * per_adu) % self.n_units
            self._reset_pipeline()
        else:
            raise ValueError(f"unknown control verb in {sorted(msg)}")

    def _rebuild(self, overrides: Optional[dict] = None) -> None:
        self._reset_pipeline()
        if overrides:
            base = self.sens
            self.sens = SensitivityParams(
                m=overrides.get("m", base.m),
                m_max=overrides.get("m_max",
                                    max(base.m_max, overrides.get("m", 0))),
                m_v=overrides.get("m_v", base.m_v),
                feature_radius=overrides.get("feature_radius",
                                             base.feature_radius))
            self.transcoder = VectorTranscoder(self.params, self.sens)

    def validate_message(self, msg: dict) -> None:
        """Raise ValueError on a malformed control message."""
        if not isinstance(msg, dict) or len(msg) != 1:
            raise ValueError("control messages carry exactly one verb")
        if "set_crf" in msg:
            crf = msg["set_crf"]
            if not isinstance(crf, int) or not MIN_CRF <= crf <= MAX_CRF:
                raise ValueError(f"set_crf needs an integer "
                                 f"{MIN_CRF}..{MAX_CRF}, got {crf!r}")
        elif "set_params" in msg:
            if not isinstance(msg["set_params"], dict):
                raise ValueError("set_params needs an object")
            p = self.params
            upd = msg["set_params"]
            dt_ref = upd.get("dt_ref", p.dt_ref)
            dt_max = upd.get("dt_max", p.dt_max)
            if dt_ref < 1 or dt_max < dt_ref:
                raise ValueError("need 1 <= dt_ref <= dt_max")
        elif "toggle_view" in msg:
            if msg["toggle_view"] not in VIEWS:
                raise ValueError(f"toggle_view needs one of {VIEWS}")
        elif "seek_adu" in msg:
            if not isinstance(msg["seek_adu"], int) or msg["seek_adu"] < 0:
                raise ValueError("seek_adu needs a non-negative integer")
        elif not ({"toggle_features", "pause"} & msg.keys()):
            raise ValueError(f"unknown control verb in {sorted(msg)}")

    def post(self, msg: dict) -> int:
        """Queue a validated control message; returns the unit it lands at."""
        with self._lock:
            self._mailbox.append(msg)
            return self.unit + 1

    def state(self) -> dict:
        return {
            "crf": self.crf,
            "view": self.view,
            "features": self.features_on,
            "paused": self.paused,
            "unit": self.unit,
            "units": self.n_units,
            "dt_ref": self.params.dt_ref,
            "dt_max": self.params.dt_max,
            "width": self.params.width,
            "height": self.params.height,
        }

    # -- one input unit ---------------------------------------------------

    def _fold_events(self, events: np.ndarray) -> None:
        p = self.params
        if len(events) == 0:
            return
        pix = (events["y"].astype(np.int64) * p.width + events["x"]) \
            * p.channels
        if p.channels == 3:
            pix = pix + events["c"]
        for i in range(len(events)):
            j = int(pix[i])
            d = int(events["d"][i])
            t = float(events["t"][i])
            dt = t - self.prev_t[j]
            if d == D_ZERO:
                rate = 0.0
            elif d == D_FILLER:
                rate = self.last_rate[j]
            else:
                rate = math.ldexp(1.0, d) / dt * p.dt_ref if dt > 0 else 0.0
                self.latest_d[j] = d
            if dt > 0:
                self.latest_dt[j] = dt
            self.canvas[j] = min(255, int(rate))
            self.last_rate[j] = rate
            self.prev_t[j] = t

    def step(self) -> Optional[tuple[dict, bytes]]:
        """Advance one input unit; returns (tick, png) or None when paused."""
        with self._lock:
            pending, self._mailbox = self._mailbox, []
        for msg in pending:
            try:
                self._apply_message(msg)
            except ValueError:
                pass  # validated at the socket; never kill the loop
        if self.paused:
            return None
        p = self.params
        frame = self.frames[self.unit % self.n_units]
        if self.features_on:
            mono = frame if frame.ndim == 2 else \
                frame.mean(axis=-1).astype(np.uint8)
            self.corners = self.detector.update_canvas(mono)
            if self.corners:
                feature_feedback(self.transcoder, sorted(self.corners),
                                 self.sens.feature_radius)
        self.transcoder.push_frame(frame)
        events = self.transcoder.drain_pending()
        self._fold_events(events)
        end_tick = self.transcoder.frame_index * p.dt_ref
        self.meter.add(end_tick, source_bytes=frame.nbytes,
                       stream_bytes=len(events) * self._record_size,
                       events=len(events))
        shape = (p.height, p.width) if p.channels == 1 \
            else (p.height, p.width, p.channels)
        canvas_img = self.canvas.reshape(shape)
        fm = compute_metrics(frame, canvas_img)
        tick = {"t": int(end_tick), "unit": int(self.unit),
                "mse": fm.mse, "psnr": fm.psnr, "ssim": fm.ssim}
        tick.update(self.meter.rates())
        if self.features_on:
            tick["features"] = sorted([int(x), int(y)]
                                      for x, y in self.corners)
        png = _png_bytes(self._render(canvas_img))
        self.unit += 1
        return tick, png

    def _render(self, canvas_img: np.ndarray) -> np.ndarray:
        p = self.params
        if self.view == "intensity":
            return canvas_img
        plane_shape = (p.height, p.width) if p.channels == 1 \
            else (p.height, p.width, p.channels)
        if self.view == "d":
            d = self.latest_d.reshape(plane_shape)
            if p.channels == 3:
                d = d.max(axis=-1)
            return _normalize(d.astype(np.float64), d >= 0)
        dt = self.latest_dt.reshape(plane_shape)
        if p.channels == 3:
            dt = np.nanmax(dt, axis=-1)
        return _normalize(np.nan_to_num(dt), np.isfinite(dt))

    # -- broadcast ----------------------------------------------------------

    def subscribe(self) -> asyncio.Queue:
        loop = asyncio.get_running_loop()
        q: asyncio.Queue = asyncio.Queue(maxsize=256)
        with self._lock:
            self._subscribers.append((loop, q))
        return q

    def unsubscribe(self, q: asyncio.Queue) -> None:
        with self._lock:
            self._subscribers = [(l, s) for l, s in self._subscribers
                                 if s is not q]

    def _broadcast(self, frames: list[bytes]) -> None:
        with self._lock:
            subs = list(self._subscribers)
        for loop, q in subs:
            for payload in frames:
                try:
                    loop.call_soon_threadsafe(self._offer, q, payload)
                except RuntimeError:
                    pass  # loop shut down; unsubscribe happens at the socket

    @staticmethod
    def _offer(q: asyncio.Queue, payload: bytes) -> None:
        try:
            q.put_nowait(payload)
        except asyncio.QueueFull:
            pass  # slow consumer drops frames rather than stalling the loop

    def _run(self) -> None:
        while not self._stop.is_set():
            with self._lock:
                has_audience = bool(self._subscribers)
            if not has_audience:
                self._stop.wait(self.tick_interval)
                continue
            out = self.step()
            if out is not None:
                tick, png = out
                self._broadcast([
                    bytes([KIND_METRIC]) + json.dumps(tick).encode(),
                    bytes([KIND_PREVIEW]) + png,
                ])
            self._stop.wait(self.tick_interval)

    def start(self) -> None:
        if self._thread is None or not self._thread.is_alive():
            self._stop.clear()
            self._thread = threading.Thread(target=self._run, daemon=True,
                                            name="playback")
            self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None


# ---------------------------------------------------------------------------
# source loading and app assembly


def _load_source(path: str) -> tuple[np.ndarray, PlaneParams]:
    if path.endswith(".npy"):
        frames = np.load(path)
        if frames.ndim not in (3, 4) or frames.dtype != np.uint8:
            raise ValueError(f"{path}: need uint8 (frames, h, w[, 3])")
        channels = 1 if frames.ndim == 3 else frames.shape[-1]
        h, w = frames.shape[1:3]
        params = PlaneParams(width=w, height=h, channels=channels,
                             dt_s=255 * 30, dt_ref=255, dt_max=255 * 30,
                             source_kind="framed", pixel_mode="collapse")
        return frames, params
    if path.endswith(".adder") or path.endswith(".adderc"):
        from .reconstruct import decode_accurate

        if path.endswith(".adderc"):
            from .compress import read_compressed
            params, events = read_compressed(path)
        else:
            from .stream import read_stream
            params, events = read_stream(path)
        frames = decode_accurate(params, events).astype(np.uint8)
        dt_s = params.dt_ref * max(1, round(params.dt_s / params.dt_ref))
        playback = PlaneParams(width=params.width, height=params.height,
                               channels=params.channels, dt_s=dt_s,
                               dt_ref=params.dt_ref, dt_max=params.dt_max,
                               source_kind="framed", pixel_mode="collapse")
        return frames, playback
    raise ValueError(f"unsupported source {path!r} "
                     "(expected .npy, .adder, .adderc)")


_PLACEHOLDER = """<!doctype html>
<title>eventforge tuner</title>
<p>The tuning service is running.  Connect a dashboard to
<code>/ws</code>; no built UI bundle was found on this host.</p>
"""


def create_app(source: str, *, crf: int = 0, tick_interval: float = 1 / 30,
               ui_dir: Optional[str] = None) -> FastAPI:
    frames, params = _load_source(source)
    engine = PlaybackEngine(frames, params, crf=crf,
                            tick_interval=tick_interval)

    from contextlib import asynccontextmanager

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        engine.start()
        yield
        engine.stop()

    app = FastAPI(lifespan=lifespan)
    app.state.engine = engine
    bundle = Path(ui_dir) if ui_dir else None

    @app.get("/")
    async def index():
        if bundle and (bundle / "index.html").is_file():
            return FileResponse(bundle / "index.html")
        return HTMLResponse(_PLACEHOLDER)

    @app.get("/assets/{name}")
    async def asset(name: str):
        if bundle:
            target = (bundle / name).resolve()
            if target.is_file() and target.parent == bundle.resolve():
                return FileResponse(target)
        return HTMLResponse("not found", status_code=404)

    @app.websocket("/ws")
    async def ws(sock: WebSocket):
        await sock.accept()
        queue = engine.subscribe()
        hello = {"hello": engine.state()}
        await sock.send_bytes(bytes([KIND_CONTROL]) +
                              json.dumps(hello).encode())

        async def pump():
            while True:
                payload = await queue.get()
                await sock.send_bytes(payload)

        pump_task = asyncio.create_task(pump())
        try:
            while True:
                text = await sock.receive_text()
                try:
                    msg = json.loads(text)
                    engine.validate_message(msg)
                except (json.JSONDecodeError, ValueError) as exc:
                    err = {"error": str(exc)}
                    await sock.send_bytes(bytes([KIND_CONTROL]) +
                                          json.dumps(err).encode())
                    continue
                applies_at = engine.post(msg)
                ack = {"ack": msg, "applies_at_unit": applies_at,
                       "state": engine.state()}
                await sock.send_bytes(bytes([KIND_CONTROL]) +
                                      json.dumps(ack).encode())
        except WebSocketDisconnect:
            pass
        finally:
            pump_task.cancel()
            engine.unsubscribe(queue)

    return app
