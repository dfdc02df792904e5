"""Discrete-event simulation of an integrate-and-fire sensor.

Frames of 16-bit photon counts drive per-pixel integrators: a pixel fires
an event each time it accumulates ``2**D`` photons, with the firing time
interpolated fractionally inside the frame's reference interval.  A pixel
that goes ``dt_max`` ticks without saturating fires a zero marker instead,
so every pixel reports at least once per deadline window.

Four decimation-control modes adjust D between events:

* ``constant`` — D never changes; with D at or below the darkest pixel's
  magnitude this is the ground-truth capture mode.
* ``self_adjust`` — D follows a per-pixel prediction of the next firing
  interval.  The stability metric counts the most-significant bits shared
  by the observed interval and the prediction (32-bit values).  Concrete
  hysteresis (the paper-level description leaves it open): a pixel whose
  stability improved — or that is perfectly predicted — promotes D by one
  and doubles the prediction, but only while the doubled prediction stays
  within one reference interval; a pixel whose stability dropped demotes D
  by one and halves the prediction.  A zero marker throttles hard:
  D_new = floor(log2(D_old)), prediction divided by (D_old - D_new).
* ``radial`` — self-adjustment plus neighbourhood coupling, applied
  between frames: a zero marker queues the hard throttle for the square
  of radius ``throttle_radius`` around the pixel; a +/-1 stability step
  queues the same nudge for the square of radius ``minor_radius``.  Each
  pixel applies at most one queued throttle and a net +/-1 nudge per
  frame; a throttle overrides nudges.
* ``aggressive`` — promote D when twice the observed interval is below
  the pixel's deadline allowance ``dt_max / r``; demote by one on a zero
  marker.  The region-of-interest factor r grows toward the tracked
  rectangle, so far pixels coarsen aggressively while pixels inside the
  rectangle (r effectively infinite) never promote: temporal foveation.

Consecutive identical events (same D, same integer interval) are
run-length tracked per pixel; the exported stream stays fully expanded
and the runs are reported in a sidecar array in the stats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import D_MAX, D_ZERO, PlaneParams

_EPS = 1e-9
ROI_INSIDE_R = 1 << 20

REPEAT_DTYPE = np.dtype([("x", "<u2"), ("y", "<u2"), ("d", "u1"),
                         ("dt", "<u4"), ("count", "<u2")])

_MODES = ("constant", "self_adjust", "radial", "aggressive")


@dataclass
class SimConfig:
    mode: str = "constant"
    dt_s: int = 12000
    dt_ref: int = 50
    dt_max: int = 2500
    d_start: int = 8
    throttle_radius: int = 1
    minor_radius: int = 2
    roi_r_max: int = 8
    roi_falloff: int = 4

    def __post_init__(self) -> None:
        if self.mode not in _MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if not (0 < self.dt_ref <= self.dt_max):
            raise ValueError("need 0 < dt_ref <= dt_max")
        if not (0 <= self.d_start <= D_MAX):
            raise ValueError("d_start out of range")
        if self.throttle_radius < 0 or self.minor_radius < 0:
            raise ValueError("radii must be >= 0")


def stable_bits(dt: int, predicted: int) -> int:
    """Most-significant bits shared by two intervals, on 32-bit values."""
    return 32 - (int(dt) ^ int(predicted)).bit_length()


def throttle_down(d: int, pred: float) -> tuple[int, float]:
    """Hard sensitivity boost after a zero marker."""
    if d <= 0:
        return 0, pred
    d_new = int(math.floor(math.log2(d)))
    div = max(1, d - d_new)
    return d_new, max(1.0, pred / div)


def adjust_self(d: int, pred: float, prev_stable: int, dt: float,
                empty: bool, dt_ref: int) -> tuple[int, float, int, int]:
    """One self-adjustment step.

    Returns (new_d, new_pred, new_prev_stable, direction) where direction
    is the +/-1 stability nudge this event produced (0 otherwise).
    """
    if empty:
        d, pred = throttle_down(d, pred)
        return d, pred, 0, 0
    s = stable_bits(int(dt), int(pred))
    direction = 0
    if (s > prev_stable or s == 32) and 2 * pred <= dt_ref and d < D_MAX:
        d += 1
        pred *= 2
        direction = 1
    elif s < prev_stable and d > 0:
        d -= 1
        pred = max(1.0, pred / 2)
        direction = -1
    else:
        # Hold: the running estimate adopts the observed interval so a
        # settled pixel keeps a fresh prediction.
        pred = max(1.0, float(int(dt)))
    return d, pred, s, direction


def adjust_aggressive(d: int, dt: float, dt_limit: float,
                      empty: bool) -> int:
    """Deadline-driven step: coarsen fast pixels, refine silent ones."""
    if empty:
        return max(0, d - 1)
    if 2 * dt < dt_limit and d < D_MAX:
        return d + 1
    return d


def neighbourhood(x: int, y: int, radius: int,
                  width: int, height: int) -> list[tuple[int, int]]:
    """In-bounds square of Chebyshev ``radius`` around (x, y), centre included."""
    return [(px, py)
            for py in range(max(0, y - radius), min(height, y + radius + 1))
            for px in range(max(0, x - radius), min(width, x + radius + 1))]


def roi_factor_map(width: int, height: int,
                   rect: Optional[tuple[int, int, int, int]],
                   r_max: int, falloff: int) -> np.ndarray:
    """Per-pixel region-of-interest factor.

    Inside the rectangle the factor is effectively infinite; outside it
    decays with Chebyshev distance to the rectangle, reaching 1 (full
    aggression) far away.
    """
    r = np.ones((height, width), np.int64)
    if rect is None:
        return r
    x0, y0, w, h = rect
    x1, y1 = x0 + w, y0 + h
    xs = np.arange(width)
    ys = np.arange(height)
    dx = np.maximum(np.maximum(x0 - xs, xs - (x1 - 1)), 0)
    dy = np.maximum(np.maximum(y0 - ys, ys - (y1 - 1)), 0)
    dist = np.maximum(dy[:, None], dx[None, :])
    graded = np.maximum(1, r_max - dist // max(1, falloff))
    r[:, :] = graded
    r[dist == 0] = ROI_INSIDE_R
    return r


class AsintSimulator:
    """Stateful sensor over a fixed plane; feed frames, then finish."""

    def __init__(self, width: int, height: int, config: SimConfig):
        self.width = width
        self.height = height
        self.config = config
        n = width * height
        self.d = np.full(n, config.d_start, np.int64)
        self.acc = np.zeros(n, np.float64)        # integral photon counts
        self.last_t = np.zeros(n, np.float64)
        self.pred = np.full(n, float(config.dt_ref), np.float64)
        self.prev_stable = np.zeros(n, np.int64)
        self.started = np.zeros(n, bool)
        self.roi_r = np.ones((height, width), np.int64)
        # run-length tracking of identical consecutive events
        self.rep_sig = np.full((n, 2), -1, np.int64)   # (d, int dt)
        self.rep_count = np.zeros(n, np.int64)
        self.frame_index = 0
        self.events: list[tuple[int, int, int, int]] = []
        self.repeats: list[tuple[int, int, int, int, int]] = []
        self.empty_count = 0
        # radial-mode queues, applied between frames
        self._queued_throttle: set[int] = set()
        self._queued_nudge: dict[int, int] = {}

    # -- helpers ----------------------------------------------------------

    def set_roi(self, rect: Optional[tuple[int, int, int, int]]) -> None:
        cfg = self.config
        self.roi_r = roi_factor_map(self.width, self.height, rect,
                                    cfg.roi_r_max, cfg.roi_falloff)

    def _record(self, i: int, x: int, y: int, d_code: int, t: float) -> None:
        ti = int(t + _EPS)
        self.events.append((x, y, d_code, ti))
        dt_i = ti - int(self.last_t[i] + _EPS)
        sig = (int(d_code), int(dt_i))
        if sig == tuple(self.rep_sig[i]) and self.rep_count[i] < 0xFFFF:
            self.rep_count[i] += 1
        else:
            self._flush_repeat(i, x, y)
            self.rep_sig[i] = sig
            self.rep_count[i] = 0

    def _flush_repeat(self, i: int, x: int, y: int) -> None:
        if self.rep_count[i] >= 1:
            d_sig, dt_sig = self.rep_sig[i]
            self.repeats.append((x, y, int(d_sig), int(dt_sig),
                                 int(self.rep_count[i])))
        self.rep_count[i] = 0

    def _after_event(self, i: int, x: int, y: int, dt: float,
                     empty: bool) -> None:
        """Mode-specific D adjustment once an event has fired."""
        cfg = self.config
        mode = cfg.mode
        if mode == "constant":
            return
        if mode == "aggressive":
            r = int(self.roi_r[y, x])
            limit = cfg.dt_max / r
            self.d[i] = adjust_aggressive(int(self.d[i]), dt, limit, empty)
            self.acc[i] = min(self.acc[i], float((1 << int(self.d[i])) - 1))
            return
        # self_adjust and radial share the stability step.
        if mode == "radial" and empty:
            # The hard throttle (centre included) lands between frames.
            self._queued_throttle.update(
                py * self.width + px
                for px, py in neighbourhood(x, y, cfg.throttle_radius,
                                            self.width, self.height))
            return
        d, pred, stable, direction = adjust_self(
            int(self.d[i]), float(self.pred[i]), int(self.prev_stable[i]),
            dt, empty, cfg.dt_ref)
        self.d[i], self.pred[i], self.prev_stable[i] = d, pred, stable
        # A sensitivity drop reconfigures the integrator; it cannot carry
        # a charge at or above the new threshold (conservation is a
        # constant-mode contract only).
        self.acc[i] = min(self.acc[i], float((1 << d) - 1))
        if mode == "radial" and direction != 0:
            for px, py in neighbourhood(x, y, cfg.minor_radius,
                                        self.width, self.height):
                j = py * self.width + px
                if j != i:
                    self._queued_nudge[j] = direction

    def _apply_queues(self) -> None:
        for i in self._queued_throttle:
            d, pred = throttle_down(int(self.d[i]), float(self.pred[i]))
            self.d[i], self.pred[i] = d, pred
            self.prev_stable[i] = 0
            self.acc[i] = min(self.acc[i], float((1 << d) - 1))
        for i, direction in self._queued_nudge.items():
            if i in self._queued_throttle:
                continue
            d = min(D_MAX, max(0, int(self.d[i]) + direction))
            self.d[i] = d
            self.acc[i] = min(self.acc[i], float((1 << d) - 1))
        self._queued_throttle.clear()
        self._queued_nudge.clear()

    # -- public API -------------------------------------------------------

    def ingest_frame(self, photons: np.ndarray) -> int:
        """Integrate one photon-count frame; returns events fired."""
        frame = np.asarray(photons)
        if frame.shape != (self.height, self.width):
            raise ValueError("frame dimensions do not match the sensor")
        if frame.dtype.kind not in "ui":
            raise ValueError("photon frames must be integer counts")
        cfg = self.config
        t0 = self.frame_index * float(cfg.dt_ref)
        end = t0 + cfg.dt_ref
        before = len(self.events)
        flat = frame.reshape(-1).astype(np.int64)
        for i in range(flat.shape[0]):
            p = int(flat[i])
            x, y = i % self.width, i // self.width
            if not self.started[i]:
                self.started[i] = True
                self.last_t[i] = t0
            consumed = 0
            while True:
                if p > 0:
                    need = (1 << int(self.d[i])) - self.acc[i]
                    frac = consumed + need
                    t_cross = (t0 + frac / p * cfg.dt_ref
                               if frac <= p + _EPS else None)
                else:
                    t_cross = None
                # Zero markers that come due before the next saturation.
                while True:
                    deadline = self.last_t[i] + cfg.dt_max
                    due = deadline <= end + _EPS and (
                        t_cross is None or deadline < t_cross - _EPS)
                    if due:
                        self._record(i, x, y, D_ZERO, deadline)
                        self.last_t[i] = deadline
                        self.empty_count += 1
                        self._after_event(i, x, y, cfg.dt_max, empty=True)
                        if p > 0:
                            need = (1 << int(self.d[i])) - self.acc[i]
                            frac = consumed + need
                            t_cross = (t0 + frac / p * cfg.dt_ref
                                       if frac <= p + _EPS else None)
                    else:
                        break
                if t_cross is None:
                    self.acc[i] += p - consumed
                    break
                dt = t_cross - self.last_t[i]
                self._record(i, x, y, int(self.d[i]), t_cross)
                self.last_t[i] = t_cross
                consumed += need
                self.acc[i] = 0.0
                self._after_event(i, x, y, dt, empty=False)
        if cfg.mode == "radial":
            self._apply_queues()
        self.frame_index += 1
        return len(self.events) - before

    def finish(self) -> tuple[np.ndarray, dict]:
        """Close out run-length tracking and return (stream, stats)."""
        from .stream import EVENT_DTYPE_MONO, sort_events

        for i in range(self.width * self.height):
            self._flush_repeat(i, i % self.width, i // self.width)
        arr = np.zeros(len(self.events), EVENT_DTYPE_MONO)
        if len(self.events):
            xs, ys, ds, ts = zip(*self.events)
            arr["x"], arr["y"], arr["d"], arr["t"] = xs, ys, ds, ts
        arr = sort_events(arr)
        side = np.zeros(len(self.repeats), REPEAT_DTYPE)
        for k, (x, y, d, dt, count) in enumerate(self.repeats):
            side[k] = (x, y, d, dt, count)
        n_px = self.width * self.height
        intervals = max(1, self.frame_index)
        stats = {
            "events": int(len(arr)),
            "empty_events": int(self.empty_count),
            "repeat_records": int(len(side)),
            "repeats_saved": int(side["count"].sum()) if len(side) else 0,
            "events_per_pixel_per_interval":
                len(arr) / (n_px * intervals),
            "residual_photons": float(self.acc.sum()),
            "sidecar": side,
        }
        return arr, stats

    def params(self) -> PlaneParams:
        cfg = self.config
        return PlaneParams(width=self.width, height=self.height, channels=1,
                           dt_s=cfg.dt_s, dt_ref=cfg.dt_ref,
                           dt_max=cfg.dt_max, source_kind="simulated")


def run_sim(frames: np.ndarray, config: SimConfig,
            roi_track: Optional[Sequence[tuple[int, int, int, int]]] = None) \
        -> tuple[PlaneParams, np.ndarray, dict]:
    """Simulate a full capture; returns (plane params, stream, stats).

    ``roi_track`` supplies one rectangle (x, y, w, h) per frame for the
    aggressive mode's foveation; shorter tracks hold their last entry.
    """
    frames = np.asarray(frames)
    if frames.ndim != 3:
        raise ValueError("expected (frames, height, width) photon counts")
    n, h, w = frames.shape
    sim = AsintSimulator(w, h, config)
    for f in range(n):
        if roi_track is not None and len(roi_track):
            sim.set_roi(roi_track[min(f, len(roi_track) - 1)])
        sim.ingest_frame(frames[f])
    stream, stats = sim.finish()
    return sim.params(), stream, stats

