"""Transcoding framed video and DVS streams into intensity events.

Two interchangeable framed transcoders live here: ``FrameTranscoder`` runs
one ``PixelState`` per pixel and is the readable reference;
``VectorTranscoder`` reimplements the collapse pipeline over numpy arrays
using the exact same float arithmetic (shared SAT_EPS, same operation
order) and is what ``transcode_frames`` uses by default.  A test pins
their outputs equal event-for-event.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .model import (
    D_FILLER,
    D_MAX,
    D_ZERO,
    SAT_EPS,
    PixelState,
    PlaneParams,
    SensitivityParams,
)
from .stream import event_dtype, sort_events
from .synth import DVS_DTYPE


def _as_plane(frame: np.ndarray, params: PlaneParams) -> np.ndarray:
    """View one frame as (height, width, channels) float64."""
    if params.channels == 1:
        if frame.shape != (params.height, params.width):
            raise ValueError(f"frame shape {frame.shape} does not match plane")
        return frame.reshape(params.height, params.width, 1).astype(np.float64)
    if frame.shape != (params.height, params.width, 3):
        raise ValueError(f"frame shape {frame.shape} does not match plane")
    return frame.astype(np.float64)


# ---------------------------------------------------------------------------
# scalar reference


class FrameTranscoder:
    """Per-pixel reference transcoder for framed sources."""

    def __init__(self, params: PlaneParams,
                 sens: Optional[SensitivityParams] = None):
        self.params = params
        self.sens = sens or SensitivityParams()
        n = params.height * params.width * params.channels
        self.pixels = [PixelState(dt_ref=params.dt_ref, dt_max=params.dt_max,
                                  sens=self.sens, mode=params.pixel_mode)
                       for _ in range(n)]
        self.frame_index = 0
        self._records: list[tuple[int, int, int, int, int]] = []

    def _pixel(self, y: int, x: int, c: int) -> PixelState:
        return self.pixels[(y * self.params.width + x) * self.params.channels + c]

    def _emit(self, x: int, y: int, c: int, pairs: Iterable[tuple[int, int]]):
        for d, t in pairs:
            self._records.append((x, y, c, d, t))

    def apply_sensitivity_mask(self, mask: np.ndarray, target_m: float) -> None:
        """Lower the contrast threshold inside a region (never raise it)."""
        p = self.params
        for y in range(p.height):
            for x in range(p.width):
                if mask[y, x]:
                    for c in range(p.channels):
                        self._pixel(y, x, c).apply_application_sensitivity(target_m)

    def push_frame(self, frame: np.ndarray) -> None:
        p = self.params
        plane = _as_plane(frame, p)
        for y in range(p.height):
            for x in range(p.width):
                for c in range(p.channels):
                    ps = self._pixel(y, x, c)
                    v = plane[y, x, c]
                    ps.tick_sensitivity(p.dt_ref)
                    if ps.should_flush(v):
                        self._emit(x, y, c, ps.flush(new_baseline=v))
                    ps.integrate(v, p.dt_ref)
                    self._emit(x, y, c, ps.enforce_dtmax())
        self.frame_index += 1

    def finish(self) -> np.ndarray:
        p = self.params
        for y in range(p.height):
            for x in range(p.width):
                for c in range(p.channels):
                    self._emit(x, y, c, self._pixel(y, x, c).flush())
        return self._pack()

    def drain_pending(self) -> np.ndarray:
        """Hand over events emitted so far and clear the outbox.

        Pixel state is untouched, so integration continues seamlessly;
        live playback drains once per input unit.
        """
        arr = self._pack()
        self._records.clear()
        return arr

    def _pack(self) -> np.ndarray:
        arr = np.empty(len(self._records), dtype=event_dtype(self.params.channels))
        for i, (x, y, c, d, t) in enumerate(self._records):
            if self.params.channels == 3:
                arr[i] = (x, y, c, d, t)
            else:
                arr[i] = (x, y, d, t)
        return sort_events(arr)


# ---------------------------------------------------------------------------
# vectorized collapse pipeline


def _d_for_values(v: np.ndarray) -> np.ndarray:
    """Vector twin of model.d_for_intensity for non-negative float input."""
    d = np.zeros(v.shape, np.int16)
    big = v >= 1.0
    if big.any():
        _, exp = np.frexp(v[big])
        d[big] = np.minimum(exp - 1, D_MAX).astype(np.int16)
    return d


@dataclass
class _VecState:
    """Flat per-pixel arrays; index p == (y * width + x) * channels + c."""
    n: int
    m_base: float
    initialized: np.ndarray = field(init=False)
    baseline: np.ndarray = field(init=False)
    d: np.ndarray = field(init=False)
    intensity: np.ndarray = field(init=False)
    cand_d: np.ndarray = field(init=False)
    cand_t: np.ndarray = field(init=False)
    reset_t: np.ndarray = field(init=False)
    cur_m: np.ndarray = field(init=False)
    m_accum: np.ndarray = field(init=False)
    emitted: np.ndarray = field(init=False)
    last_emit_wall: np.ndarray = field(init=False)
    last_emit_t: np.ndarray = field(init=False)

    def __post_init__(self):
        n = self.n
        self.initialized = np.zeros(n, bool)
        self.baseline = np.zeros(n)
        self.d = np.zeros(n, np.int16)
        self.intensity = np.zeros(n)
        self.cand_d = np.full(n, -1, np.int16)
        self.cand_t = np.zeros(n)
        self.reset_t = np.zeros(n)
        self.cur_m = np.full(n, self.m_base)
        self.m_accum = np.zeros(n)
        self.emitted = np.zeros(n, bool)
        self.last_emit_wall = np.zeros(n)
        self.last_emit_t = np.zeros(n)

    def reset_at(self, idx: np.ndarray, values: np.ndarray, wall: float) -> None:
        self.initialized[idx] = True
        self.baseline[idx] = values
        self.reset_t[idx] = wall
        self.intensity[idx] = 0.0
        self.d[idx] = _d_for_values(values)
        self.cand_d[idx] = -1
        self.emitted[idx] = False
        self.cur_m[idx] = self.m_base
        self.m_accum[idx] = 0.0


class VectorTranscoder:
    """Vectorized collapse-mode framed transcoder (bit-compatible with the
    scalar reference; see tests for the equivalence pin)."""

    def __init__(self, params: PlaneParams,
                 sens: Optional[SensitivityParams] = None):
        if params.pixel_mode != "collapse":
            raise ValueError("the vectorized path only implements collapse mode")
        self.params = params
        self.sens = sens or SensitivityParams()
        self.n = params.height * params.width * params.channels
        self.s = _VecState(self.n, float(self.sens.m))
        self.frame_index = 0
        self._chunks: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []

    # -- event assembly ------------------------------------------------

    def _push_events(self, idx: np.ndarray, d, t) -> None:
        if len(idx) == 0:
            return
        d_arr = np.broadcast_to(np.asarray(d, np.uint8), idx.shape).copy()
        t_arr = np.asarray(t, np.int64).astype(np.uint32)
        self._chunks.append((idx.copy(), d_arr, t_arr))

    # -- pipeline stages -----------------------------------------------

    def apply_sensitivity_mask(self, mask: np.ndarray, target_m: float) -> None:
        flat = np.repeat(mask.reshape(-1), self.params.channels)
        pick = flat & (self.s.cur_m > target_m)
        self.s.cur_m[pick] = max(0.0, target_m)

    def _tick_sensitivity(self) -> None:
        s, sens = self.s, self.sens
        if sens.m_max <= 0:
            return
        grow = s.cur_m < sens.m_max
        if not grow.any():
            return
        s.m_accum[grow] += self.params.dt_ref
        step = sens.m_v * self.params.dt_ref
        bumps = np.floor(s.m_accum / step)
        apply = grow & (bumps >= 1)
        if apply.any():
            s.m_accum[apply] -= bumps[apply] * step
            s.cur_m[apply] = np.minimum(s.cur_m[apply] + bumps[apply], sens.m_max)

    def _flush_changed(self, values: np.ndarray, wall: float) -> None:
        s = self.s
        dev = np.abs(values - s.baseline)
        fl = s.initialized & (dev > s.cur_m)
        if not fl.any():
            return
        wall_i = int(wall)
        # Pending candidates leave first.
        with_cand = fl & (s.cand_d >= 0)
        idx = np.nonzero(with_cand)[0]
        if len(idx):
            self._push_events(idx, s.cand_d[idx].astype(np.uint8),
                              s.cand_t[idx].astype(np.int64))
            s.last_emit_t[idx] = s.cand_t[idx]
            s.emitted[idx] = True
        # Same-average filler up to the flush tick, or a zero marker when
        # the whole level was silent.
        filler = fl & s.emitted & (wall_i > s.last_emit_t.astype(np.int64))
        idx = np.nonzero(filler)[0]
        if len(idx):
            self._push_events(idx, D_FILLER, np.full(len(idx), wall_i))
        zero = fl & ~s.emitted & (wall_i - s.reset_t.astype(np.int64) >= 1)
        idx = np.nonzero(zero)[0]
        if len(idx):
            self._push_events(idx, D_ZERO, np.full(len(idx), wall_i))
        all_idx = np.nonzero(fl)[0]
        s.reset_at(all_idx, values[all_idx], wall)

    def _integrate(self, values: np.ndarray, start: float) -> None:
        s = self.s
        p = self.params
        end = start + p.dt_ref
        fresh = ~s.initialized
        if fresh.any():
            idx = np.nonzero(fresh)[0]
            s.reset_at(idx, values[idx], start)
        rate = values / p.dt_ref
        active = rate > 0.0
        pt = np.full(self.n, start)
        while True:
            cap = np.ldexp(1.0, s.d) - s.intensity
            with np.errstate(divide="ignore", invalid="ignore"):
                tsat = np.where(active, cap / np.where(active, rate, 1.0), np.inf)
            sat = active & (pt + tsat <= end + SAT_EPS)
            if not sat.any():
                break
            pt[sat] = pt[sat] + tsat[sat]
            s.intensity[sat] = np.ldexp(1.0, s.d[sat])
            s.cand_d[sat] = s.d[sat]
            s.cand_t[sat] = pt[sat]
            frozen = sat & (s.d >= D_MAX)
            if frozen.any():
                active &= ~frozen
            bump = sat & (s.d < D_MAX)
            s.d[bump] += 1
        leftover = active
        if leftover.any():
            s.intensity[leftover] += rate[leftover] * (end - pt[leftover])

    def _emit_candidates(self, idx: np.ndarray, wall: float) -> None:
        s = self.s
        cd = s.cand_d[idx]
        ct = s.cand_t[idx]
        self._push_events(idx, cd.astype(np.uint8), ct.astype(np.int64))
        s.intensity[idx] = np.maximum(
            0.0, s.intensity[idx] - np.ldexp(1.0, cd))
        s.cand_d[idx] = -1
        s.emitted[idx] = True
        s.last_emit_wall[idx] = wall
        s.last_emit_t[idx] = ct

    def _enforce_dtmax(self, wall: float) -> None:
        s = self.s
        dt_max = self.params.dt_max
        was_emitted = s.emitted.copy()
        had_cand = s.cand_d >= 0
        first = s.initialized & ~was_emitted & \
            (wall - s.reset_t >= dt_max - SAT_EPS)
        idx = np.nonzero(first & had_cand)[0]
        if len(idx):
            self._emit_candidates(idx, wall)
        idx = np.nonzero(first & ~had_cand)[0]
        if len(idx):
            forced_t = np.minimum(wall, s.reset_t[idx] + dt_max)
            self._push_events(idx, D_ZERO, forced_t.astype(np.int64))
            s.intensity[idx] = 0.0
            s.cand_d[idx] = -1
            s.emitted[idx] = True
            s.last_emit_wall[idx] = wall
            s.last_emit_t[idx] = forced_t
        rearm = s.initialized & was_emitted & (s.cand_d >= 0) & \
            (wall - s.last_emit_wall >= dt_max - SAT_EPS)
        idx = np.nonzero(rearm)[0]
        if len(idx):
            self._emit_candidates(idx, wall)

    # -- public API -----------------------------------------------------

    def push_frame(self, frame: np.ndarray) -> None:
        p = self.params
        plane = _as_plane(frame, p)
        values = plane.reshape(-1)
        start = self.frame_index * float(p.dt_ref)
        self._tick_sensitivity()
        self._flush_changed(values, start)
        self._integrate(values, start)
        self._enforce_dtmax(start + p.dt_ref)
        self.frame_index += 1

    def finish(self) -> np.ndarray:
        s = self.s
        wall = self.frame_index * float(self.params.dt_ref)
        wall_i = int(wall)
        idx = np.nonzero(s.cand_d >= 0)[0]
        if len(idx):
            self._emit_candidates(idx, wall)
        filler = s.initialized & s.emitted & \
            (wall_i > s.last_emit_t.astype(np.int64))
        idx = np.nonzero(filler)[0]
        if len(idx):
            self._push_events(idx, D_FILLER, np.full(len(idx), wall_i))
        zero = s.initialized & ~s.emitted & \
            (wall_i - s.reset_t.astype(np.int64) >= 1)
        idx = np.nonzero(zero)[0]
        if len(idx):
            self._push_events(idx, D_ZERO, np.full(len(idx), wall_i))
        return self._pack()

    def drain_pending(self) -> np.ndarray:
        """Hand over events emitted so far and clear the outbox.

        Pixel state is untouched, so integration continues seamlessly;
        live playback drains once per input unit.
        """
        arr = self._pack()
        self._chunks.clear()
        return arr

    def _pack(self) -> np.ndarray:
        p = self.params
        total = sum(len(c[0]) for c in self._chunks)
        arr = np.empty(total, dtype=event_dtype(p.channels))
        pos = 0
        for idx, d, t in self._chunks:
            k = len(idx)
            sl = slice(pos, pos + k)
            if p.channels == 3:
                arr["c"][sl] = (idx % 3).astype(np.uint8)
                pix = idx // 3
            else:
                pix = idx
            arr["x"][sl] = (pix % p.width).astype(np.uint16)
            arr["y"][sl] = (pix // p.width).astype(np.uint16)
            arr["d"][sl] = d
            arr["t"][sl] = t
            pos += k
        return sort_events(arr)


def transcode_frames(frames: np.ndarray, params: PlaneParams,
                     sens: Optional[SensitivityParams] = None,
                     *, engine: str = "auto") -> np.ndarray:
    """Transcode a (frames, height, width[, 3]) uint8 clip to events."""
    if engine == "auto":
        engine = "vector" if params.pixel_mode == "collapse" else "scalar"
    cls = {"vector": VectorTranscoder, "scalar": FrameTranscoder}[engine]
    tr = cls(params, sens)
    for frame in frames:
        tr.push_frame(frame)
    return tr.finish()


# ---------------------------------------------------------------------------
# DVS (polarity) sources


LATENT_THETA = 0.15


class DvsTranscoder:
    """Turns polarity events into intensity events via a latent brightness.

    Each pixel keeps a latent level L in [0, 1] (0.5 at start).  Between
    polarity events the pixel integrates L * 255 intensity per reference
    interval; a polarity event then moves ln(1 + L) by +/- theta.  Long
    quiet spans are cut into half-deadline chunks so deadline events
    interleave correctly.
    """

    def __init__(self, params: PlaneParams,
                 sens: Optional[SensitivityParams] = None,
                 *, theta: float = LATENT_THETA,
                 latent_reset_interval_s: float = 0.5):
        if params.source_kind != "dvs":
            raise ValueError("params.source_kind must be 'dvs'")
        self.params = params
        self.sens = sens or SensitivityParams()
        self.theta = theta
        self.reset_interval = (math.inf if latent_reset_interval_s is None
                               else latent_reset_interval_s * params.dt_s)
        self.pixels: dict[tuple[int, int], PixelState] = {}
        self.latent: dict[tuple[int, int], float] = {}
        self.last_t: dict[tuple[int, int], float] = {}
        self.next_latent_reset: dict[tuple[int, int], float] = {}
        self._records: list[tuple[int, int, int, int]] = []

    def _state(self, key) -> PixelState:
        ps = self.pixels.get(key)
        if ps is None:
            ps = PixelState(dt_ref=self.params.dt_ref,
                            dt_max=self.params.dt_max, sens=self.sens,
                            mode="collapse")
            self.pixels[key] = ps
            self.latent[key] = 0.5
            self.last_t[key] = 0.0
            self.next_latent_reset[key] = self.reset_interval
        return ps

    def _advance(self, key, ps: PixelState, until: float) -> None:
        """Integrate the held latent level up to `until`, chunked so the
        deadline check runs at least twice per dt_max."""
        x, y = key
        chunk = max(1.0, self.params.dt_max / 2.0)
        t = self.last_t[key]
        while t < until - 1e-9:
            span = min(chunk, until - t)
            level = self.latent[key] * 255.0
            units = level * span / self.params.dt_ref
            ps.integrate(units, span)
            for d, et in ps.enforce_dtmax():
                self._records.append((x, y, d, et))
            t += span
        self.last_t[key] = until

    def push(self, x: int, y: int, polarity: int, t: float) -> None:
        key = (x, y)
        ps = self._state(key)
        while t >= self.next_latent_reset[key]:
            boundary = self.next_latent_reset[key]
            self._advance(key, ps, boundary)
            self.latent[key] = 0.5
            if ps.should_flush(0.5 * 255.0):
                for d, et in ps.flush(new_baseline=0.5 * 255.0):
                    self._records.append((x, y, d, et))
            self.next_latent_reset[key] = boundary + self.reset_interval
        self._advance(key, ps, float(t))
        lt = math.log(1.0 + self.latent[key])
        lt += self.theta if polarity > 0 else -self.theta
        level = min(1.0, max(0.0, math.exp(lt) - 1.0))
        self.latent[key] = level
        if ps.should_flush(level * 255.0):
            for d, et in ps.flush(new_baseline=level * 255.0):
                self._records.append((x, y, d, et))

    def finish(self, end_t: Optional[float] = None) -> np.ndarray:
        for key, ps in self.pixels.items():
            if end_t is not None and end_t > self.last_t[key]:
                self._advance(key, ps, float(end_t))
            for d, et in ps.flush():
                self._records.append((key[0], key[1], d, et))
        arr = np.empty(len(self._records), dtype=event_dtype(1))
        for i, (x, y, d, t) in enumerate(self._records):
            arr[i] = (x, y, d, t)
        return sort_events(arr)


def transcode_dvs(dvs_events: np.ndarray, params: PlaneParams,
                  sens: Optional[SensitivityParams] = None,
                  *, theta: float = LATENT_THETA,
                  latent_reset_interval_s: float = 0.5,
                  end_t: Optional[float] = None) -> np.ndarray:
    """Transcode a (x, y, p, t) polarity array into intensity events."""
    tr = DvsTranscoder(params, sens, theta=theta,
                       latent_reset_interval_s=latent_reset_interval_s)
    order = np.argsort(dvs_events["t"], kind="stable")
    for rec in dvs_events[order]:
        tr.push(int(rec["x"]), int(rec["y"]), int(rec["p"]), float(rec["t"]))
    if end_t is None and len(dvs_events):
        end_t = float(dvs_events["t"].max())
    return tr.finish(end_t)


# ---------------------------------------------------------------------------
# event-to-event re-encoding (rate control after the fact)


def reencode(events: np.ndarray, src_params: PlaneParams,
             dst_params: PlaneParams,
             sens: Optional[SensitivityParams] = None) -> np.ndarray:
    """Re-run an event stream through fresh pixels with new parameters.

    Each event is replayed as its implied intensity over its span, so a
    larger deadline or a coarser contrast threshold coalesces events and
    shrinks the stream.
    """
    sens = sens or SensitivityParams()
    channels = src_params.channels
    has_c = "c" in events.dtype.names
    states: dict[tuple, PixelState] = {}
    last_t: dict[tuple, float] = {}
    last_rate: dict[tuple, float] = {}
    out: list[tuple] = []

    keys = ["t", "y", "x"] + (["c"] if has_c else [])
    order = np.lexsort(tuple(events[k] for k in reversed(keys)))
    for rec in events[order]:
        key = (int(rec["x"]), int(rec["y"]), int(rec["c"]) if has_c else 0)
        ps = states.get(key)
        if ps is None:
            ps = PixelState(dt_ref=dst_params.dt_ref, dt_max=dst_params.dt_max,
                            sens=sens, mode="collapse")
            states[key] = ps
            last_t[key] = 0.0
            last_rate[key] = 0.0
        t = float(rec["t"])
        span = t - last_t[key]
        if span <= 0:
            continue
        d = int(rec["d"])
        if d == D_ZERO:
            units = 0.0
        elif d == D_FILLER:
            units = last_rate[key] * span
        else:
            units = math.ldexp(1.0, d)
        last_rate[key] = units / span
        normalized = units * dst_params.dt_ref / span
        ps.tick_sensitivity(span)
        if ps.should_flush(normalized):
            for dd, tt in ps.flush(new_baseline=normalized):
                out.append((*key, dd, tt))
        ps.integrate(units, span)
        for dd, tt in ps.enforce_dtmax():
            out.append((*key, dd, tt))
        last_t[key] = t
    for key, ps in states.items():
        for dd, tt in ps.flush():
            out.append((*key, dd, tt))

    arr = np.empty(len(out), dtype=event_dtype(channels))
    for i, (x, y, c, d, t) in enumerate(out):
        if channels == 3:
            arr[i] = (x, y, c, d, t)
        else:
            arr[i] = (x, y, d, t)
    return sort_events(arr)
