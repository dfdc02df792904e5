"""Turning event streams back into frames and derived images.

An event closes the span since the pixel's previous event (or since tick
zero) and states that 2**D intensity units arrived across it.  The
accurate decoder converts that to input units per reference interval with
floor quantization, which keeps framed round trips within one grey level.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .model import D_FILLER, D_ZERO, PlaneParams
from .synth import DVS_DTYPE


def _dtype_for(vmax: int) -> np.dtype:
    """Narrowest unsigned dtype that holds reconstructed values."""
    if vmax <= 0xFF:
        return np.dtype(np.uint8)
    if vmax <= 0xFFFF:
        return np.dtype(np.uint16)
    return np.dtype(np.uint32)


def _group_by_pixel(params: PlaneParams, events: np.ndarray):
    """Yield (pixel_index, slice of events sorted by t) per active pixel."""
    has_c = "c" in events.dtype.names
    pix = (events["y"].astype(np.int64) * params.width + events["x"]) * \
        params.channels
    if has_c:
        pix = pix + events["c"]
    order = np.lexsort((events["t"], pix))
    s = events[order]
    spix = pix[order]
    bounds = np.nonzero(np.diff(spix))[0] + 1
    starts = np.concatenate(([0], bounds))
    ends = np.concatenate((bounds, [len(s)]))
    for a, b in zip(starts, ends):
        yield int(spix[a]), s[a:b]


def _span_values_accurate(params: PlaneParams, group: np.ndarray,
                          vmax: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-event (closing tick, reconstructed value) for one pixel."""
    t = group["t"].astype(np.float64)
    d = group["d"].astype(np.int64)
    prev_t = np.concatenate(([0.0], t[:-1]))
    dt = t - prev_t
    vals = np.zeros(len(group))
    ok = (d < 128) & (dt > 0)
    vals[ok] = np.floor(np.ldexp(1.0, d[ok]) * params.dt_ref / dt[ok])
    vals[d == D_ZERO] = 0.0
    for i in np.nonzero(d == D_FILLER)[0]:
        vals[i] = vals[i - 1] if i > 0 else 0.0
    return t, np.clip(vals, 0, vmax)


def decode_accurate(params: PlaneParams, events: np.ndarray,
                    n_frames: Optional[int] = None,
                    frame_ticks: Optional[int] = None,
                    vmax: int = 255) -> np.ndarray:
    """Reconstruct frames at ``frame_ticks`` cadence (default dt_ref).

    Frame f shows, per pixel, the value of the span covering its start
    tick f * frame_ticks; trailing frames hold the last known value.
    """
    ft = frame_ticks or params.dt_ref
    if n_frames is None:
        last = int(events["t"].max()) if len(events) else 0
        n_frames = max(1, math.ceil(last / ft))
    shape = ((n_frames, params.height, params.width) if params.channels == 1
             else (n_frames, params.height, params.width, params.channels))
    dtype = _dtype_for(vmax)
    out = np.zeros(shape, dtype)
    flat = out.reshape(n_frames, -1)
    sample_ticks = np.arange(n_frames, dtype=np.float64) * ft
    for pix, group in _group_by_pixel(params, events):
        t, vals = _span_values_accurate(params, group, vmax)
        # Span i covers (prev_t[i], t[i]]; a frame start strictly below
        # t[i] and at/after prev_t[i] belongs to span i.
        idx = np.searchsorted(t, sample_ticks, side="right")
        idx = np.clip(idx, 0, len(vals) - 1)
        flat[:, pix] = vals[idx].astype(dtype)
    return out


def decode_instantaneous(params: PlaneParams, events: np.ndarray,
                         n_frames: Optional[int] = None,
                         frame_ticks: Optional[int] = None,
                         vmax: int = 255) -> np.ndarray:
    """Reconstruct treating each event's 2**D as arriving within one frame
    interval, capped at the display maximum.  Matches sensors whose D is
    tuned so one event roughly spans one output frame."""
    ft = frame_ticks or params.dt_ref
    if n_frames is None:
        last = int(events["t"].max()) if len(events) else 0
        n_frames = max(1, math.ceil(last / ft))
    shape = ((n_frames, params.height, params.width) if params.channels == 1
             else (n_frames, params.height, params.width, params.channels))
    dtype = _dtype_for(vmax)
    out = np.zeros(shape, dtype)
    flat = out.reshape(n_frames, -1)
    sample_ticks = np.arange(n_frames, dtype=np.float64) * ft
    for pix, group in _group_by_pixel(params, events):
        t = group["t"].astype(np.float64)
        d = group["d"].astype(np.int64)
        prev_t = np.concatenate(([0.0], t[:-1]))
        dt = t - prev_t
        vals = np.zeros(len(group))
        ok = (d < 128) & (dt > 0)
        vals[ok] = np.floor(np.minimum(np.ldexp(1.0, d[ok]), vmax) * ft / dt[ok])
        vals[d == D_ZERO] = 0.0
        for i in np.nonzero(d == D_FILLER)[0]:
            vals[i] = vals[i - 1] if i > 0 else 0.0
        vals = np.clip(vals, 0, vmax)
        idx = np.clip(np.searchsorted(t, sample_ticks, side="right"),
                      0, len(vals) - 1)
        flat[:, pix] = vals[idx].astype(dtype)
    return out


def _normalize_to_u8(img: np.ndarray, valid: np.ndarray) -> np.ndarray:
    out = np.zeros(img.shape, np.uint8)
    if valid.any():
        lo = img[valid].min()
        hi = img[valid].max()
        if hi > lo:
            out[valid] = np.round((img[valid] - lo) / (hi - lo) * 255)
        else:
            out[valid] = 128
    return out


def d_image(params: PlaneParams, events: np.ndarray,
            at_tick: Optional[int] = None) -> np.ndarray:
    """Min-max normalized map of each pixel's latest event D."""
    n = params.height * params.width * params.channels
    latest = np.full(n, -1, np.int64)
    for pix, group in _group_by_pixel(params, events):
        g = group if at_tick is None else group[group["t"] <= at_tick]
        g = g[g["d"] < 128]
        if len(g):
            latest[pix] = int(g["d"][-1])
    img = latest.reshape(params.height, params.width, params.channels)
    valid = img >= 0
    out = _normalize_to_u8(img.astype(np.float64), valid)
    return out[..., 0] if params.channels == 1 else out


def dt_image(params: PlaneParams, events: np.ndarray,
             at_tick: Optional[int] = None) -> np.ndarray:
    """Min-max normalized map of each pixel's latest inter-event span."""
    n = params.height * params.width * params.channels
    latest = np.full(n, np.nan)
    for pix, group in _group_by_pixel(params, events):
        g = group if at_tick is None else group[group["t"] <= at_tick]
        if len(g) >= 2:
            latest[pix] = float(g["t"][-1]) - float(g["t"][-2])
        elif len(g) == 1:
            latest[pix] = float(g["t"][-1])
    img = latest.reshape(params.height, params.width, params.channels)
    valid = np.isfinite(img)
    out = _normalize_to_u8(np.where(valid, img, 0.0), valid)
    return out[..., 0] if params.channels == 1 else out


# ---------------------------------------------------------------------------
# polarity export


def export_dvs(params: PlaneParams, events: np.ndarray,
               theta: float = 0.15) -> np.ndarray:
    """Emit polarity events wherever the log intensity crosses k * theta.

    Each intensity event fixes the average rate over the span it closes;
    when the log of that rate steps over the reference by k thresholds,
    k polarity events leave, stamped at the span's start (that is where
    the change began) and the reference snaps by k * theta.
    """
    records = []
    for pix, group in _group_by_pixel(params, events):
        c = pix % params.channels
        rem = pix // params.channels
        x = rem % params.width
        y = rem // params.width
        if c != 0 and params.channels == 3:
            continue  # polarity export reads the first channel only
        ref = None
        prev_t = 0.0
        prev_rate = None
        for rec in group:
            t = float(rec["t"])
            d = int(rec["d"])
            dt = t - prev_t
            if d == D_ZERO or dt <= 0:
                ref = None
                prev_rate = None
                prev_t = t
                continue
            if d == D_FILLER:
                rate = prev_rate
            else:
                rate = math.ldexp(1.0, d) / dt
            if rate is None or rate <= 0:
                prev_t = t
                continue
            log_rate = math.log(rate)
            if ref is None:
                ref = log_rate
            else:
                k = int(abs(log_rate - ref) / theta)
                if k:
                    sign = 1 if log_rate > ref else -1
                    records.extend((x, y, sign, int(prev_t)) for _ in range(k))
                    ref += sign * k * theta
            prev_rate = rate
            prev_t = t
    arr = np.array(records, dtype=DVS_DTYPE) if records \
        else np.empty(0, dtype=DVS_DTYPE)
    order = np.lexsort((arr["y"], arr["x"], arr["t"]))
    return arr[order]


# ---------------------------------------------------------------------------
# frame writers


def write_png_sequence(frames: np.ndarray, pattern: str) -> list[str]:
    """Save frames as PNGs; pattern takes a {i} or printf-style %d slot."""
    from PIL import Image

    if "{" not in pattern and "%" not in pattern:
        raise ValueError(f"pattern {pattern!r} has no frame-number slot")
    paths = []
    for i, frame in enumerate(frames):
        path = pattern.format(i=i) if "{" in pattern else pattern % i
        Image.fromarray(frame).save(path)
        paths.append(path)
    return paths


def write_y4m(frames: np.ndarray, path: str, fps: int = 30) -> None:
    """Write mono frames as a YUV4MPEG2 stream (Cmono420-safe: mono)."""
    if frames.ndim != 3:
        raise ValueError("y4m export expects mono frames")
    _, h, w = frames.shape
    with open(path, "wb") as f:
        f.write(f"YUV4MPEG2 W{w} H{h} F{fps}:1 Ip A1:1 Cmono\n".encode())
        for frame in frames:
            f.write(b"FRAME\n")
            f.write(frame.astype(np.uint8).tobytes())


def write_raw(frames: np.ndarray, path: str) -> None:
    """Dump frames as little-endian uint8 with a .npy header."""
    np.save(path, frames.astype(np.uint8))
