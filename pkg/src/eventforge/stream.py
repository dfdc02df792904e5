"""Binary container for event streams.

Layout (all little-endian):

    header (25 bytes):
        magic       4s   b"ADER"
        version     u8   currently 2
        flags       u8   bit 0: byte order (0 = little-endian)
        width       u16
        height      u16
        channels    u8   1 or 3
        source      u8   0 framed, 1 dvs, 2 adder, 3 simulated
        pixel_mode  u8   0 collapse, 1 list
        dt_s        u32  ticks per second of source time
        dt_ref      u32  ticks per reference (input frame) interval
        dt_max      u32  maximum ticks between a pixel's events
    events (9 or 10 bytes each, repeated to EOF):
        x u16, y u16, [c u8 when channels == 3], d u8, t u32
"""

from __future__ import annotations

import io
import math
import struct
from typing import BinaryIO, Iterable, Union

import numpy as np

from .model import D_FILLER, D_ZERO, Event, PlaneParams

MAGIC = b"ADER"
VERSION = 2

_HEADER = struct.Struct("<4sBBHHBBBIII")
HEADER_SIZE = _HEADER.size  # 25

_SOURCE_NAMES = {0: "framed", 1: "dvs", 2: "adder", 3: "simulated"}
_MODE_NAMES = {0: "collapse", 1: "list"}

EVENT_DTYPE_MONO = np.dtype([("x", "<u2"), ("y", "<u2"), ("d", "u1"), ("t", "<u4")])
EVENT_DTYPE_COLOR = np.dtype(
    [("x", "<u2"), ("y", "<u2"), ("c", "u1"), ("d", "u1"), ("t", "<u4")]
)
assert EVENT_DTYPE_MONO.itemsize == 9 and EVENT_DTYPE_COLOR.itemsize == 10


class StreamFormatError(ValueError):
    """The bytes do not form a readable event stream."""


class BadMagicError(StreamFormatError):
    pass


class BadVersionError(StreamFormatError):
    pass


class TruncatedStreamError(StreamFormatError):
    pass


def event_dtype(channels: int) -> np.dtype:
    return EVENT_DTYPE_COLOR if channels == 3 else EVENT_DTYPE_MONO


def empty_events(channels: int) -> np.ndarray:
    return np.empty(0, dtype=event_dtype(channels))


def events_to_array(events: Iterable[Event], channels: int) -> np.ndarray:
    events = list(events)
    arr = np.empty(len(events), dtype=event_dtype(channels))
    if channels == 3:
        for i, e in enumerate(events):
            arr[i] = (e.x, e.y, e.c, e.d, e.t)
    else:
        for i, e in enumerate(events):
            arr[i] = (e.x, e.y, e.d, e.t)
    return arr


def array_to_events(arr: np.ndarray) -> list[Event]:
    if "c" in arr.dtype.names:
        return [Event(int(r["x"]), int(r["y"]), int(r["c"]), int(r["d"]), int(r["t"]))
                for r in arr]
    return [Event(int(r["x"]), int(r["y"]), 0, int(r["d"]), int(r["t"]))
            for r in arr]


def sort_events(arr: np.ndarray) -> np.ndarray:
    """Canonical interchange order: time-major, then row, column, channel."""
    keys = ["t", "y", "x"] + (["c"] if "c" in arr.dtype.names else [])
    return arr[np.lexsort(tuple(arr[k] for k in reversed(keys)))]


def _coerce_array(events, channels: int) -> np.ndarray:
    if isinstance(events, np.ndarray):
        want = event_dtype(channels)
        if events.dtype != want:
            raise ValueError(f"event array dtype {events.dtype} does not match "
                             f"{channels}-channel layout")
        return events
    return events_to_array(events, channels)


# ---------------------------------------------------------------------------
# header


def write_header(f: BinaryIO, params: PlaneParams) -> None:
    f.write(_HEADER.pack(MAGIC, VERSION, 0, params.width, params.height,
                         params.channels, params.source_code, params.mode_code,
                         params.dt_s, params.dt_ref, params.dt_max))


def read_header(f: BinaryIO) -> PlaneParams:
    raw = f.read(HEADER_SIZE)
    if len(raw) < HEADER_SIZE:
        raise TruncatedStreamError(
            f"header needs {HEADER_SIZE} bytes, got {len(raw)}")
    magic, version, flags, w, h, ch, source, mode, dt_s, dt_ref, dt_max = \
        _HEADER.unpack(raw)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise BadVersionError(f"unsupported version {version}")
    if flags & 0x01:
        raise StreamFormatError("big-endian streams are not supported")
    if source not in _SOURCE_NAMES or mode not in _MODE_NAMES:
        raise StreamFormatError(f"unknown source/mode codes {source}/{mode}")
    try:
        return PlaneParams(width=w, height=h, channels=ch, dt_s=dt_s,
                           dt_ref=dt_ref, dt_max=dt_max,
                           source_kind=_SOURCE_NAMES[source],
                           pixel_mode=_MODE_NAMES[mode])
    except ValueError as exc:
        raise StreamFormatError(str(exc)) from exc


# ---------------------------------------------------------------------------
# whole-stream read/write

PathOrFile = Union[str, bytes, "io.IOBase"]


def _open(path_or_file, mode: str):
    if hasattr(path_or_file, "read") or hasattr(path_or_file, "write"):
        return path_or_file, False
    return open(path_or_file, mode), True


def write_stream(path_or_file, params: PlaneParams, events) -> int:
    """Write header plus events; returns the number of events written."""
    arr = _coerce_array(events, params.channels)
    f, should_close = _open(path_or_file, "wb")
    try:
        write_header(f, params)
        f.write(arr.tobytes())
    finally:
        if should_close:
            f.close()
    return len(arr)


def read_stream(path_or_file) -> tuple[PlaneParams, np.ndarray]:
    f, should_close = _open(path_or_file, "rb")
    try:
        params = read_header(f)
        body = f.read()
    finally:
        if should_close:
            f.close()
    dtype = event_dtype(params.channels)
    if len(body) % dtype.itemsize:
        raise TruncatedStreamError(
            f"event payload is {len(body)} bytes, not a multiple of "
            f"{dtype.itemsize}")
    arr = np.frombuffer(body, dtype=dtype).copy()
    bad = (arr["x"] >= params.width) | (arr["y"] >= params.height)
    if "c" in dtype.names:
        bad |= arr["c"] >= params.channels
    if bad.any():
        raise StreamFormatError(
            f"{int(bad.sum())} events fall outside the declared plane")
    return params, arr


# ---------------------------------------------------------------------------
# statistics


def implied_intensities(params: PlaneParams, arr: np.ndarray) -> np.ndarray:
    """Per-event intensity in input units per reference interval.

    Each event closes a span that started at the pixel's previous event
    (or at zero).  Reserved markers contribute the rate they stand for:
    zero markers are excluded, fillers inherit the previous span's rate.
    """
    if len(arr) == 0:
        return np.zeros(0)
    has_c = "c" in arr.dtype.names
    order = np.lexsort((arr["t"],
                        arr["c"] if has_c else np.zeros(len(arr), np.uint8),
                        arr["x"], arr["y"]))
    s = arr[order]
    pix = (s["y"].astype(np.int64) * params.width + s["x"]) * \
        (params.channels if has_c else 1)
    if has_c:
        pix = pix + s["c"]
    first = np.ones(len(s), bool)
    first[1:] = pix[1:] != pix[:-1]
    prev_t = np.where(first, 0, np.roll(s["t"], 1)).astype(np.float64)
    dt = s["t"].astype(np.float64) - prev_t
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = np.where(dt > 0, np.ldexp(1.0, s["d"].astype(np.int64)
                                         .clip(0, 127)) / dt, np.nan)
    rate[s["d"] == D_ZERO] = 0.0
    # Fillers repeat the previous event's rate on the same pixel.
    filler = s["d"] == D_FILLER
    if filler.any():
        prev_rate = np.concatenate(([np.nan], rate[:-1]))
        rate[filler] = np.where(first[filler], np.nan, prev_rate[filler])
    out = np.empty_like(rate)
    out[order] = rate * params.dt_ref
    return out


def audit_deadline(params: PlaneParams, arr: np.ndarray) -> list[str]:
    """Check the stream against the deadline contract, decoder-side.

    Verifiable from the stream alone: (a) every pixel that emits at all
    emits its first event by dt_max, and (b) an event directly after a
    filler closes a span of at most dt_max (fillers mark "caught up to
    now", so the next span starts fresh).  Later events may legitimately
    stretch further as stable pixels coalesce.  Returns human-readable
    violation strings; empty means clean.
    """
    problems: list[str] = []
    if len(arr) == 0:
        return problems
    has_c = "c" in arr.dtype.names
    pix = (arr["y"].astype(np.int64) * params.width + arr["x"]) * \
        (params.channels if has_c else 1)
    if has_c:
        pix = pix + arr["c"]
    order = np.lexsort((arr["t"], pix))
    s = arr[order]
    spix = pix[order]
    first = np.ones(len(s), bool)
    first[1:] = spix[1:] != spix[:-1]
    late = first & (s["t"].astype(np.int64) > params.dt_max)
    for rec in s[late][:20]:
        problems.append(
            f"pixel ({int(rec['x'])},{int(rec['y'])}) first event at "
            f"t={int(rec['t'])} > dt_max={params.dt_max}")
    after_filler = np.zeros(len(s), bool)
    after_filler[1:] = (s["d"][:-1] == D_FILLER) & ~first[1:]
    span = np.zeros(len(s), np.int64)
    span[1:] = s["t"][1:].astype(np.int64) - s["t"][:-1].astype(np.int64)
    bad = after_filler & (span > params.dt_max)
    for rec, sp in zip(s[bad][:20], span[bad][:20]):
        problems.append(
            f"pixel ({int(rec['x'])},{int(rec['y'])}) waited {int(sp)} ticks "
            f"after a filler (> dt_max={params.dt_max})")
    return problems


def stream_info(params: PlaneParams, arr: np.ndarray) -> dict:
    info: dict = {
        "width": params.width,
        "height": params.height,
        "channels": params.channels,
        "source": params.source_kind,
        "pixel_mode": params.pixel_mode,
        "dt_s": params.dt_s,
        "dt_ref": params.dt_ref,
        "dt_max": params.dt_max,
        "event_count": int(len(arr)),
    }
    if len(arr) == 0:
        info.update(duration_ticks=0, duration_seconds=0.0,
                    events_per_second=0.0, events_per_pixel=0.0,
                    zero_markers=0, fillers=0, dynamic_range_stops=None)
        return info
    t_max = int(arr["t"].max())
    duration_s = t_max / params.dt_s if params.dt_s else 0.0
    n_pix = params.width * params.height * params.channels
    intens = implied_intensities(params, arr)
    finite = intens[np.isfinite(intens) & (intens > 0)]
    info.update(
        duration_ticks=t_max,
        duration_seconds=duration_s,
        events_per_second=len(arr) / duration_s if duration_s else float("inf"),
        events_per_pixel=len(arr) / n_pix,
        zero_markers=int((arr["d"] == D_ZERO).sum()),
        fillers=int((arr["d"] == D_FILLER).sum()),
        dynamic_range_stops=(
            float(np.log2(finite.max() / finite.min())) if len(finite) else None),
        max_d=int(arr["d"][arr["d"] < 128].max()) if (arr["d"] < 128).any() else None,
    )
    return info
