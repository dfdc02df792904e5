"""Source-modeled compression of event streams.

The stream is cut into decoding units (ADUs) on fixed deadline-width
windows: ADU k holds every event with t in [k * dt_max, (k+1) * dt_max).
Each ADU is coded independently with fresh adaptive contexts, so any ADU
can be decoded without its neighbours (this is what makes seeking work).

Inside an ADU the plane is walked in 16x16 cubes, row-major; inside a
cube each channel's pixels are walked in raster order.  A pixel's first
event is predicted from the previous pixel's first event (chain seeded
with D=7 at the window start); its later events are predicted from its
own previous event: the next timestamp is expected at

    predicted_t = prev_t + (prev_span << (D - prev_D))

(negative differences shift right).  The residual may be coarsened by a
power-of-two shift s as long as the intensity implied by the decoded
timestamp stays within max_error of the true one; s = 0 is always valid
and exact, so max_error = 0 gives a bit-exact round trip.  The encoder
reconstructs decoded state as it goes, so encoder and decoder stay in
lockstep under lossy shifts.

Container (.adderc): b"ADRC", then the same 21 header fields as .adder
streams, then per ADU: start_t u32, event_count u32, payload_len u32,
payload bytes.
"""

from __future__ import annotations

import struct
from typing import BinaryIO, Iterator, Optional

import numpy as np

from .arith import BinaryModel, Decoder, Encoder
from .model import D_FILLER, D_ZERO, PlaneParams
from .stream import event_dtype, sort_events

CUBE = 16
MAGIC = b"ADRC"
VERSION = 2

_HEADER = struct.Struct("<4sBBHHBBBIII")
_ADU_HEADER = struct.Struct("<III")

_MAX_SHIFT = 30
_N_BIN_CTX = 32
_SEED_D = 7


def zigzag(v: int) -> int:
    return (v << 1) if v >= 0 else ((-v) << 1) - 1


def unzigzag(z: int) -> int:
    return (z >> 1) if (z & 1) == 0 else -((z + 1) >> 1)


def _bypass_encode(enc: Encoder, bit: int) -> None:
    enc.encode(bit, bit + 1, 2)


def _bypass_decode(dec: Decoder) -> int:
    bit = 1 if dec.slot(2) >= 1 else 0
    dec.consume(bit, bit + 1, 2)
    return bit


class _BinChain:
    """Exp-Golomb-style binarization with per-position adaptive contexts."""

    def __init__(self):
        self.ctx = [BinaryModel() for _ in range(_N_BIN_CTX)]

    def encode(self, enc: Encoder, value: int) -> None:
        n = value + 1
        k = n.bit_length() - 1
        ctx = self.ctx
        for i in range(k):
            ctx[i if i < _N_BIN_CTX else _N_BIN_CTX - 1].encode(enc, 1)
        ctx[k if k < _N_BIN_CTX else _N_BIN_CTX - 1].encode(enc, 0)
        for i in range(k - 1, -1, -1):
            _bypass_encode(enc, (n >> i) & 1)

    def decode(self, dec: Decoder) -> int:
        ctx = self.ctx
        k = 0
        while ctx[k if k < _N_BIN_CTX else _N_BIN_CTX - 1].decode(dec):
            k += 1
        n = 1
        for _ in range(k):
            n = (n << 1) | _bypass_decode(dec)
        return n - 1


class _Contexts:
    """Fresh per ADU: flags plus the residual binarization chains."""

    def __init__(self):
        self.cube_has_events = BinaryModel()
        self.pixel_has_events = BinaryModel()
        self.more_events = BinaryModel()
        self.is_reserved = BinaryModel()
        self.reserved_kind = BinaryModel()  # 0 = zero marker, 1 = filler
        self.first_d = _BinChain()
        self.first_t = _BinChain()
        self.next_d = _BinChain()
        self.shift = _BinChain()
        self.next_t = _BinChain()
        self.reserved_t = _BinChain()
        self.end_check = BinaryModel()


def _shift_span(span: int, d_diff: int) -> int:
    return span << d_diff if d_diff >= 0 else span >> (-d_diff)


def _choose_shift(t_residual: int, predicted: int, prev_t: int, d: int,
                  dt_ref: int, true_t: int, max_error: float,
                  bound: int) -> tuple[int, int]:
    """Largest power-of-two coarsening whose decoded timestamp keeps the
    implied intensity within max_error.  Returns (shift, coarse_residual).

    The decoded timestamp must stay strictly after the pixel's previous
    (decoded) event and strictly below ``bound`` (the pixel's next event
    or the window end, whichever is tighter): coarsening may blur a span
    but never reorder a pixel's history or leak across windows.
    """
    if t_residual == 0:
        return _MAX_SHIFT, 0
    mag = abs(t_residual)
    sign = 1 if t_residual > 0 else -1
    true_span = true_t - prev_t
    true_rate = (1 << d) * dt_ref / true_span if true_span > 0 else 0.0

    def usable(decoded_t: int) -> bool:
        if decoded_t - prev_t <= 0:
            return False
        if decoded_t >= bound:
            return False
        rate = (1 << d) * dt_ref / (decoded_t - prev_t)
        return abs(rate - true_rate) <= max_error

    if max_error > 0 and usable(predicted):
        # The prediction alone may already be close enough.
        return 0, 0
    for s in range(min(_MAX_SHIFT, mag.bit_length() - 1), 0, -1):
        r = mag >> s
        if usable(predicted + sign * (r << s)):
            return s, sign * r
    return 0, t_residual


class _PixelCoder:
    """Per-pixel prediction state shared by encode and decode paths."""

    __slots__ = ("d", "t", "span")

    def __init__(self, d: int, t: int, span: int):
        self.d = d
        self.t = t
        self.span = span


def _iter_cubes(params: PlaneParams):
    for cy in range(0, params.height, CUBE):
        for cx in range(0, params.width, CUBE):
            yield cy, cx, min(CUBE, params.height - cy), min(CUBE, params.width - cx)


# ---------------------------------------------------------------------------
# one ADU


def encode_adu(params: PlaneParams, events: np.ndarray, adu_start: int,
               max_error: float = 0.0) -> bytes:
    """Entropy-code one window's events (already limited to the window)."""
    has_c = params.channels == 3
    per_pixel: dict[tuple[int, int, int], list[tuple[int, int]]] = {}
    order = np.lexsort((events["t"], events["x"], events["y"]))
    for rec in events[order]:
        key = (int(rec["y"]), int(rec["x"]), int(rec["c"]) if has_c else 0)
        per_pixel.setdefault(key, []).append((int(rec["d"]), int(rec["t"])))

    enc = Encoder()
    cx_model = _Contexts()
    dt_ref = params.dt_ref
    window_end = adu_start + params.dt_max
    for cy, cx, ch_, cw_ in _iter_cubes(params):
        for c in range(params.channels):
            cube_keys = [(y, x, c) for y in range(cy, cy + ch_)
                         for x in range(cx, cx + cw_)]
            cube_live = any(k in per_pixel for k in cube_keys)
            cx_model.cube_has_events.encode(enc, int(cube_live))
            if not cube_live:
                continue
            chain_d, chain_t = _SEED_D, adu_start
            for key in cube_keys:
                evts = per_pixel.get(key)
                cx_model.pixel_has_events.encode(enc, int(bool(evts)))
                if not evts:
                    continue
                state: Optional[_PixelCoder] = None
                for j, (d, t) in enumerate(evts):
                    if j > 0:
                        cx_model.more_events.encode(enc, 1)
                    reserved = d in (D_ZERO, D_FILLER)
                    if state is None:
                        cx_model.is_reserved.encode(enc, int(reserved))
                        if reserved:
                            cx_model.reserved_kind.encode(
                                enc, int(d == D_FILLER))
                            cx_model.first_t.encode(
                                enc, zigzag(t - chain_t))
                            state = _PixelCoder(chain_d, t, dt_ref)
                        else:
                            cx_model.first_d.encode(enc, zigzag(d - chain_d))
                            cx_model.first_t.encode(enc, zigzag(t - chain_t))
                            state = _PixelCoder(d, t, dt_ref)
                            chain_d = d
                        chain_t = t
                        continue
                    cx_model.is_reserved.encode(enc, int(reserved))
                    if reserved:
                        cx_model.reserved_kind.encode(enc, int(d == D_FILLER))
                        predicted = state.t + state.span
                        cx_model.reserved_t.encode(enc, zigzag(t - predicted))
                        state.span = max(1, t - state.t)
                        state.t = t
                        continue
                    d_diff = d - state.d
                    cx_model.next_d.encode(enc, zigzag(d_diff))
                    predicted = state.t + _shift_span(state.span, d_diff)
                    # Stay inside the window (ADUs must slice cleanly by t)
                    # and before the pixel's next event (no reordering).
                    bound = window_end if j + 1 >= len(evts) \
                        else min(evts[j + 1][1], window_end)
                    shift, coarse = _choose_shift(
                        t - predicted, predicted, state.t, d, dt_ref, t,
                        max_error, bound)
                    cx_model.shift.encode(enc, shift if coarse else 0)
                    cx_model.next_t.encode(enc, zigzag(coarse))
                    decoded_t = predicted + (
                        (abs(coarse) << (shift if coarse else 0)) *
                        (1 if coarse >= 0 else -1) if coarse else 0)
                    # Track what the decoder will see, not what we saw.
                    state.span = max(1, decoded_t - state.t)
                    state.t = decoded_t
                    state.d = d
                cx_model.more_events.encode(enc, 0)
    cx_model.end_check.encode(enc, 1)
    return enc.finish()


def decode_adu(params: PlaneParams, payload: bytes,
               adu_start: int) -> np.ndarray:
    has_c = params.channels == 3
    dec = Decoder(payload)
    cx_model = _Contexts()
    dt_ref = params.dt_ref
    out: list[tuple[int, int, int, int, int]] = []
    for cy, cx, ch_, cw_ in _iter_cubes(params):
        for c in range(params.channels):
            if not cx_model.cube_has_events.decode(dec):
                continue
            chain_d, chain_t = _SEED_D, adu_start
            for y in range(cy, cy + ch_):
                for x in range(cx, cx + cw_):
                    if not cx_model.pixel_has_events.decode(dec):
                        continue
                    state: Optional[_PixelCoder] = None
                    while True:
                        if state is not None and \
                                not cx_model.more_events.decode(dec):
                            break
                        reserved = cx_model.is_reserved.decode(dec)
                        if state is None:
                            if reserved:
                                kind = cx_model.reserved_kind.decode(dec)
                                t = chain_t + unzigzag(
                                    cx_model.first_t.decode(dec))
                                out.append((x, y, c,
                                            D_FILLER if kind else D_ZERO, t))
                                state = _PixelCoder(chain_d, t, dt_ref)
                            else:
                                d = chain_d + unzigzag(
                                    cx_model.first_d.decode(dec))
                                t = chain_t + unzigzag(
                                    cx_model.first_t.decode(dec))
                                out.append((x, y, c, d, t))
                                state = _PixelCoder(d, t, dt_ref)
                                chain_d = d
                            chain_t = t
                            continue
                        if reserved:
                            kind = cx_model.reserved_kind.decode(dec)
                            predicted = state.t + state.span
                            t = predicted + unzigzag(
                                cx_model.reserved_t.decode(dec))
                            out.append((x, y, c,
                                        D_FILLER if kind else D_ZERO, t))
                            state.span = max(1, t - state.t)
                            state.t = t
                            continue
                        d = state.d + unzigzag(cx_model.next_d.decode(dec))
                        d_diff = d - state.d
                        predicted = state.t + _shift_span(state.span, d_diff)
                        shift = cx_model.shift.decode(dec)
                        coarse = unzigzag(cx_model.next_t.decode(dec))
                        t = predicted + (
                            (abs(coarse) << shift) *
                            (1 if coarse >= 0 else -1) if coarse else 0)
                        out.append((x, y, c, d, t))
                        state.span = max(1, t - state.t)
                        state.t = t
                        state.d = d
    if not cx_model.end_check.decode(dec):
        raise ValueError("ADU payload ended out of sync")
    arr = np.empty(len(out), dtype=event_dtype(params.channels))
    for i, (x, y, c, d, t) in enumerate(out):
        if has_c:
            arr[i] = (x, y, c, d, t)
        else:
            arr[i] = (x, y, d, t)
    return sort_events(arr)


# ---------------------------------------------------------------------------
# whole streams


def split_adus(params: PlaneParams, events: np.ndarray) \
        -> list[tuple[int, np.ndarray]]:
    """Partition events into deadline-width windows from tick zero."""
    if len(events) == 0:
        return []
    window = np.asarray(events["t"], np.int64) // params.dt_max
    out = []
    for k in np.unique(window):
        out.append((int(k) * params.dt_max, events[window == k]))
    return out


def compress_stream(params: PlaneParams, events: np.ndarray,
                    max_error: float = 0.0) -> bytes:
    chunks = [_HEADER.pack(MAGIC, VERSION, 0, params.width, params.height,
                           params.channels, params.source_code,
                           params.mode_code, params.dt_s, params.dt_ref,
                           params.dt_max)]
    for start, adu_events in split_adus(params, events):
        payload = encode_adu(params, adu_events, start, max_error)
        chunks.append(_ADU_HEADER.pack(start, len(adu_events), len(payload)))
        chunks.append(payload)
    return b"".join(chunks)


def iter_compressed(data: bytes) -> tuple[PlaneParams, Iterator[tuple[int, int, bytes]]]:
    """Parse the container; yields (start_t, event_count, payload) per ADU."""
    from .stream import (BadMagicError, BadVersionError, TruncatedStreamError,
                         _SOURCE_NAMES, _MODE_NAMES)

    if len(data) < _HEADER.size:
        raise TruncatedStreamError("compressed header truncated")
    magic, version, flags, w, h, ch, source, mode, dt_s, dt_ref, dt_max = \
        _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise BadVersionError(f"unsupported version {version}")
    params = PlaneParams(width=w, height=h, channels=ch, dt_s=dt_s,
                         dt_ref=dt_ref, dt_max=dt_max,
                         source_kind=_SOURCE_NAMES[source],
                         pixel_mode=_MODE_NAMES[mode])

    def gen():
        pos = _HEADER.size
        while pos < len(data):
            if pos + _ADU_HEADER.size > len(data):
                raise TruncatedStreamError("ADU record header truncated")
            start, count, plen = _ADU_HEADER.unpack_from(data, pos)
            pos += _ADU_HEADER.size
            if pos + plen > len(data):
                raise TruncatedStreamError("ADU payload truncated")
            yield start, count, data[pos:pos + plen]
            pos += plen

    return params, gen()


def decompress_stream(data: bytes) -> tuple[PlaneParams, np.ndarray]:
    params, adus = iter_compressed(data)
    parts = [decode_adu(params, payload, start) for start, _, payload in adus]
    if parts:
        return params, sort_events(np.concatenate(parts))
    return params, np.empty(0, dtype=event_dtype(params.channels))


def decompress_window(data: bytes, start_t: int) \
        -> tuple[PlaneParams, np.ndarray]:
    """Decode only the ADU whose window starts at start_t (seek)."""
    params, adus = iter_compressed(data)
    for start, _, payload in adus:
        if start == start_t:
            return params, decode_adu(params, payload, start)
    raise KeyError(f"no ADU starts at t={start_t}")


def write_compressed(path, params: PlaneParams, events: np.ndarray,
                     max_error: float = 0.0) -> int:
    data = compress_stream(params, events, max_error)
    with open(path, "wb") as f:
        f.write(data)
    return len(data)


def read_compressed(path) -> tuple[PlaneParams, np.ndarray]:
    with open(path, "rb") as f:
        return decompress_stream(f.read())
