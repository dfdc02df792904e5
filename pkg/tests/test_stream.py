"""Container round-trips, malformed-input errors, and stream statistics."""

import io
import struct

import numpy as np
import pytest

from eventforge.model import D_FILLER, D_ZERO, Event, PlaneParams
from eventforge import stream as es


def sample_params(**kw):
    base = dict(width=8, height=6, channels=1, dt_s=7650, dt_ref=255,
                dt_max=7650)
    base.update(kw)
    return PlaneParams(**base)


def test_header_is_25_bytes():
    assert es.HEADER_SIZE == 25


def test_mono_event_record_is_9_bytes():
    assert es.event_dtype(1).itemsize == 9
    assert es.event_dtype(3).itemsize == 10


def test_round_trip_mono(tmp_path):
    params = sample_params()
    events = [Event(1, 2, 0, 7, 255), Event(3, 4, 0, 9, 1020),
              Event(1, 2, 0, D_FILLER, 2000)]
    path = tmp_path / "clip.adder"
    assert es.write_stream(path, params, events) == 3
    got_params, arr = es.read_stream(path)
    assert got_params == params
    assert es.array_to_events(arr) == events
    assert path.stat().st_size == 25 + 3 * 9


def test_round_trip_color_memory_buffer():
    params = sample_params(channels=3)
    events = [Event(0, 0, 2, 1, 10), Event(7, 5, 0, D_ZERO, 400)]
    buf = io.BytesIO()
    es.write_stream(buf, params, events)
    buf.seek(0)
    got_params, arr = es.read_stream(buf)
    assert got_params.channels == 3
    assert es.array_to_events(arr) == events


def test_exact_byte_layout():
    params = sample_params(width=300, height=200)
    buf = io.BytesIO()
    es.write_stream(buf, params, [Event(258, 1, 0, 7, 0x01020304)])
    raw = buf.getvalue()
    assert raw[:4] == b"ADER"
    assert raw[4] == 2  # version
    assert raw[5] == 0  # flags: little-endian
    assert struct.unpack_from("<H", raw, 6)[0] == 300
    assert struct.unpack_from("<H", raw, 8)[0] == 200
    assert raw[10] == 1  # channels
    assert raw[11] == 0  # framed
    assert raw[12] == 0  # collapse
    assert struct.unpack_from("<III", raw, 13) == (7650, 255, 7650)
    x, y, d, t = struct.unpack_from("<HHBI", raw, 25)
    assert (x, y, d, t) == (258, 1, 7, 0x01020304)


def test_bad_magic_is_distinct_error(tmp_path):
    p = tmp_path / "x.adder"
    p.write_bytes(b"NOPE" + bytes(30))
    with pytest.raises(es.BadMagicError):
        es.read_stream(p)


def test_bad_version_is_distinct_error(tmp_path):
    params = sample_params()
    buf = io.BytesIO()
    es.write_stream(buf, params, [])
    raw = bytearray(buf.getvalue())
    raw[4] = 9
    p = tmp_path / "x.adder"
    p.write_bytes(bytes(raw))
    with pytest.raises(es.BadVersionError):
        es.read_stream(p)


def test_truncation_errors(tmp_path):
    params = sample_params()
    buf = io.BytesIO()
    es.write_stream(buf, params, [Event(0, 0, 0, 1, 1)])
    raw = buf.getvalue()
    p = tmp_path / "x.adder"
    p.write_bytes(raw[:10])  # inside the header
    with pytest.raises(es.TruncatedStreamError):
        es.read_stream(p)
    p.write_bytes(raw[:-4])  # inside an event record
    with pytest.raises(es.TruncatedStreamError):
        es.read_stream(p)


def test_out_of_plane_events_rejected():
    params = sample_params()
    buf = io.BytesIO()
    es.write_stream(buf, params, [Event(200, 0, 0, 1, 1)])
    buf.seek(0)
    with pytest.raises(es.StreamFormatError):
        es.read_stream(buf)


def test_error_types_share_a_base():
    assert issubclass(es.BadMagicError, es.StreamFormatError)
    assert issubclass(es.BadVersionError, es.StreamFormatError)
    assert issubclass(es.TruncatedStreamError, es.StreamFormatError)


def test_sort_events_is_time_major():
    arr = es.events_to_array(
        [Event(5, 0, 0, 1, 50), Event(1, 0, 0, 1, 10), Event(0, 1, 0, 1, 10)], 1)
    s = es.sort_events(arr)
    assert [int(r["t"]) for r in s] == [10, 10, 50]
    assert [int(r["y"]) for r in s] == [0, 1, 0]


class TestInfo:
    def test_counts_and_duration(self):
        params = sample_params()
        events = [Event(0, 0, 0, 7, 255), Event(0, 0, 0, 7, 510),
                  Event(1, 0, 0, D_ZERO, 7650)]
        info = es.stream_info(params, es.events_to_array(events, 1))
        assert info["event_count"] == 3
        assert info["duration_ticks"] == 7650
        assert info["duration_seconds"] == pytest.approx(1.0)
        assert info["events_per_second"] == pytest.approx(3.0)
        assert info["zero_markers"] == 1
        assert info["fillers"] == 0

    def test_dynamic_range_from_per_pixel_spans(self):
        # Pixel A: 2**7 over 255 ticks -> 128 per frame interval.
        # Pixel B: 2**7 over 2550 ticks -> 12.8 per frame interval.
        params = sample_params()
        events = [Event(0, 0, 0, 7, 255), Event(1, 0, 0, 7, 2550)]
        info = es.stream_info(params, es.events_to_array(events, 1))
        assert info["dynamic_range_stops"] == pytest.approx(np.log2(10.0))

    def test_filler_inherits_previous_rate(self):
        params = sample_params()
        arr = es.events_to_array(
            [Event(0, 0, 0, 7, 255), Event(0, 0, 0, D_FILLER, 510)], 1)
        vals = es.implied_intensities(params, arr)
        assert vals[0] == pytest.approx(128.0)
        assert vals[1] == pytest.approx(128.0)

    def test_empty_stream(self):
        info = es.stream_info(sample_params(), es.empty_events(1))
        assert info["event_count"] == 0
        assert info["dynamic_range_stops"] is None
