"""Tuning-service behaviour: engine stepping, the wire protocol, and
multi-client broadcast, using starlette's test client."""

import json
import time

import numpy as np
import pytest
from starlette.testclient import TestClient

from eventforge.model import PlaneParams
from eventforge.service import (
    KIND_CONTROL,
    KIND_METRIC,
    KIND_PREVIEW,
    PlaybackEngine,
    create_app,
)
from eventforge.stream import write_stream
from eventforge.synth import moving_squares, noisy_static
from eventforge.transcode import transcode_frames

TICK_KEYS = {"t", "unit", "mse", "psnr", "ssim",
             "source_bps", "adder_bps", "events_per_s"}


def make_engine(frames=None, dt_max_units=2, crf=0):
    if frames is None:
        frames = moving_squares(24, 20, 12, seed=1)
    h, w = frames.shape[1:3]
    params = PlaneParams(width=w, height=h, channels=1, dt_s=255 * 30,
                         dt_ref=255, dt_max=255 * dt_max_units,
                         source_kind="framed", pixel_mode="collapse")
    return PlaybackEngine(frames, params, crf=crf, tick_interval=0.001)


class TestEngineStep:
    def test_tick_shape_and_png(self):
        eng = make_engine()
        tick, png = eng.step()
        assert TICK_KEYS <= set(tick)
        assert png[:8] == b"\x89PNG\r\n\x1a\n"
        assert tick["unit"] == 0 and eng.unit == 1

    def test_preview_converges_to_source(self):
        frames = np.full((10, 16, 16), 120, np.uint8)
        eng = make_engine(frames)
        psnrs = [eng.step()[0]["psnr"] for _ in range(6)]
        # Once deadline events arrive the canvas matches the flat source.
        assert psnrs[-1] > psnrs[0]
        assert psnrs[-1] > 40

    def test_mailbox_applies_at_next_unit(self):
        eng = make_engine()
        eng.step()
        at = eng.post({"set_crf": 9})
        assert at == eng.unit + 1
        assert eng.crf == 0  # not yet
        eng.step()
        assert eng.crf == 9
        assert eng.sens.m == 24

    def test_pause_and_resume(self):
        eng = make_engine()
        eng.step()
        eng.post({"pause": True})
        assert eng.step() is None
        assert eng.step() is None
        eng.post({"pause": False})
        assert eng.step() is not None

    def test_seek_adu_unit_math(self):
        eng = make_engine(dt_max_units=3)
        eng.post({"seek_adu": 2})
        eng.step()
        # dt_max spans 3 units; coded unit 2 starts at input unit 6.
        assert eng.unit == 7  # 6 plus the step just taken

    def test_set_params_rebuilds_plane(self):
        eng = make_engine()
        eng.post({"set_params": {"dt_max": 255 * 8, "m": 5}})
        eng.step()
        assert eng.params.dt_max == 255 * 8
        assert eng.sens.m == 5

    def test_views_render_uint8_planes(self):
        eng = make_engine()
        for _ in range(4):
            eng.step()
        for view in ("intensity", "d", "dt"):
            eng.post({"toggle_view": view})
            tick, png = eng.step()
            assert png[:4] == b"\x89PNG"

    def test_features_tick_lists_corners(self):
        frames = np.full((8, 24, 24), 200, np.uint8)
        frames[:, 10:, 10:] = 40
        eng = make_engine(frames)
        eng.post({"toggle_features": True})
        eng.step()
        tick, _ = eng.step()
        assert "features" in tick
        assert [10, 10] in tick["features"]

    def test_crf_change_lowers_event_rate(self):
        frames = noisy_static(24, 24, 40, seed=3)
        eng = make_engine(frames, dt_max_units=2)
        for _ in range(6):
            eng.step()
        lossless = np.mean([eng.step()[0]["events_per_s"] for _ in range(4)])
        eng.post({"set_crf": 9})
        for _ in range(6):  # let the rebuilt pixels re-baseline
            eng.step()
        lossy = np.mean([eng.step()[0]["events_per_s"] for _ in range(4)])
        assert lossy < lossless / 2

    def test_validation_rejects_bad_messages(self):
        eng = make_engine()
        for bad in ({"set_crf": 15}, {"set_crf": "high"},
                    {"toggle_view": "z"}, {"seek_adu": -1},
                    {"bogus": 1}, {"set_crf": 1, "pause": True}):
            with pytest.raises(ValueError):
                eng.validate_message(bad)
        for ok in ({"set_crf": 4}, {"pause": True},
                   {"toggle_features": False}, {"seek_adu": 0},
                   {"toggle_view": "dt"},
                   {"set_params": {"dt_ref": 255}}):
            eng.validate_message(ok)


def recv_frames(ws, kind, n=1, budget=400):
    """Collect n frames of one kind, skipping others."""
    got = []
    for _ in range(budget):
        data = ws.receive_bytes()
        if data[0] == kind:
            got.append(data[1:])
            if len(got) == n:
                return got
    raise AssertionError(f"kind {kind} frame not seen in {budget} messages")


@pytest.fixture
def app_path(tmp_path):
    frames = noisy_static(20, 16, 24, seed=4)
    params = PlaneParams(width=20, height=16, channels=1, dt_s=255 * 30,
                         dt_ref=255, dt_max=255 * 2, source_kind="framed",
                         pixel_mode="collapse")
    events = transcode_frames(frames, params)
    path = tmp_path / "feed.adder"
    write_stream(str(path), params, events)
    return str(path)


class TestWire:
    def test_hello_then_ticks_and_previews(self, app_path):
        app = create_app(app_path, tick_interval=0.001)
        with TestClient(app) as client:
            with client.websocket_connect("/ws") as ws:
                first = ws.receive_bytes()
                assert first[0] == KIND_CONTROL
                hello = json.loads(first[1:])
                assert "hello" in hello
                assert hello["hello"]["width"] == 20
                tick = json.loads(recv_frames(ws, KIND_METRIC)[0])
                assert TICK_KEYS <= set(tick)
                png = recv_frames(ws, KIND_PREVIEW)[0]
                assert png[:4] == b"\x89PNG"

    def test_ack_within_one_unit_and_effect(self, app_path):
        app = create_app(app_path, tick_interval=0.001)
        with TestClient(app) as client:
            with client.websocket_connect("/ws") as ws:
                ws.receive_bytes()  # hello
                before = json.loads(recv_frames(ws, KIND_METRIC)[0])
                ws.send_text(json.dumps({"set_crf": 9}))
                # The ack must arrive promptly, interleaved with at most
                # a handful of already-queued data frames.
                ack = None
                for _ in range(64):
                    data = ws.receive_bytes()
                    if data[0] == KIND_CONTROL:
                        ack = json.loads(data[1:])
                        break
                assert ack and ack["ack"] == {"set_crf": 9}
                assert ack["applies_at_unit"] > before["unit"]

    def test_malformed_control_keeps_session(self, app_path):
        app = create_app(app_path, tick_interval=0.001)
        with TestClient(app) as client:
            with client.websocket_connect("/ws") as ws:
                ws.receive_bytes()
                ws.send_text("this is not json")
                err = None
                for _ in range(64):
                    data = ws.receive_bytes()
                    if data[0] == KIND_CONTROL:
                        err = json.loads(data[1:])
                        break
                assert err and "error" in err
                ws.send_text(json.dumps({"set_crf": 15}))
                err2 = None
                for _ in range(64):
                    data = ws.receive_bytes()
                    if data[0] == KIND_CONTROL:
                        err2 = json.loads(data[1:])
                        break
                assert err2 and "error" in err2
                # Session still streams data afterwards.
                assert recv_frames(ws, KIND_METRIC)

    def test_two_clients_identical_ticks(self, app_path):
        app = create_app(app_path, tick_interval=0.001)
        with TestClient(app) as client:
            with client.websocket_connect("/ws") as a, \
                    client.websocket_connect("/ws") as b:
                a.receive_bytes()
                b.receive_bytes()
                ticks_a = {t["unit"]: t for t in
                           (json.loads(x) for x in
                            recv_frames(a, KIND_METRIC, n=8))}
                ticks_b = {t["unit"]: t for t in
                           (json.loads(x) for x in
                            recv_frames(b, KIND_METRIC, n=8))}
                shared = set(ticks_a) & set(ticks_b)
                assert shared, "clients saw disjoint windows"
                for u in shared:
                    assert ticks_a[u] == ticks_b[u]

    def test_pause_stops_the_loop(self, app_path):
        app = create_app(app_path, tick_interval=0.001)
        with TestClient(app) as client:
            engine = app.state.engine
            with client.websocket_connect("/ws") as ws:
                ws.receive_bytes()
                recv_frames(ws, KIND_METRIC)
                ws.send_text(json.dumps({"pause": True}))
                for _ in range(64):
                    if ws.receive_bytes()[0] == KIND_CONTROL:
                        break
                time.sleep(0.05)
                frozen = engine.unit
                time.sleep(0.05)
                assert engine.unit == frozen

    def test_index_serves_placeholder(self, app_path):
        app = create_app(app_path, tick_interval=0.001)
        with TestClient(app) as client:
            r = client.get("/")
            assert r.status_code == 200
            assert "tuner" in r.text

    def test_index_serves_bundle_when_present(self, app_path, tmp_path):
        ui = tmp_path / "dist"
        ui.mkdir()
        (ui / "index.html").write_text("<html><body>dash</body></html>")
        app = create_app(app_path, tick_interval=0.001, ui_dir=str(ui))
        with TestClient(app) as client:
            assert "dash" in client.get("/").text


class TestSourceLoading:
    def test_npy_source(self, tmp_path):
        frames = moving_squares(16, 12, 6, seed=5)
        path = tmp_path / "clip.npy"
        np.save(path, frames)
        app = create_app(str(path), tick_interval=0.001)
        assert app.state.engine.n_units == 6

    def test_unsupported_source(self):
        with pytest.raises(ValueError):
            create_app("input.txt")
