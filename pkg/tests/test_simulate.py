"""Sensor simulator: integration, decimation control, foveation."""

import numpy as np
import pytest

from eventforge.model import D_ZERO
from eventforge.reconstruct import decode_accurate
from eventforge.simulate import (
    ROI_INSIDE_R,
    AsintSimulator,
    SimConfig,
    adjust_aggressive,
    adjust_self,
    neighbourhood,
    roi_factor_map,
    run_sim,
    stable_bits,
    throttle_down,
    run_sim as _run,
)


def _static(value, w=8, h=6, n=4, dtype=np.uint16):
    return np.full((n, h, w), value, dtype)


class TestIntegration:
    def test_exact_division_one_event_per_frame(self):
        # 256 photons per interval at D=8: saturation exactly at each
        # frame boundary.
        cfg = SimConfig(mode="constant", dt_ref=512, dt_max=4096, d_start=8)
        params, stream, stats = run_sim(_static(256, n=5), cfg)
        per_pixel = stream[(stream["x"] == 0) & (stream["y"] == 0)]
        assert list(per_pixel["t"]) == [512, 1024, 1536, 2048, 2560]
        assert set(per_pixel["d"]) == {8}
        assert stats["empty_events"] == 0
        # Identical consecutive events collapse into one repeat record.
        side = stats["sidecar"]
        rec = side[(side["x"] == 0) & (side["y"] == 0)]
        assert len(rec) == 1
        assert rec[0]["count"] == 4 and rec[0]["dt"] == 512

    def test_fractional_crossings(self):
        # 512 photons per 512-tick interval at D=8: crossings at +256.
        cfg = SimConfig(mode="constant", dt_ref=512, dt_max=4096, d_start=8)
        params, stream, _ = run_sim(_static(512, w=2, h=1, n=2), cfg)
        px = stream[(stream["x"] == 0) & (stream["y"] == 0)]
        assert list(px["t"]) == [256, 512, 768, 1024]

    def test_dark_pixel_emits_zero_markers(self):
        cfg = SimConfig(mode="constant", dt_ref=100, dt_max=250, d_start=8)
        params, stream, stats = run_sim(_static(0, w=1, h=1, n=10), cfg)
        assert set(stream["d"]) == {D_ZERO}
        assert list(stream["t"]) == [250, 500, 750, 1000]
        assert stats["empty_events"] == 4

    def test_photon_conservation_constant_mode(self):
        rng = np.random.default_rng(17)
        frames = rng.integers(0, 2000, size=(6, 5, 7)).astype(np.uint16)
        cfg = SimConfig(mode="constant", dt_ref=64, dt_max=10**6, d_start=6)
        params, stream, stats = run_sim(frames, cfg)
        fired = (stream["d"] != D_ZERO).sum() * (1 << 6)
        assert fired + stats["residual_photons"] == frames.sum()

    def test_exact_reconstruction_on_multiples(self):
        rng = np.random.default_rng(3)
        vals = rng.choice([256, 512, 1024], size=(6, 8)).astype(np.uint16)
        frames = np.repeat(vals[None, :, :], 8, axis=0)
        cfg = SimConfig(mode="constant", dt_ref=512, dt_max=8192, d_start=8)
        params, stream, _ = run_sim(frames, cfg)
        decoded = decode_accurate(params, stream, n_frames=8, vmax=2000)
        assert (decoded == frames).all()

    def test_exact_reconstruction_across_level_change(self):
        frames = np.concatenate([_static(256, w=3, h=2, n=4),
                                 _static(512, w=3, h=2, n=4)])
        cfg = SimConfig(mode="constant", dt_ref=512, dt_max=8192, d_start=8)
        params, stream, _ = run_sim(frames, cfg)
        decoded = decode_accurate(params, stream, n_frames=8, vmax=2000)
        assert (decoded == frames).all()

    def test_dimension_and_dtype_validation(self):
        sim = AsintSimulator(4, 3, SimConfig())
        with pytest.raises(ValueError):
            sim.ingest_frame(np.zeros((4, 4), np.uint16))
        with pytest.raises(ValueError):
            sim.ingest_frame(np.zeros((3, 4), np.float32))

    def test_empty_frame_list(self):
        cfg = SimConfig()
        params, stream, stats = run_sim(np.zeros((0, 3, 4), np.uint16), cfg)
        assert len(stream) == 0
        assert stats["events"] == 0


class TestSelfAdjust:
    def test_stable_bits_metric(self):
        assert stable_bits(512, 512) == 32
        assert stable_bits(512, 513) == 32 - 1
        assert stable_bits(0, 1) == 31
        assert stable_bits(0xFFFFFFFF, 0) == 0

    def test_empty_event_throttle_formula(self):
        d, pred = throttle_down(16, 1200.0)
        assert d == 4
        assert pred == pytest.approx(100.0)  # divided by 16 - 4 = 12
        assert throttle_down(0, 50.0) == (0, 50.0)
        assert throttle_down(1, 50.0) == (0, 50.0)

    def test_promotion_and_demotion_steps(self):
        # Perfect prediction promotes and doubles.
        d, pred, s, direction = adjust_self(5, 64.0, 32, 64, False, 512)
        assert (d, pred, direction) == (6, 128.0, 1)
        # Promotion stops once the doubled prediction exceeds dt_ref.
        d, pred, s, direction = adjust_self(8, 400.0, 32, 400, False, 512)
        assert (d, direction) == (8, 0)
        # A stability drop demotes and halves.
        d, pred, s, direction = adjust_self(8, 512.0, 30, 100, False, 512)
        assert d == 7 and pred == 256.0 and direction == -1
        assert s == stable_bits(100, 512)

    def test_periodic_source_settles_at_one_two_events_per_interval(self):
        cfg = SimConfig(mode="self_adjust", dt_ref=512, dt_max=4096,
                        d_start=3)
        frames = _static(256, w=4, h=4, n=40)
        params, stream, stats = run_sim(frames, cfg)
        t = stream["t"].astype(np.int64)
        late = stream[t >= 30 * 512]
        rate = len(late) / (16 * 10)
        assert 0.5 <= rate <= 2.5, rate
        # And the early frames fired much faster than the settled rate.
        early = stream[t < 2 * 512]
        assert len(early) / (16 * 2) > 2 * rate

    def test_alternating_scene_bounded_oscillation(self):
        cfg = SimConfig(mode="self_adjust", dt_ref=64, dt_max=512,
                        d_start=6)
        frames = np.empty((60, 3, 3), np.uint16)
        frames[0::2] = 2000
        frames[1::2] = 30
        params, stream, stats = run_sim(frames, cfg)
        sim = AsintSimulator(3, 3, cfg)
        for f in frames:
            sim.ingest_frame(f)
        assert sim.d.max() <= 20
        assert stats["events"] > 0


class TestRadial:
    def test_neighbourhood_counts(self):
        assert len(neighbourhood(5, 5, 2, 20, 20)) == 25
        assert len(neighbourhood(5, 5, 1, 20, 20)) == 9
        assert len(neighbourhood(5, 5, 0, 20, 20)) == 1
        assert len(neighbourhood(0, 0, 2, 20, 20)) == 9  # clipped corner

    def test_zero_marker_throttles_neighbours(self):
        # Bright pixels (40000 photons, threshold 2^15) saturate inside
        # the deadline; only the starved centre fires a zero marker.
        cfg = SimConfig(mode="radial", dt_ref=100, dt_max=100,
                        d_start=15, throttle_radius=2)
        sim = AsintSimulator(7, 7, cfg)
        frame = np.full((7, 7), 40000, np.uint16)
        frame[3, 3] = 0  # centre pixel starves -> zero marker
        sim.ingest_frame(frame)
        d = sim.d.reshape(7, 7)
        assert (d[1:6, 1:6] == 3).all()      # floor(log2(15)) = 3
        assert (d[0, :] == 15).all() and (d[6, :] == 15).all()

    def test_fewer_zero_markers_than_plain_self_adjust(self):
        # A dim (not black) band sweeps across a bright scene.  A dim
        # pixel at a stale high D starves past the deadline, but a
        # pre-throttled one saturates in time — so warning neighbours
        # ahead of the edge avoids their first zero markers.
        w, h, n = 16, 6, 20
        frames = np.full((n, h, w), 500, np.uint16)
        for f in range(n):
            x = f % w
            frames[f, :, max(0, x - 1):x + 2] = 4
        base = dict(dt_ref=100, dt_max=300, d_start=9)
        _, _, stats_self = run_sim(frames, SimConfig(mode="self_adjust", **base))
        _, _, stats_rad = run_sim(
            frames, SimConfig(mode="radial", throttle_radius=2,
                              minor_radius=2, **base))
        assert stats_rad["empty_events"] < stats_self["empty_events"], \
            (stats_rad["empty_events"], stats_self["empty_events"])


class TestAggressive:
    def test_step_rules(self):
        assert adjust_aggressive(5, 100, 300, empty=False) == 6
        assert adjust_aggressive(5, 200, 300, empty=False) == 5
        assert adjust_aggressive(5, 0, 0, empty=True) == 4
        assert adjust_aggressive(0, 0, 0, empty=True) == 0

    def test_roi_factor_map(self):
        r = roi_factor_map(20, 10, (8, 4, 4, 3), r_max=8, falloff=2)
        assert (r[4:7, 8:12] == ROI_INSIDE_R).all()
        assert r[4, 12] == 8      # adjacent ring: distance 1
        assert r[4, 13] == 7      # distance 2 -> 8 - 1
        assert r[0, 0] < r[3, 7]  # farther means smaller
        assert r.min() >= 1
        assert (roi_factor_map(6, 6, None, 8, 2) == 1).all()

    def test_foveation_rate_gap(self):
        # Static textured scene, fixed ROI: inside keeps firing fast,
        # outside coarsens until it pushes against the deadline.
        rng = np.random.default_rng(11)
        w, h, n = 24, 18, 40
        scene = rng.integers(500, 4000, size=(h, w)).astype(np.uint16)
        frames = np.repeat(scene[None], n, axis=0)
        roi = (9, 6, 6, 6)
        cfg = SimConfig(mode="aggressive", dt_ref=50, dt_max=2500,
                        d_start=4, roi_r_max=8, roi_falloff=4)
        params, stream, stats = run_sim(frames, cfg, roi_track=[roi])
        t = stream["t"].astype(np.int64)
        late = stream[t >= (n // 2) * 50]
        x, y = late["x"].astype(int), late["y"].astype(int)
        inside = (x >= 9) & (x < 15) & (y >= 6) & (y < 12)
        n_in = int(inside.sum())
        n_out = len(late) - n_in
        area_in = 36
        area_out = w * h - area_in
        rate_in = n_in / area_in
        rate_out = n_out / area_out
        assert rate_in >= 5 * rate_out, (rate_in, rate_out)

    def test_aggressive_fewer_events_than_constant(self):
        rng = np.random.default_rng(2)
        scene = rng.integers(500, 4000, size=(10, 12)).astype(np.uint16)
        frames = np.repeat(scene[None], 30, axis=0)
        base = dict(dt_ref=50, dt_max=2500, d_start=4)
        _, s_const, _ = run_sim(frames, SimConfig(mode="constant", **base))
        _, s_aggr, _ = run_sim(frames, SimConfig(mode="aggressive", **base))
        assert len(s_aggr) < len(s_const)


class TestConfig:
    def test_mode_validation(self):
        with pytest.raises(ValueError):
            SimConfig(mode="???")
        with pytest.raises(ValueError):
            SimConfig(dt_ref=0)
        with pytest.raises(ValueError):
            SimConfig(dt_ref=100, dt_max=50)

    def test_stream_io_compatibility(self):
        import io
        from eventforge.stream import read_stream, write_stream
        cfg = SimConfig(mode="constant", dt_ref=512, dt_max=4096, d_start=8)
        params, stream, _ = run_sim(_static(256, n=3), cfg)
        buf = io.BytesIO()
        write_stream(buf, params, stream)
        buf.seek(0)
        params2, events2 = read_stream(buf)
        assert params2.source_kind == "simulated"
        assert np.array_equal(events2, stream)
