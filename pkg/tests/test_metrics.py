"""Quality-metric oracles: closed-form MSE/PSNR values, an SSIM scalar
oracle evaluated on constant-statistics images, and rate-meter windows."""

import math

import numpy as np
import pytest

from eventforge.metrics import (
    PSNR_CAP_DB,
    FrameMetrics,
    MetricsReport,
    RateMeter,
    compute_metrics,
    mse,
    psnr,
    ssim,
)


def checkerboard(h, w, a=0, b=255):
    img = np.full((h, w), a, np.uint8)
    yy, xx = np.mgrid[0:h, 0:w]
    img[(yy + xx) % 2 == 1] = b
    return img


class TestMse:
    def test_identical_is_zero(self):
        img = np.arange(64, dtype=np.uint8).reshape(8, 8)
        assert mse(img, img) == 0.0

    def test_plus_one_everywhere_is_one(self):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 254, (32, 32), dtype=np.uint8)
        assert mse(img, img + 1) == 1.0

    def test_hand_computed(self):
        a = np.array([[0, 0], [0, 0]], np.uint8)
        b = np.array([[1, 2], [3, 4]], np.uint8)
        # (1 + 4 + 9 + 16) / 4
        assert mse(a, b) == 7.5

    def test_unsigned_underflow_guarded(self):
        # 0 - 255 must square to 255^2, not wrap in uint8 arithmetic.
        a = np.zeros((4, 4), np.uint8)
        b = np.full((4, 4), 255, np.uint8)
        assert mse(a, b) == 255.0 ** 2

    def test_shape_mismatch_raises(self):
        with pytest.raises(ValueError):
            mse(np.zeros((4, 4)), np.zeros((4, 5)))


class TestPsnr:
    def test_identical_reports_cap(self):
        img = np.full((16, 16), 7, np.uint8)
        assert psnr(img, img) == PSNR_CAP_DB

    def test_plus_one_closed_form(self):
        # MSE 1 -> 10*log10(255^2) = 48.1308... dB
        rng = np.random.default_rng(1)
        img = rng.integers(0, 254, (32, 32), dtype=np.uint8)
        expected = 10.0 * math.log10(255.0 ** 2)
        assert psnr(img, img + 1) == pytest.approx(expected, abs=1e-9)
        assert psnr(img, img + 1) == pytest.approx(48.1308, abs=1e-3)

    def test_monotone_in_error(self):
        rng = np.random.default_rng(2)
        img = rng.integers(0, 200, (32, 32), dtype=np.uint8)
        assert psnr(img, img + 1) > psnr(img, img + 5) > psnr(img, img + 20)


class TestSsim:
    def test_identical_is_one(self):
        rng = np.random.default_rng(3)
        img = rng.integers(0, 255, (40, 40), dtype=np.uint8)
        assert ssim(img, img) == pytest.approx(1.0)

    def test_range(self):
        rng = np.random.default_rng(4)
        a = rng.integers(0, 255, (40, 40), dtype=np.uint8)
        b = rng.integers(0, 255, (40, 40), dtype=np.uint8)
        assert -1.0 <= ssim(a, b) <= 1.0

    def test_inverted_checkerboard_scalar_oracle(self):
        # Every 8x8 window of a checkerboard has mean 127.5 and variance
        # 127.5^2; the inverted image has the same moments with
        # covariance -var.  The SSIM formula then reduces to a single
        # scalar the test computes independently.
        img = checkerboard(40, 40).astype(np.float64)
        inv = 255.0 - img
        mu = 127.5
        var = 127.5 ** 2
        c1 = (0.01 * 255) ** 2
        c2 = (0.03 * 255) ** 2
        lum = (2 * mu * mu + c1) / (mu * mu + mu * mu + c1)
        cs = (2 * -var + c2) / (var + var + c2)
        expected = lum * cs
        got = ssim(img, inv)
        assert got == pytest.approx(expected, abs=1e-6)
        assert got < -0.95  # "near -1" on high-contrast content

    def test_blur_scores_below_noise_free_copy(self):
        from scipy.ndimage import uniform_filter
        rng = np.random.default_rng(5)
        img = rng.integers(0, 255, (64, 64)).astype(np.float64)
        blurred = uniform_filter(img, 5)
        assert ssim(img, blurred) < 0.9

    def test_color_frames_average_channels(self):
        rng = np.random.default_rng(6)
        img = rng.integers(0, 255, (32, 32, 3), dtype=np.uint8)
        assert ssim(img, img) == pytest.approx(1.0)
        per = [ssim(img[..., c], (img + 4)[..., c]) for c in range(3)]
        assert ssim(img, img + 4) == pytest.approx(np.mean(per))


class TestComputeMetrics:
    def test_bundle_matches_parts(self):
        rng = np.random.default_rng(7)
        a = rng.integers(0, 250, (32, 32), dtype=np.uint8)
        b = a + 3
        fm = compute_metrics(a, b)
        assert isinstance(fm, FrameMetrics)
        assert fm.mse == mse(a, b)
        assert fm.psnr == psnr(a, b)
        assert fm.ssim == ssim(a, b)

    def test_identical_bundle(self):
        img = np.zeros((16, 16), np.uint8)
        fm = compute_metrics(img, img)
        assert (fm.mse, fm.psnr, fm.ssim) == (0.0, PSNR_CAP_DB, 1.0)

    def test_mismatch_raises(self):
        with pytest.raises(ValueError):
            compute_metrics(np.zeros((4, 4)), np.zeros((5, 4)))


class TestReport:
    def test_accumulates_frames_and_rates(self):
        rng = np.random.default_rng(8)
        rep = MetricsReport(ticks_per_second=1000.0)
        for _ in range(3):
            img = rng.integers(0, 254, (16, 16), dtype=np.uint8)
            rep.add_frame(img, img + 1)
        rep.source_bytes = 4000
        rep.stream_bytes = 1000
        rep.stream_events = 500
        rep.duration_ticks = 2000  # 2 seconds
        assert len(rep.frames) == 3
        assert rep.mean_mse == pytest.approx(1.0)
        assert rep.source_bps == pytest.approx(4000 * 8 / 2.0)
        assert rep.stream_bps == pytest.approx(1000 * 8 / 2.0)
        assert rep.events_per_s == pytest.approx(250.0)
        s = rep.summary()
        assert s["frames"] == 3
        assert s["adder_bps"] == rep.stream_bps

    def test_empty_report_rates_are_zero(self):
        rep = MetricsReport()
        assert rep.source_bps == 0.0
        assert rep.events_per_s == 0.0


class TestRateMeter:
    def test_steady_state_exact(self):
        # One sample per tick, 240 bytes each, window 60 ticks at 30
        # ticks/s -> 240 * 60 bytes per 2 s.
        m = RateMeter(window_ticks=60, ticks_per_second=30)
        for t in range(1, 200):
            m.add(t, source_bytes=240, stream_bytes=60, events=12)
        r = m.rates()
        assert r["source_bps"] == pytest.approx(240 * 60 * 8 / 2.0)
        assert r["adder_bps"] == pytest.approx(60 * 60 * 8 / 2.0)
        assert r["events_per_s"] == pytest.approx(12 * 60 / 2.0)

    def test_old_samples_fall_out(self):
        m = RateMeter(window_ticks=10, ticks_per_second=1)
        m.add(0, 100, 0, 0)
        m.add(100, 0, 0, 0)  # pushes the first sample out
        assert m.rates()["source_bps"] == 0.0

    def test_rate_drop_visible_after_change(self):
        m = RateMeter(window_ticks=30, ticks_per_second=30)
        for t in range(60):
            m.add(t, 0, 1000, 100)
        high = m.rates()["adder_bps"]
        for t in range(60, 120):
            m.add(t, 0, 100, 10)
        low = m.rates()["adder_bps"]
        assert low < high / 5

    def test_validation(self):
        with pytest.raises(ValueError):
            RateMeter(0, 30)
        with pytest.raises(ValueError):
            RateMeter(10, 0)
