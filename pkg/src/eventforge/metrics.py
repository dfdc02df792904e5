"""Frame quality metrics and rolling bitrate accounting.

Quality is measured per frame against a reference:

* ``mse`` — mean squared error over all samples (channels included).
* ``psnr`` — 10*log10(peak^2 / MSE) in dB.  Identical frames would be
  infinite; we report a fixed cap of 100 dB instead so the value stays
  plottable and JSON-serialisable.
* ``ssim`` — structural similarity with uniform 8x8 windows and the
  standard constants K1=0.01, K2=0.03 on a 255-level scale.  Windowed
  means/variances come from ``scipy.ndimage.uniform_filter``; variance
  is the population form (E[x^2] - E[x]^2).  The mean of the window map
  is returned, and lies in [-1, 1].

Bitrate bookkeeping for live tuning uses :class:`RateMeter`: a sliding
window (in stream ticks) of byte/event counts for the source and for
the transcoded representation, yielding events/s and bytes/s given the
tick rate.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 8
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check_pair(reference: np.ndarray, test: np.ndarray) -> None:
    if reference.shape != test.shape:
        raise ValueError(
            f"frame shapes differ: {reference.shape} vs {test.shape}")
    if reference.ndim not in (2, 3):
        raise ValueError(f"expected 2-D or 3-D frames, got {reference.ndim}-D")


def mse(reference: np.ndarray, test: np.ndarray) -> float:
    _check_pair(reference, test)
    a = reference.astype(np.float64)
    b = test.astype(np.float64)
    return float(np.mean((a - b) ** 2))


def psnr(reference: np.ndarray, test: np.ndarray, peak: float = 255.0) -> float:
    err = mse(reference, test)
    if err <= 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(peak * peak / err))


def _ssim_plane(a: np.ndarray, b: np.ndarray, peak: float) -> float:
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    size = SSIM_WINDOW
    mu_a = uniform_filter(a, size)
    mu_b = uniform_filter(b, size)
    var_a = uniform_filter(a * a, size) - mu_a * mu_a
    var_b = uniform_filter(b * b, size) - mu_b * mu_b
    cov = uniform_filter(a * b, size) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    smap = num / den
    # Average only windows fully inside the image; the filter's window
    # for output i spans [i - size//2, i + size//2 - 1], so trim size//2
    # leading and size//2 - 1 trailing rows/columns.  Images smaller
    # than one window keep the whole (edge-padded) map.
    lo, hi = size // 2, size // 2 - 1
    if min(smap.shape) > lo + hi:
        smap = smap[lo:smap.shape[0] - hi, lo:smap.shape[1] - hi]
    return float(np.mean(smap))


def ssim(reference: np.ndarray, test: np.ndarray, peak: float = 255.0) -> float:
    _check_pair(reference, test)
    a = reference.astype(np.float64)
    b = test.astype(np.float64)
    if a.ndim == 2:
        return _ssim_plane(a, b, peak)
    return float(np.mean([_ssim_plane(a[..., c], b[..., c], peak)
                          for c in range(a.shape[-1])]))


@dataclass(frozen=True)
class FrameMetrics:
    mse: float
    psnr: float
    ssim: float


def compute_metrics(reference: np.ndarray, test: np.ndarray,
                    peak: float = 255.0) -> FrameMetrics:
    """MSE / PSNR / SSIM for one frame pair of identical shape."""
    _check_pair(reference, test)
    err = mse(reference, test)
    if err <= 0.0:
        db = PSNR_CAP_DB
    else:
        db = min(PSNR_CAP_DB, 10.0 * math.log10(peak * peak / err))
    return FrameMetrics(mse=err, psnr=db, ssim=ssim(reference, test, peak))


@dataclass
class MetricsReport:
    """Per-frame quality plus stream-level rate summary."""

    frames: list[FrameMetrics] = field(default_factory=list)
    source_bytes: int = 0
    stream_bytes: int = 0
    stream_events: int = 0
    duration_ticks: int = 0
    ticks_per_second: float = 1.0

    def add_frame(self, reference: np.ndarray, test: np.ndarray,
                  peak: float = 255.0) -> FrameMetrics:
        fm = compute_metrics(reference, test, peak)
        self.frames.append(fm)
        return fm

    @property
    def mean_mse(self) -> float:
        return float(np.mean([f.mse for f in self.frames])) if self.frames else 0.0

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([f.psnr for f in self.frames])) if self.frames else PSNR_CAP_DB

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([f.ssim for f in self.frames])) if self.frames else 1.0

    def _seconds(self) -> float:
        if self.duration_ticks <= 0 or self.ticks_per_second <= 0:
            return 0.0
        return self.duration_ticks / self.ticks_per_second

    @property
    def source_bps(self) -> float:
        s = self._seconds()
        return self.source_bytes * 8.0 / s if s else 0.0

    @property
    def stream_bps(self) -> float:
        s = self._seconds()
        return self.stream_bytes * 8.0 / s if s else 0.0

    @property
    def events_per_s(self) -> float:
        s = self._seconds()
        return self.stream_events / s if s else 0.0

    def summary(self) -> dict:
        return {
            "frames": len(self.frames),
            "mse": self.mean_mse,
            "psnr": self.mean_psnr,
            "ssim": self.mean_ssim,
            "source_bps": self.source_bps,
            "adder_bps": self.stream_bps,
            "events_per_s": self.events_per_s,
        }


class RateMeter:
    """Sliding-window byte/event rates over stream time.

    Samples are (tick, source_bytes, stream_bytes, events); rates are
    computed over the most recent ``window_ticks`` of stream time.
    """

    def __init__(self, window_ticks: float, ticks_per_second: float):
        if window_ticks <= 0 or ticks_per_second <= 0:
            raise ValueError("window_ticks and ticks_per_second must be > 0")
        self.window_ticks = float(window_ticks)
        self.ticks_per_second = float(ticks_per_second)
        self._samples: deque[tuple[float, int, int, int]] = deque()

    def add(self, tick: float, source_bytes: int, stream_bytes: int,
            events: int) -> None:
        self._samples.append((float(tick), int(source_bytes),
                              int(stream_bytes), int(events)))
        cutoff = float(tick) - self.window_ticks
        while self._samples and self._samples[0][0] <= cutoff:
            self._samples.popleft()

    def rates(self) -> dict:
        """Totals over the trailing window divided by its duration.

        Keys match the metric-tick wire format.  Early in a stream
        (before one full window has elapsed) this under-reports rather
        than extrapolating from a partial window.
        """
        seconds = self.window_ticks / self.ticks_per_second
        src = sum(s[1] for s in self._samples)
        out = sum(s[2] for s in self._samples)
        ev = sum(s[3] for s in self._samples)
        return {
            "source_bps": src * 8.0 / seconds,
            "adder_bps": out * 8.0 / seconds,
            "events_per_s": ev / seconds,
        }
