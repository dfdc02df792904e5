"""Event-native vision: corners, clusters, denoising, motion masks.

The corner detector exploits the representation's sparsity: only pixels
whose 16-pixel test circle saw an intensity change since the last batch
can change corner status, so only those are re-tested.  A dense
whole-frame tester with identical semantics lives alongside it as the
reference (and as the baseline the work saving is measured against).
"""

from __future__ import annotations

from collections import deque
from typing import Iterable, Optional

import numpy as np
from scipy import ndimage

from .model import PlaneParams

# 16-pixel Bresenham circle of radius 3, clockwise from 12 o'clock.
CIRCLE = [(0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
          (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2),
          (-1, -3)]

FAST_THRESHOLD = 10
FAST_N_CONTIG = 9


def _contig_table(n: int) -> np.ndarray:
    """For every 16-bit mask: does it hold >= n contiguous set bits on a ring?

    Doubling the mask linearises circular runs; AND-folding with a shifted
    copy k times leaves a bit set iff a run of length > k started there.
    """
    m = np.arange(1 << 16, dtype=np.uint64)
    doubled = m | (m << np.uint64(16))
    for _ in range(n - 1):
        doubled &= doubled >> np.uint64(1)
    return doubled != 0


_N9_TABLE: Optional[np.ndarray] = None


def _table() -> np.ndarray:
    global _N9_TABLE
    if _N9_TABLE is None:
        _N9_TABLE = _contig_table(FAST_N_CONTIG)
    return _N9_TABLE


def is_corner(img: np.ndarray, x: int, y: int,
              threshold: int = FAST_THRESHOLD) -> bool:
    """Segment test at one pixel (image bounds must allow the circle)."""
    h, w = img.shape
    if not (3 <= x < w - 3 and 3 <= y < h - 3):
        return False
    center = int(img[y, x])
    bright = 0
    dark = 0
    for i, (dx, dy) in enumerate(CIRCLE):
        v = int(img[y + dy, x + dx])
        if v > center + threshold:
            bright |= 1 << i
        elif v < center - threshold:
            dark |= 1 << i
    table = _table()
    return bool(table[bright] or table[dark])


def dense_fast(img: np.ndarray, threshold: int = FAST_THRESHOLD) \
        -> set[tuple[int, int]]:
    """Whole-frame corner scan (the reference the event path must match)."""
    h, w = img.shape
    center = img.astype(np.int16)
    bright = np.zeros((h, w), np.uint16)
    dark = np.zeros((h, w), np.uint16)
    for i, (dx, dy) in enumerate(CIRCLE):
        shifted = np.full((h, w), -10_000, np.int16)
        ys = slice(max(0, -dy), min(h, h - dy))
        xs = slice(max(0, -dx), min(w, w - dx))
        ys_src = slice(max(0, dy), min(h, h + dy))
        xs_src = slice(max(0, dx), min(w, w + dx))
        shifted[ys, xs] = center[ys_src, xs_src]
        bright |= (shifted > center + threshold).astype(np.uint16) << i
        dark |= ((shifted > -9_000) &
                 (shifted < center - threshold)).astype(np.uint16) << i
    table = _table()
    hits = table[bright] | table[dark]
    hits[:3, :] = hits[-3:, :] = False
    hits[:, :3] = hits[:, -3:] = False
    ys, xs = np.nonzero(hits)
    return {(int(x), int(y)) for x, y in zip(xs, ys)}


def dense_fast_test_count(shape: tuple[int, int]) -> int:
    h, w = shape
    return max(0, h - 6) * max(0, w - 6)


class EventCornerDetector:
    """Incremental corner tracking over reconstructed canvases.

    Between consecutive canvases of a decoded stream only event pixels
    differ, so only pixels whose test circle touches a changed pixel can
    change corner status; everything else keeps its cached verdict.
    ``tests_run`` counts segment tests, the quantity the per-frame dense
    scan is compared on.
    """

    # A change at (x, y) can affect any pixel whose circle contains it,
    # plus the pixel itself.
    AFFECT = sorted({(-dx, -dy) for dx, dy in CIRCLE} | {(0, 0)})

    def __init__(self, params: PlaneParams,
                 threshold: int = FAST_THRESHOLD):
        if params.channels != 1:
            raise ValueError("corner detection runs on mono streams")
        self.params = params
        self.threshold = threshold
        self.canvas = np.zeros((params.height, params.width), np.uint8)
        self.corners: set[tuple[int, int]] = set()
        self.tests_run = 0
        self._affect_struct = self._structure()

    @classmethod
    def _structure(cls) -> np.ndarray:
        st = np.zeros((7, 7), bool)
        for dx, dy in cls.AFFECT:
            st[dy + 3, dx + 3] = True
        return st

    def update_canvas(self, img: np.ndarray) -> set[tuple[int, int]]:
        """Adopt the next canvas; re-test only circle-affected pixels."""
        img = np.asarray(img, np.uint8)
        if img.shape != self.canvas.shape:
            raise ValueError("canvas shape mismatch")
        changed = img != self.canvas
        self.canvas = img.copy()
        if not changed.any():
            return set(self.corners)
        affected = ndimage.binary_dilation(changed,
                                           structure=self._affect_struct)
        affected[:3, :] = affected[-3:, :] = False
        affected[:, :3] = affected[:, -3:] = False
        ys, xs = np.nonzero(affected)
        for px, py in zip(xs, ys):
            px, py = int(px), int(py)
            self.tests_run += 1
            if is_corner(self.canvas, px, py, self.threshold):
                self.corners.add((px, py))
            else:
                self.corners.discard((px, py))
        return set(self.corners)


def track_corners(params: PlaneParams, events: np.ndarray,
                  n_frames: Optional[int] = None,
                  frame_ticks: Optional[int] = None,
                  threshold: int = FAST_THRESHOLD) \
        -> tuple[list[set[tuple[int, int]]], int]:
    """Corner sets for each reconstructed frame of an event stream.

    Returns (per-frame corner sets, total segment tests run).  Matches
    ``dense_fast`` on every reconstructed frame while testing only the
    neighbourhood of pixels the stream actually changed.
    """
    from .reconstruct import decode_accurate

    frames = decode_accurate(params, events, n_frames, frame_ticks)
    det = EventCornerDetector(params, threshold)
    out = [det.update_canvas(f) for f in frames]
    return out, det.tests_run


# ---------------------------------------------------------------------------
# density clustering


def dbscan(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Labels per point: 0.. for clusters, -1 for noise.

    ``min_pts`` counts the point itself.  Plain region-growing over the
    eps-neighbourhood graph; quadratic but dependable at event scales.
    """
    pts = np.asarray(points, np.float64)
    n = len(pts)
    labels = np.full(n, -2)  # -2 unvisited, -1 noise
    if n == 0:
        return labels
    eps2 = eps * eps

    def neighbours(i: int) -> np.ndarray:
        d2 = ((pts - pts[i]) ** 2).sum(axis=1)
        return np.nonzero(d2 <= eps2)[0]

    cluster = 0
    for i in range(n):
        if labels[i] != -2:
            continue
        nb = neighbours(i)
        if len(nb) < min_pts:
            labels[i] = -1
            continue
        labels[i] = cluster
        queue = deque(nb)
        while queue:
            j = int(queue.popleft())
            if labels[j] == -1:
                labels[j] = cluster
            if labels[j] != -2:
                continue
            labels[j] = cluster
            nb_j = neighbours(j)
            if len(nb_j) >= min_pts:
                queue.extend(nb_j)
        cluster += 1
    return labels


def cluster_events(events: np.ndarray, eps: float = 3.0, min_pts: int = 5,
                   time_scale: Optional[float] = None) -> np.ndarray:
    """DBSCAN over event coordinates, optionally folding in scaled time."""
    cols = [events["x"].astype(np.float64), events["y"].astype(np.float64)]
    if time_scale is not None:
        cols.append(events["t"].astype(np.float64) * time_scale)
    return dbscan(np.stack(cols, axis=1), eps, min_pts)


# ---------------------------------------------------------------------------
# polarity-stream denoising


def filter_dvs(dvs: np.ndarray, *, window: int, support_radius: int = 1) \
        -> np.ndarray:
    """Background-activity filter: keep events with a recent neighbour.

    An event survives when any pixel within Chebyshev ``support_radius``
    fired within ``window`` ticks before it.  Isolated noise has no such
    support and is dropped.
    """
    if len(dvs) == 0:
        return dvs
    w = int(dvs["x"].max()) + 2
    h = int(dvs["y"].max()) + 2
    last_t = np.full((h + 2 * support_radius, w + 2 * support_radius),
                     -10 * window, np.int64)
    keep = np.zeros(len(dvs), bool)
    order = np.argsort(dvs["t"], kind="stable")
    r = support_radius
    for idx in order:
        rec = dvs[idx]
        x, y, t = int(rec["x"]) + r, int(rec["y"]) + r, int(rec["t"])
        region = last_t[y - r:y + r + 1, x - r:x + r + 1]
        keep[idx] = bool((region >= t - window).any())
        last_t[y, x] = t
    return dvs[keep]


# ---------------------------------------------------------------------------
# motion segmentation


def segment_motion(params: PlaneParams, events: np.ndarray,
                   *, window_ticks: Optional[int] = None,
                   min_events: int = 3) -> list[dict]:
    """Per time window: a closed activity mask plus labelled regions.

    Pixels firing more than ``min_events - 1`` times inside the window
    count as moving (stable pixels coalesce to far fewer events); the
    mask is tidied with a 3x3 binary closing and split into connected
    components.
    """
    wt = window_ticks or params.dt_ref
    out: list[dict] = []
    if len(events) == 0:
        return out
    t = events["t"].astype(np.int64)
    n_windows = int(t.max() // wt) + 1
    for k in range(n_windows):
        sel = events[(t >= k * wt) & (t < (k + 1) * wt)]
        counts = np.zeros((params.height, params.width), np.int32)
        np.add.at(counts, (sel["y"].astype(int), sel["x"].astype(int)), 1)
        mask = counts >= min_events
        mask = ndimage.binary_closing(mask, structure=np.ones((3, 3)))
        labels, n = ndimage.label(mask)
        regions = []
        for lab in range(1, n + 1):
            ys, xs = np.nonzero(labels == lab)
            regions.append({
                "bbox": (int(xs.min()), int(ys.min()),
                         int(xs.max()) + 1, int(ys.max()) + 1),
                "size": int(len(xs)),
                "centroid": (float(xs.mean()), float(ys.mean())),
            })
        out.append({"window": (k * wt, (k + 1) * wt), "mask": mask,
                    "regions": regions})
    return out


def corner_mask(params: PlaneParams, corners: Iterable[tuple[int, int]],
                radius: int) -> np.ndarray:
    """Boolean plane mask covering a Chebyshev ball around each corner."""
    mask = np.zeros((params.height, params.width), bool)
    for x, y in corners:
        x0, x1 = max(0, x - radius), min(params.width, x + radius + 1)
        y0, y1 = max(0, y - radius), min(params.height, y + radius + 1)
        mask[y0:y1, x0:x1] = True
    return mask
