"""Deterministic synthetic inputs for tests, demos, and benchmarks.

Frame generators return uint8 arrays shaped (frames, height, width) or
(frames, height, width, 3).  Pixel values stay >= 2 so every pixel's
intensity is observable within one deadline window (a value of 0 or 1 can
legitimately stay silent far longer).
"""

from __future__ import annotations

import numpy as np

DVS_DTYPE = np.dtype([("x", "<u2"), ("y", "<u2"), ("p", "i1"), ("t", "<u4")])


def _rng(seed):
    return np.random.default_rng(seed)


def static_noise(width: int, height: int, frames: int, *, seed: int = 0,
                 lo: int = 2, hi: int = 255, channels: int = 1) -> np.ndarray:
    """Independent uniform noise per frame: worst case for coding."""
    shape = (frames, height, width) if channels == 1 else (frames, height, width, 3)
    return _rng(seed).integers(lo, hi + 1, size=shape, dtype=np.uint8)


def noisy_static(width: int, height: int, frames: int, *, seed: int = 0,
                 amplitude: int = 6, channels: int = 1) -> np.ndarray:
    """A fixed scene plus small independent per-frame noise.

    The base image is a smooth random field in [40, 215]; each frame adds
    uniform noise in [-amplitude, amplitude].  Contrast thresholds above
    roughly 2*amplitude suppress almost all of the noise events.
    """
    rng = _rng(seed)
    shape = (height, width) if channels == 1 else (height, width, 3)
    base = rng.integers(40, 216, size=shape).astype(np.int16)
    # Smooth so neighbouring pixels are correlated like a real scene.
    for axis in (0, 1):
        base = (base + np.roll(base, 1, axis) + np.roll(base, -1, axis)) // 3
    noise = rng.integers(-amplitude, amplitude + 1,
                         size=(frames, *shape)).astype(np.int16)
    return np.clip(base[None] + noise, 2, 255).astype(np.uint8)


def moving_squares(width: int, height: int, frames: int, *, seed: int = 0,
                   n_squares: int = 3, channels: int = 1,
                   background: int = 64) -> np.ndarray:
    """Bright squares bouncing over a flat background."""
    rng = _rng(seed)
    size = max(2, min(width, height) // 8)
    pos = rng.uniform(0, [width - size, height - size], size=(n_squares, 2))
    vel = rng.uniform(0.5, 2.5, size=(n_squares, 2)) * rng.choice([-1, 1], (n_squares, 2))
    shades = rng.integers(160, 256, size=n_squares)
    if channels == 1:
        out = np.full((frames, height, width), background, np.uint8)
    else:
        out = np.full((frames, height, width, 3), background, np.uint8)
        tints = rng.uniform(0.6, 1.0, size=(n_squares, 3))
    for f in range(frames):
        for i in range(n_squares):
            x, y = pos[i]
            xi, yi = int(round(x)), int(round(y))
            if channels == 1:
                out[f, yi:yi + size, xi:xi + size] = shades[i]
            else:
                out[f, yi:yi + size, xi:xi + size] = \
                    (shades[i] * tints[i]).astype(np.uint8)
        pos += vel
        for axis, limit in ((0, width - size), (1, height - size)):
            over = pos[:, axis] > limit
            under = pos[:, axis] < 0
            vel[over | under, axis] *= -1
            pos[over, axis] = 2 * limit - pos[over, axis]
            pos[under, axis] = -pos[under, axis]
    return out


def surveillance(width: int, height: int, frames: int, *, seed: int = 0,
                 flicker: int = 1) -> np.ndarray:
    """Mostly-static textured scene with one walker and faint sensor flicker.

    The background texture never moves; only a small bright block crosses
    the frame.  ``flicker`` adds a +/-1 dither on a third of the pixels so
    contrast thresholds have something to suppress.
    """
    rng = _rng(seed)
    base = rng.integers(20, 140, size=(height, width)).astype(np.int16)
    # Smooth the texture a little so gradients look like a real scene.
    base = (base + np.roll(base, 1, 0) + np.roll(base, 1, 1)) // 3
    out = np.empty((frames, height, width), np.uint8)
    size = max(2, height // 6)
    speed = max(1.0, width / max(frames, 1) * 0.9)
    flicker_mask = rng.random((height, width)) < (1 / 3)
    for f in range(frames):
        img = base.copy()
        x = int(2 + f * speed) % max(1, width - size)
        y = (height - size) // 2
        img[y:y + size, x:x + size] = 220
        if flicker:
            img[flicker_mask] += rng.integers(-flicker, flicker + 1,
                                              size=int(flicker_mask.sum()),
                                              dtype=np.int16)
        out[f] = np.clip(img, 2, 255).astype(np.uint8)
    return out


def gradient_ramp(width: int, height: int, frames: int, *, step: int = 8) -> np.ndarray:
    """A static horizontal ramp that brightens a step per frame (wraps)."""
    col = np.linspace(2, 200, width).astype(np.int32)
    frame0 = np.tile(col, (height, 1))
    out = np.empty((frames, height, width), np.uint8)
    for f in range(frames):
        out[f] = np.clip((frame0 + f * step) % 254 + 2, 2, 255).astype(np.uint8)
    return out


def walker_positions(width: int, height: int, frames: int, *, seed: int = 0,
                     size: int | None = None) -> list[tuple[int, int, int, int]]:
    """Bounding boxes (x0, y0, x1, y1) of the surveillance walker per frame."""
    size = size or max(2, height // 6)
    speed = max(1.0, width / max(frames, 1) * 0.9)
    boxes = []
    for f in range(frames):
        x = int(2 + f * speed) % max(1, width - size)
        y = (height - size) // 2
        boxes.append((x, y, x + size, y + size))
    return boxes


# ---------------------------------------------------------------------------
# DVS (polarity / change) streams


def sweeping_bar_dvs(width: int, height: int, *, bar_width: int = 4,
                     col_ticks: int = 2000, start_t: int = 1000) -> np.ndarray:
    """A bright vertical bar sweeping left to right.

    Every pixel fires +1 when the bar's leading edge arrives and -1 when
    the trailing edge leaves, ``bar_width * col_ticks`` later.  Timestamps
    are exact ticks (microseconds at the usual DVS clock).
    """
    records = []
    for col in range(width):
        t_on = start_t + col * col_ticks
        t_off = t_on + bar_width * col_ticks
        for y in range(height):
            records.append((col, y, 1, t_on))
            records.append((col, y, -1, t_off))
    arr = np.array(records, dtype=DVS_DTYPE)
    return arr[np.argsort(arr["t"], kind="stable")]


def random_dvs(width: int, height: int, n_events: int, duration: int,
               *, seed: int = 0, min_gap: int = 500) -> np.ndarray:
    """Random polarity events with a minimum per-pixel spacing."""
    rng = _rng(seed)
    records = []
    taken: dict[tuple[int, int], list[int]] = {}
    tries = 0
    while len(records) < n_events and tries < n_events * 20:
        tries += 1
        x = int(rng.integers(0, width))
        y = int(rng.integers(0, height))
        t = int(rng.integers(1, duration))
        times = taken.setdefault((x, y), [])
        if any(abs(t - u) < min_gap for u in times):
            continue
        times.append(t)
        records.append((x, y, 1 if rng.random() < 0.5 else -1, t))
    arr = np.array(records, dtype=DVS_DTYPE)
    order = np.lexsort((arr["y"], arr["x"], arr["t"]))
    return arr[order]
