"""Per-pixel integration model for the intensity-event representation.

Each pixel accumulates incoming intensity and emits events <D, t>: "this
pixel finished accumulating 2**D intensity units at absolute tick t".
Implied intensity is 2**D divided by the time since the pixel's previous
event, so one event can summarize an arbitrarily long stable span.

Two bookkeeping modes:

* ``collapse`` (default): a single accumulator per pixel.  Each time the
  running total reaches 2**D, the pending candidate event is *replaced*
  by a bigger one (D grows by 1), so a stable pixel holds exactly one
  candidate summarizing everything since its last reset.  A flush emits
  the candidate plus, when un-summarized time remains, a filler event
  with the reserved code D_FILLER meaning "same average intensity as the
  previous event, up to tick t".
* ``list``: a chain of nodes, each holding the partial accumulation that
  overflowed its parent's last threshold.  Queued edge events between
  nodes carry strictly decreasing D.  A flush drains the queued edges.

D is capped at D_MAX.  D_ZERO marks a span with (effectively) zero
intensity; D_FILLER marks the collapse-mode filler.  Both are reserved
and never produced by saturation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional

D_MAX = 127
D_ZERO = 254  # reserved: zero-intensity span terminator
D_FILLER = 255  # reserved: "same average intensity as previous event"

RESERVED_D = frozenset((D_ZERO, D_FILLER))

# Shared epsilon for saturation boundary tests.  The vectorized transcoder
# mirrors these formulas exactly; keep any tolerance change in sync.
SAT_EPS = 1e-9

SourceKind = Literal["framed", "dvs", "adder", "simulated"]
PixelMode = Literal["collapse", "list"]

_SOURCE_CODES = {"framed": 0, "dvs": 1, "adder": 2, "simulated": 3}
_SOURCE_NAMES = {v: k for k, v in _SOURCE_CODES.items()}
_MODE_CODES = {"collapse": 0, "list": 1}
_MODE_NAMES = {v: k for k, v in _MODE_CODES.items()}


@dataclass(frozen=True, slots=True)
class Event:
    """One pixel event: 2**D intensity units accumulated, ending at tick t.

    ``c`` is the color channel (0 for monochrome).  ``D`` in [0, 127] or a
    reserved code (D_ZERO / D_FILLER).  ``t`` is absolute, in ticks since
    stream start, and fits u32.
    """

    x: int
    y: int
    c: int
    d: int
    t: int

    def is_reserved(self) -> bool:
        return self.d in RESERVED_D


@dataclass(frozen=True)
class PlaneParams:
    """Geometry and clock configuration shared by a whole event plane."""

    width: int
    height: int
    channels: int = 1
    dt_s: int = 255 * 30  # ticks per second of source time
    dt_ref: int = 255  # ticks per input integration unit (frame)
    dt_max: int = 255 * 30  # max span of the first event at a new level
    source_kind: SourceKind = "framed"
    pixel_mode: PixelMode = "collapse"

    def __post_init__(self) -> None:
        if not (1 <= self.width <= 0xFFFF and 1 <= self.height <= 0xFFFF):
            raise ValueError("plane dimensions must fit u16 and be positive")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        if self.dt_ref < 1:
            raise ValueError("dt_ref must be >= 1 tick")
        if self.dt_max < self.dt_ref:
            raise ValueError("dt_max must be >= dt_ref")
        if not (1 <= self.dt_s <= 0xFFFFFFFF and self.dt_ref <= 0xFFFFFFFF
                and self.dt_max <= 0xFFFFFFFF):
            raise ValueError("tick parameters must fit u32 and be positive")
        if self.source_kind == "framed" and self.dt_s % self.dt_ref != 0:
            raise ValueError("framed sources need dt_s to be a multiple of dt_ref")
        if self.source_kind not in _SOURCE_CODES:
            raise ValueError(f"unknown source kind {self.source_kind!r}")
        if self.pixel_mode not in _MODE_CODES:
            raise ValueError(f"unknown pixel mode {self.pixel_mode!r}")

    @property
    def source_code(self) -> int:
        return _SOURCE_CODES[self.source_kind]

    @property
    def mode_code(self) -> int:
        return _MODE_CODES[self.pixel_mode]


@dataclass(frozen=True)
class SensitivityParams:
    """Contrast-threshold configuration, in per-dt_ref intensity units.

    A pixel flushes when new input differs from its baseline by more than
    the *current* threshold, which starts at ``m`` and grows by one unit
    for every ``m_v`` elapsed dt_ref intervals, up to ``m_max``.
    Applications may temporarily lower the current threshold down to the
    lossless baseline; it then regrows on the same schedule.
    ``feature_radius`` is the Chebyshev radius used when feature feedback
    lowers thresholds around detected corners.
    """

    m: float = 0.0
    m_max: float = 0.0
    m_v: int = 1
    feature_radius: int = 3

    def __post_init__(self) -> None:
        if self.m < 0 or self.m_max < 0:
            raise ValueError("thresholds must be non-negative")
        if self.m > self.m_max:
            raise ValueError("m must not exceed m_max")
        if self.m_v < 1:
            raise ValueError("m_v must be >= 1")
        if self.feature_radius < 0:
            raise ValueError("feature_radius must be >= 0")


def d_for_intensity(value: float) -> int:
    """Initial D for a pixel about to integrate ``value`` units per unit span.

    The largest D whose threshold 2**D does not exceed the incoming
    intensity, so the first saturation lands within one input unit.
    Zero / sub-unit intensities get D = 0.
    """
    if value < 1.0:
        return 0
    return min(D_MAX, int(math.floor(math.log2(value))))


@dataclass
class _Node:
    """One link of a list-mode pixel: partial accumulation past the parent."""

    d: int
    intensity: float = 0.0  # cumulative units integrated since creation
    age: float = 0.0  # ticks since creation
    origin: float = 0.0  # absolute tick of creation
    # Edge event to the child: (D, absolute saturation tick, float)
    edge: Optional[tuple[int, float]] = None


@dataclass
class PixelState:
    """Scalar reference implementation of one pixel's integration state.

    The vectorized framed transcoder reimplements the collapse mode over
    numpy arrays; this class is the readable contract both are tested
    against.  All internal times are float ticks; event times are floored
    to integer ticks only at emission.
    """

    dt_ref: int
    dt_max: float = math.inf
    sens: SensitivityParams = field(default_factory=SensitivityParams)
    mode: PixelMode = "collapse"

    # --- shared bookkeeping ---
    running_t: float = 0.0  # wall clock: total ticks integrated so far
    reset_t: float = 0.0  # wall tick of the last flush/reset
    baseline: Optional[float] = None  # per-dt_ref units; None = uninitialized
    current_m: float = 0.0
    _m_accum: float = 0.0  # ticks banked toward the next threshold bump
    emitted_since_reset: bool = False
    last_emit_wall: float = 0.0  # wall tick when the last event left the pixel
    last_emit_t: float = 0.0  # the t carried by the last emitted event

    # --- collapse mode ---
    d: int = 0
    intensity: float = 0.0  # cumulative units since `origin`
    origin: float = 0.0  # absolute tick the accumulation is measured from
    candidate: Optional[tuple[int, float]] = None  # (D, absolute tick)

    # --- list mode ---
    nodes: list[_Node] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.current_m = self.sens.m

    # ------------------------------------------------------------------
    # lifecycle

    @property
    def initialized(self) -> bool:
        return self.baseline is not None

    def reset(self, new_baseline: float) -> None:
        """Start a fresh intensity level at the current wall tick."""
        self.baseline = float(new_baseline)
        self.reset_t = self.running_t
        self.origin = self.running_t
        self.intensity = 0.0
        self.d = d_for_intensity(new_baseline)
        self.candidate = None
        self.nodes = []
        self.emitted_since_reset = False
        self.current_m = self.sens.m
        self._m_accum = 0.0

    # ------------------------------------------------------------------
    # sensitivity

    def tick_sensitivity(self, elapsed: float) -> None:
        """Grow the contrast threshold: +1 per (m_v * dt_ref) elapsed ticks.

        Whole steps only; the remainder stays banked.  Saturates at m_max.
        """
        if self.sens.m_max <= self.current_m:
            return
        self._m_accum += elapsed
        step = self.sens.m_v * self.dt_ref
        bumps = math.floor(self._m_accum / step)
        if bumps >= 1:
            self._m_accum -= bumps * step
            self.current_m = min(self.current_m + bumps, self.sens.m_max)

    def apply_application_sensitivity(self, target_m: float) -> None:
        """Lower (never raise) the current threshold toward an app's target."""
        if target_m < self.current_m:
            self.current_m = max(0.0, target_m)

    def should_flush(self, incoming_normalized: float) -> bool:
        """True when new input exceeds the baseline by more than current_m.

        ``incoming_normalized`` is in per-dt_ref intensity units (a frame
        pixel value for 8-bit framed sources).  Strict comparison: equal
        deviation does not flush.
        """
        if self.baseline is None:
            return False
        return abs(incoming_normalized - self.baseline) > self.current_m

    # ------------------------------------------------------------------
    # integration

    def integrate(self, units: float, span: float) -> list[tuple[int, int]]:
        """Accumulate ``units`` of intensity spread evenly over ``span`` ticks.

        Returns a snapshot of the queued (not yet emitted) events as
        (D, floored absolute tick) pairs, widest first.
        """
        if span <= 0:
            raise ValueError("span must be positive")
        if units < 0:
            raise ValueError("intensity must be non-negative")
        if self.baseline is None:
            # First contact initializes the baseline at this rate.
            self.reset(units * self.dt_ref / span)
        if self.mode == "collapse":
            self._integrate_collapse(units, span)
        else:
            self._integrate_list(units, span)
        self.running_t += span
        return self.queued_events()

    def _integrate_collapse(self, units: float, span: float) -> None:
        rate = units / span
        t = self.running_t
        end = self.running_t + span
        if rate <= 0.0:
            return
        while True:
            cap = math.ldexp(1.0, self.d) - self.intensity
            dt_to_sat = cap / rate
            if t + dt_to_sat <= end + SAT_EPS:
                t += dt_to_sat
                self.intensity = math.ldexp(1.0, self.d)
                self.candidate = (self.d, t)
                if self.d >= D_MAX:
                    # Threshold frozen at the cap: accumulate time only.
                    break
                self.d += 1
            else:
                self.intensity += rate * (end - t)
                break

    def _integrate_list(self, units: float, span: float) -> None:
        if not self.nodes:
            # A fresh root is sized so its threshold fits inside the first
            # batch of intensity it is about to integrate.
            self.nodes = [_Node(d=d_for_intensity(units), origin=self.running_t)]
        # Pre-existing nodes all see the full input; a node created by a
        # saturation mid-span sees only the remainder past its creation.
        carry: Optional[tuple[float, float]] = None
        i = 0
        while i < len(self.nodes):
            node = self.nodes[i]
            u, s = (units, span) if carry is None else carry
            carry = None
            rate = u / s if s > 0 else 0.0
            if rate <= 0.0:
                node.age += s
                i += 1
                continue
            while True:
                cap = math.ldexp(1.0, node.d) - node.intensity
                dt_to_sat = cap / rate
                if dt_to_sat > s + SAT_EPS:
                    node.intensity += rate * s
                    node.age += s
                    break
                node.intensity = math.ldexp(1.0, node.d)
                node.age += dt_to_sat
                s = max(0.0, s - dt_to_sat)
                u = max(0.0, u - cap)
                sat_t = node.origin + node.age
                node.edge = (node.d, sat_t)
                # The new edge summarizes everything below: replace any
                # descendants with one fresh node holding the overflow.
                del self.nodes[i + 1:]
                child_d = min(node.d, d_for_intensity(units))
                self.nodes.append(_Node(d=child_d, origin=sat_t))
                carry = (u, s)
                if node.d >= D_MAX:
                    # Threshold frozen at the cap: absorb the rest quietly.
                    node.intensity += rate * s
                    node.age += s
                    break
                node.d += 1
            i += 1

    # ------------------------------------------------------------------
    # event extraction

    def queued_events(self) -> list[tuple[int, int]]:
        """Snapshot of queued events as (D, floor(t)), widest span first."""
        if self.mode == "collapse":
            if self.candidate is None:
                return []
            return [(self.candidate[0], int(self.candidate[1]))]
        return [(n.edge[0], int(n.edge[1])) for n in self.nodes if n.edge]

    def queued_edges_relative(self) -> list[tuple[int, int]]:
        """List-mode edge events as (D, floor(ticks since node creation))."""
        out = []
        for n in self.nodes:
            if n.edge:
                out.append((n.edge[0], int(n.edge[1] - n.origin)))
        return out

    def _emit_candidate(self) -> tuple[int, int]:
        assert self.candidate is not None
        cd, ct = self.candidate
        self.intensity -= math.ldexp(1.0, cd)
        if self.intensity < 0.0:
            self.intensity = 0.0
        self.origin = ct
        self.candidate = None
        self.emitted_since_reset = True
        self.last_emit_wall = self.running_t
        self.last_emit_t = ct
        return (cd, int(ct))

    def _emit_head_edge(self) -> tuple[int, int]:
        head = self.nodes[0]
        assert head.edge is not None
        d, t = head.edge
        # The emitted span is spent; the child (which tracks the overflow
        # past that saturation) becomes the root.
        self.nodes.pop(0)
        self.emitted_since_reset = True
        self.last_emit_wall = self.running_t
        self.last_emit_t = t
        return (d, int(t))

    def _force_head_edge(self) -> tuple[int, int]:
        """Emit the head's saturation record without tearing the head down.

        Unlike the flush drain, a deadline-forced emission keeps the head
        accumulating at its grown threshold (residual carried over, origin
        moved up to the emitted tick) and drops the finer sub-records, so a
        stable pixel's emissions keep spacing out instead of repeating at
        a fixed cadence.
        """
        head = self.nodes[0]
        assert head.edge is not None
        d, t = head.edge
        head.intensity = max(0.0, head.intensity - math.ldexp(1.0, d))
        head.age = self.running_t - t
        head.origin = t
        head.edge = None
        del self.nodes[1:]
        self.emitted_since_reset = True
        self.last_emit_wall = self.running_t
        self.last_emit_t = t
        return (d, int(t))

    def enforce_dtmax(self) -> list[tuple[int, int]]:
        """Emit pending events so no intensity level starts silently.

        First event since a reset must leave within dt_max of the reset;
        afterwards a pending candidate is pushed out whenever dt_max has
        passed since the last emission.  Dark pixels that never saturate
        get one zero-intensity D_ZERO marker, then stay silent until the
        next flush.
        """
        if not math.isfinite(self.dt_max) or self.baseline is None:
            return []
        out: list[tuple[int, int]] = []
        has_pending = (self.candidate is not None if self.mode == "collapse"
                       else bool(self.nodes and self.nodes[0].edge))
        if not self.emitted_since_reset:
            if self.running_t - self.reset_t >= self.dt_max - SAT_EPS:
                if has_pending:
                    out.append(self._emit_candidate() if self.mode == "collapse"
                               else self._force_head_edge())
                else:
                    forced_t = min(self.running_t, self.reset_t + self.dt_max)
                    out.append((D_ZERO, int(forced_t)))
                    self.intensity = 0.0
                    self.origin = forced_t
                    if self.nodes:
                        self.nodes = [_Node(d=self.nodes[-1].d, origin=forced_t)]
                    self.emitted_since_reset = True
                    self.last_emit_wall = self.running_t
                    self.last_emit_t = forced_t
        elif has_pending and self.running_t - self.last_emit_wall >= self.dt_max - SAT_EPS:
            out.append(self._emit_candidate() if self.mode == "collapse"
                       else self._force_head_edge())
        return out

    def flush(self, new_baseline: Optional[float] = None,
              discard_residual: bool = True) -> list[tuple[int, int]]:
        """Drain queued events and start a new intensity level.

        Emits queued events widest-first, then a D_FILLER event when
        already-emitted history leaves a gap up to now ("same average
        intensity"), or a D_ZERO event when the whole level produced
        nothing.  With ``discard_residual=False`` (list mode only) the
        tail node survives as the new head instead of being dropped.
        """
        out: list[tuple[int, int]] = []
        if self.baseline is None:
            if new_baseline is not None:
                self.reset(new_baseline)
            return out

        if self.mode == "collapse":
            if self.candidate is not None:
                out.append(self._emit_candidate())
        else:
            while self.nodes and self.nodes[0].edge:
                out.append(self._emit_head_edge())

        keep_tail = not discard_residual and self.mode == "list" and bool(self.nodes)
        now = int(self.running_t)
        if self.emitted_since_reset:
            # With the residual discarded, a filler conveys "same average
            # intensity" up to now.  A kept tail keeps tracking that span
            # itself, so a filler would double-count it.
            if not keep_tail and now > int(self.last_emit_t):
                out.append((D_FILLER, now))
                self.last_emit_wall = self.running_t
                self.last_emit_t = float(now)
        elif now - int(self.reset_t) >= 1:
            out.append((D_ZERO, now))

        tail = self.nodes[0] if keep_tail else None
        self.reset(new_baseline if new_baseline is not None else self.baseline)
        if tail is not None:
            self.nodes = [tail]
            self.d = tail.d
        return out

    # ------------------------------------------------------------------
    # introspection used by the property tests

    def invariant_report(self) -> dict:
        """Structural facts about the list-mode chain (for tests)."""
        assert self.mode == "list"
        nodes = self.nodes
        edges = [n.edge for n in nodes[:-1]]
        report = {
            "node_d": [n.d for n in nodes],
            "edge_d": [e[0] for e in edges if e],
            "node_intensity": [n.intensity for n in nodes],
            "node_age": [n.age for n in nodes],
        }
        return report
