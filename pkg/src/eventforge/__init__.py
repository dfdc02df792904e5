"""eventforge: asynchronous intensity-event video codec and tooling.

Frames and DVS change events are transcoded into one shared event
representation <x, y, c, D, t>: the pixel accumulated 2**D intensity
units, finishing at absolute tick t.  Submodules cover transcoding,
raw/compressed containers, reconstruction and export, event-native
vision operators, a sensor simulator, and a live tuning service.
"""

from eventforge.model import (
    D_MAX,
    D_ZERO,
    D_FILLER,
    Event,
    PlaneParams,
    SensitivityParams,
    PixelState,
)

__version__ = "0.1.0"

__all__ = [
    "D_MAX",
    "D_ZERO",
    "D_FILLER",
    "Event",
    "PlaneParams",
    "SensitivityParams",
    "PixelState",
    "__version__",
]
