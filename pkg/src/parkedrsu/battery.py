"""Back-of-envelope battery cost of keeping a radio on while parked."""
from __future__ import annotations

import math


def battery_drain(power: float, voltage: float, hours: float, capacity: float, eol_factor: float = 1.0) -> float:
    """Percent of usable battery charge drawn by a radio of ``power`` watts over ``hours``.

    ``eol_factor`` scales the nominal capacity in ampere-hours for an aged battery
    (0.5 means half the original capacity is left).
    """
    for name, v in (("power", power), ("voltage", voltage), ("capacity", capacity), ("eol_factor", eol_factor)):
        if not (math.isfinite(v) and v > 0):
            raise ValueError(f"{name} must be positive, got {v}")
    if not (math.isfinite(hours) and hours >= 0):
        raise ValueError(f"hours must be non-negative, got {hours}")
    current = power / voltage
    return current * hours / (capacity * eol_factor) * 100.0
