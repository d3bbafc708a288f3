"""Small numeric helpers shared across modules."""

from __future__ import annotations

import math

# Relative tolerance when deciding whether a float is "really" an integer.
# Quantities like 2/epsilon or 8/epsilon**3 are mathematically integral for
# common epsilon values but land one ulp off in binary floating point; a bare
# floor/ceil would then be off by one.
_SNAP_TOL = 1e-9


def _snapped(value: float) -> float | None:
    nearest = round(value)
    if abs(value - nearest) <= _SNAP_TOL * max(1.0, abs(value)):
        return nearest
    return None


def snap_floor(value: float) -> int:
    """floor(value), treating values within 1e-9 (relative) of an integer as that integer."""
    nearest = _snapped(value)
    return int(nearest) if nearest is not None else math.floor(value)


def snap_ceil(value: float) -> int:
    """ceil(value), treating values within 1e-9 (relative) of an integer as that integer."""
    nearest = _snapped(value)
    return int(nearest) if nearest is not None else math.ceil(value)
