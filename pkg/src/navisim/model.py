"""Small types shared by the simulator, geoserver and dissemination code."""

from __future__ import annotations

from enum import Enum
from typing import FrozenSet


class Capability(str, Enum):
    SHORT_RANGE = "ShortRange"
    LTE = "Lte"


BOTH: FrozenSet[Capability] = frozenset({Capability.SHORT_RANGE, Capability.LTE})
LTE_ONLY: FrozenSet[Capability] = frozenset({Capability.LTE})
SHORT_RANGE_ONLY: FrozenSet[Capability] = frozenset({Capability.SHORT_RANGE})

# pseudo node ids used as src/dst in transmission records
GEOSERVER = "geoserver"
APPLICATION = "application"
BROADCAST = "broadcast"

US_PER_S = 1_000_000


def to_us(seconds: float) -> int:
    """Simulation clock is integer microseconds so latency sums are exact."""
    return int(round(seconds * US_PER_S))


def to_s(us: int) -> float:
    return us / US_PER_S
