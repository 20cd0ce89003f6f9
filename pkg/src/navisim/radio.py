"""Deterministic threshold radio: range from link budget, unit-disk connectivity."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Mapping, Optional, Tuple

from .trace import Position

SPEED_OF_LIGHT = 299_792_458.0

FRIIS_THRESHOLD = "friis_threshold"
FIXED_RANGE = "fixed_range"


@dataclass(frozen=True)
class RadioConfig:
    tx_power: float = 23.0          # dBm
    rx_sensitivity: float = -85.0   # dBm
    frequency: float = 5.9e9        # Hz
    model: str = FRIIS_THRESHOLD
    fixed_range: Optional[float] = None  # meters, for the fixed_range model

    def __post_init__(self):
        if not 0.0 <= self.tx_power <= 33.0:
            raise ValueError(f"tx_power {self.tx_power} dBm outside [0, 33]")
        if self.model not in (FRIIS_THRESHOLD, FIXED_RANGE):
            raise ValueError(f"unknown radio model {self.model!r}")
        if self.model == FIXED_RANGE and not (self.fixed_range and self.fixed_range > 0):
            raise ValueError("fixed_range model needs a positive range")

    @property
    def range(self) -> float:
        if self.model == FIXED_RANGE:
            return float(self.fixed_range)
        return range_from_power(self)


def range_from_power(cfg: RadioConfig) -> float:
    """Distance at which free-space path loss consumes the whole link budget.

    R = lambda / (4 pi) * 10 ** ((P_tx - P_sens) / 20)
    """
    if cfg.model != FRIIS_THRESHOLD:
        raise ValueError("range_from_power needs the friis_threshold model")
    if not cfg.frequency > 0:
        raise ValueError(f"non-positive frequency {cfg.frequency}")
    wavelength = SPEED_OF_LIGHT / cfg.frequency
    return wavelength / (4.0 * math.pi) * 10.0 ** ((cfg.tx_power - cfg.rx_sensitivity) / 20.0)


def link_exists(a: Position, b: Position, range_m: float) -> bool:
    # closed ball: distance == range is connected
    return math.hypot(a[0] - b[0], a[1] - b[1]) <= range_m


@dataclass(frozen=True)
class ConnectivityGraph:
    nodes: FrozenSet[int]
    edges: FrozenSet[Tuple[int, int]]   # (a, b) with a < b
    timestamp: float = 0.0

    def adjacency(self) -> Dict[int, FrozenSet[int]]:
        adj: Dict[int, set] = {v: set() for v in self.nodes}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return {v: frozenset(s) for v, s in adj.items()}

    def neighbors(self, v: int) -> FrozenSet[int]:
        return self.adjacency()[v]

    def degrees(self) -> Dict[int, int]:
        deg = dict.fromkeys(self.nodes, 0)
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg


def connectivity_snapshot(positions: Mapping[int, Position], range_m: float,
                          t: float = 0.0) -> ConnectivityGraph:
    ids = sorted(positions)
    edges = []
    for i, a in enumerate(ids):
        pa = positions[a]
        for b in ids[i + 1:]:
            if link_exists(pa, positions[b], range_m):
                edges.append((a, b))
    return ConnectivityGraph(frozenset(ids), frozenset(edges), t)


def neighbors_in_range(v: int, positions: Mapping[int, Position], range_m: float) -> List[int]:
    """Ids within range of ``v`` (excluding ``v``), ascending."""
    p = positions[v]
    return [u for u in sorted(positions) if u != v and link_exists(p, positions[u], range_m)]
