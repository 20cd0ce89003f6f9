"""Geoserver: neighbor-table aggregation, zone grid and greedy virtual infrastructure election."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import (TYPE_CHECKING, Callable, Dict, FrozenSet, Iterable, List, Mapping, NamedTuple,
                    Optional, Sequence, Tuple)

from .model import BOTH, Capability
from .radio import connectivity_snapshot
from .trace import Position, Rect

if TYPE_CHECKING:
    from .dissem import DisseminationRequest

log = logging.getLogger(__name__)

ZoneSet = FrozenSet[int]


@dataclass(frozen=True)
class ZoneGrid:
    area: Rect
    cell: float = 50.0

    def __post_init__(self):
        if not self.cell > 0:
            raise ValueError("zone cell must be positive")

    @property
    def n_cols(self) -> int:
        return max(1, math.ceil(self.area.width / self.cell))

    @property
    def n_rows(self) -> int:
        return max(1, math.ceil(self.area.height / self.cell))

    @property
    def n_zones(self) -> int:
        return self.n_cols * self.n_rows


def zone_of(p: Position, grid: ZoneGrid) -> int:
    # half-open cells: a point on an interior boundary belongs to the higher cell
    if not grid.area.contains(p):
        log.warning("position %s outside zone grid area, clamping", p)
    col = math.floor((p.x - grid.area.min.x) / grid.cell)
    row = math.floor((p.y - grid.area.min.y) / grid.cell)
    col = min(max(col, 0), grid.n_cols - 1)
    row = min(max(row, 0), grid.n_rows - 1)
    return row * grid.n_cols + col


# --- geoserver input ------------------------------------------------------

class NeighborEntry(NamedTuple):
    vehicle: int
    position: Position
    capabilities: FrozenSet[Capability]
    gen_time: float
    last_heard: float


@dataclass(frozen=True)
class NtSnapshot:
    """Neighbor table upload as received by the geoserver."""

    owner: int
    position: Position
    capabilities: FrozenSet[Capability]
    time: float
    entries: Tuple[NeighborEntry, ...] = ()

    @property
    def size_entries(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class WorldView:
    """What the geoserver believes about the vehicles.

    ``neighbors``/``snapshot_time`` exist only for vehicles whose own upload is
    in the view; ``positions`` also covers vehicles known only as someone's neighbor.
    """

    positions: Mapping[int, Position]
    neighbors: Mapping[int, FrozenSet[int]]
    capabilities: Mapping[int, FrozenSet[Capability]]
    snapshot_time: Mapping[int, float]
    staleness: float = 5.0

    def fresh(self, now: float) -> "WorldView":
        keep = {v for v, ts in self.snapshot_time.items() if now - ts <= self.staleness}
        if len(keep) == len(self.snapshot_time):
            return self
        known = set(keep)
        for v in keep:
            known.update(self.neighbors[v])
        return WorldView(
            positions={v: p for v, p in self.positions.items() if v in known},
            neighbors={v: self.neighbors[v] for v in keep},
            capabilities={v: c for v, c in self.capabilities.items() if v in known},
            snapshot_time={v: self.snapshot_time[v] for v in keep},
            staleness=self.staleness,
        )

    @classmethod
    def from_positions(cls, positions: Mapping[int, Position], range_m: float,
                       capabilities: Optional[Mapping[int, FrozenSet[Capability]]] = None,
                       t: float = 0.0, staleness: float = 5.0) -> "WorldView":
        """Perfect-knowledge view built from a ground-truth connectivity snapshot."""
        adj = connectivity_snapshot(positions, range_m, t).adjacency()
        caps = dict(capabilities) if capabilities is not None else {v: BOTH for v in positions}
        return cls(dict(positions), adj, caps, {v: t for v in positions}, staleness)


class Geoserver:
    def __init__(self, staleness: float = 5.0):
        self.staleness = staleness
        self.snapshots: Dict[int, NtSnapshot] = {}

    def ingest(self, snap: NtSnapshot) -> None:
        prev = self.snapshots.get(snap.owner)
        if prev is None or prev.time <= snap.time:
            self.snapshots[snap.owner] = snap

    def world_view(self, now: float) -> WorldView:
        fresh = [s for _, s in sorted(self.snapshots.items()) if now - s.time <= self.staleness]
        positions: Dict[int, Position] = {}
        caps: Dict[int, FrozenSet[Capability]] = {}
        heard: Dict[int, NeighborEntry] = {}
        for s in fresh:
            positions[s.owner] = s.position
            caps[s.owner] = s.capabilities
            for e in s.entries:
                cur = heard.get(e.vehicle)
                if cur is None or e.gen_time > cur.gen_time:
                    heard[e.vehicle] = e
        for v, e in heard.items():
            if v not in positions:
                positions[v] = e.position
                caps[v] = e.capabilities
        return WorldView(
            positions=positions,
            neighbors={s.owner: frozenset(e.vehicle for e in s.entries) for s in fresh},
            capabilities=caps,
            snapshot_time={s.owner: s.time for s in fresh},
            staleness=self.staleness,
        )


# --- coverage & indices ------------------------------------------------------

@dataclass(frozen=True)
class CoverageSets:
    zones: Mapping[int, ZoneSet]
    hop_limit: int = 1

    def __contains__(self, v) -> bool:
        return v in self.zones

    def __getitem__(self, v) -> ZoneSet:
        try:
            return self.zones[v]
        except KeyError:
            raise KeyError(f"vehicle {v!r} has no coverage set") from None


def coverage_sets(view: WorldView, grid: ZoneGrid, hop_limit: int = 1,
                  vehicles: Optional[Iterable[int]] = None) -> CoverageSets:
    """Zones reachable from each vehicle within ``hop_limit`` hops of the reported graph.

    Only vehicles with their own upload have outgoing edges; reached vehicles
    outside the grid area contribute no zone.
    """
    if hop_limit < 0:
        raise ValueError("hop_limit must be >= 0")
    if vehicles is None:
        vehicles = view.neighbors.keys()
    area = grid.area
    zone_cache: Dict[int, Optional[int]] = {}

    def zone(u: int) -> Optional[int]:
        if u not in zone_cache:
            p = view.positions.get(u)
            zone_cache[u] = zone_of(p, grid) if p is not None and area.contains(p) else None
        return zone_cache[u]

    out = {}
    for v in sorted(vehicles):
        zones = {zone_of(view.positions[v], grid)}
        seen = {v}
        frontier = deque([(v, 0)])
        while frontier:
            u, d = frontier.popleft()
            if d == hop_limit:
                continue
            for w in view.neighbors.get(u, ()):
                if w in seen:
                    continue
                seen.add(w)
                z = zone(w)
                if z is not None:
                    zones.add(z)
                frontier.append((w, d + 1))
        out[v] = frozenset(zones)
    return CoverageSets(out, hop_limit)


def occupied_zones(view: WorldView, grid: ZoneGrid) -> ZoneSet:
    return frozenset(zone_of(p, grid) for p in view.positions.values() if grid.area.contains(p))


def zone_index(v: int, cov: CoverageSets) -> int:
    return len(cov[v])


def dissimilarity(v: int, selected_zones: Iterable[int], cov: CoverageSets) -> int:
    return len(cov[v].difference(selected_zones))


# --- selection ---------------------------------------------------------------

class StopReason(str, Enum):
    COVERAGE_COMPLETE = "coverage_complete"
    K_REACHED = "k_reached"
    ZERO_GAIN = "zero_gain"
    VALIDITY_EXPIRED = "validity_expired"


@dataclass(frozen=True)
class SelectionResult:
    selected: Tuple[int, ...]
    covered: ZoneSet
    stop_reason: StopReason
    gains: Tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.selected)

    def truncated(self, k: int, cov: CoverageSets) -> "SelectionResult":
        """Result the same greedy run would give under budget ``k``."""
        if k >= len(self.selected):
            return self
        chosen = self.selected[:k]
        covered = frozenset().union(*(cov[v] for v in chosen)) if chosen else frozenset()
        return SelectionResult(chosen, covered, StopReason.K_REACHED, self.gains[:k])


def greedy_max_coverage(zone_sets: Mapping[int, ZoneSet], k: int,
                        universe: Optional[Iterable[int]] = None) -> SelectionResult:
    """Pick the largest marginal gain until the universe is covered, k is hit or gain is 0.

    Ties go to the smaller id.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    target = frozenset(universe) if universe is not None else frozenset().union(*zone_sets.values())
    if not zone_sets:
        return SelectionResult((), frozenset(), StopReason.ZERO_GAIN)
    remaining = sorted(zone_sets)
    selected: List[int] = []
    gains: List[int] = []
    covered: set = set()
    while True:
        if target <= covered:
            reason = StopReason.COVERAGE_COMPLETE
            break
        if len(selected) >= k:
            reason = StopReason.K_REACHED
            break
        best, best_gain = None, 0
        for v in remaining:
            g = len(zone_sets[v] - covered)
            if g > best_gain:
                best, best_gain = v, g
        if best is None:
            reason = StopReason.ZERO_GAIN
            break
        selected.append(best)
        gains.append(best_gain)
        covered |= zone_sets[best]
        remaining.remove(best)
    return SelectionResult(tuple(selected), frozenset(covered), reason, tuple(gains))


CandidateFilter = Callable[[int, WorldView], bool]


def eligible_candidates(view: WorldView, area: Rect,
                        candidate_filter: Optional[CandidateFilter] = None) -> List[int]:
    out = []
    for v in sorted(view.neighbors):
        if not area.contains(view.positions[v]):
            continue
        if not BOTH <= view.capabilities.get(v, frozenset()):
            continue
        if candidate_filter is not None and not candidate_filter(v, view):
            continue
        out.append(v)
    return out


def select_virtual_infrastructure(view: WorldView, grid: ZoneGrid, req: "DisseminationRequest",
                                  delivery_budget: float = 0.0,
                                  candidate_filter: Optional[CandidateFilter] = None,
                                  ) -> SelectionResult:
    """Greedy zone-dissimilarity election over the fresh part of ``view``.

    ``delivery_budget`` is the fastest possible LTE + one-hop delivery time; a
    request whose validity is shorter fails with ``validity_expired``.
    """
    result, _ = _select(view, grid, req, delivery_budget, candidate_filter)
    return result


def _select(view, grid, req, delivery_budget=0.0, candidate_filter=None):
    if req.validity < delivery_budget:
        return SelectionResult((), frozenset(), StopReason.VALIDITY_EXPIRED), CoverageSets({}, req.hop_limit)
    view = view.fresh(req.issue_time)
    cands = eligible_candidates(view, req.area, candidate_filter)
    cov = coverage_sets(view, grid, req.hop_limit, cands)
    if not cands:
        return SelectionResult((), frozenset(), StopReason.ZERO_GAIN), cov
    return greedy_max_coverage(cov.zones, req.k, occupied_zones(view, grid)), cov


def check_selection(result: SelectionResult, cov: CoverageSets, k: int) -> List[str]:
    """Invariant violations of a selection result (empty list when sound)."""
    problems = []
    if len(result.selected) > k:
        problems.append(f"{len(result.selected)} selected > k={k}")
    if any(g <= 0 for g in result.gains):
        problems.append(f"non-positive gain in {result.gains}")
    if any(b > a for a, b in zip(result.gains, result.gains[1:])):
        problems.append(f"gains increase: {result.gains}")
    if sum(result.gains) != len(result.covered):
        problems.append("sum of gains differs from covered zone count")
    union = frozenset().union(*(cov[v] for v in result.selected)) if result.selected else frozenset()
    if union != result.covered:
        problems.append("covered differs from union of selected coverage sets")
    return problems
