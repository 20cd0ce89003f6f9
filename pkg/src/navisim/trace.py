"""Mobility traces: NS-2 ingestion, synthetic random waypoint, position queries."""

from __future__ import annotations

import bisect
import logging
import math
import random
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, NamedTuple, Optional, Tuple

log = logging.getLogger(__name__)

KMH = 1000.0 / 3600.0
MAX_PLAUSIBLE_SPEED = 70.0 * KMH

# 0.44 km^2 dissemination area with the 600 m side of the urban scenario
DEFAULT_AREA_WIDTH = 600.0
DEFAULT_AREA_HEIGHT = 440_000.0 / DEFAULT_AREA_WIDTH


class Position(NamedTuple):
    x: float
    y: float

    def distance_to(self, other: "Position") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Rect:
    min: Position
    max: Position

    def __post_init__(self):
        if not (self.min.x <= self.max.x and self.min.y <= self.max.y):
            raise ValueError(f"degenerate rectangle: min={self.min} max={self.max}")

    @classmethod
    def from_size(cls, width: float, height: float, x0: float = 0.0, y0: float = 0.0) -> "Rect":
        return cls(Position(x0, y0), Position(x0 + width, y0 + height))

    @property
    def width(self) -> float:
        return self.max.x - self.min.x

    @property
    def height(self) -> float:
        return self.max.y - self.min.y

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, p: Position) -> bool:
        return self.min.x <= p.x <= self.max.x and self.min.y <= p.y <= self.max.y

    def intersects(self, other: "Rect") -> bool:
        return not (other.max.x < self.min.x or other.min.x > self.max.x
                    or other.max.y < self.min.y or other.min.y > self.max.y)

    def expanded(self, margin: float) -> "Rect":
        return Rect(Position(self.min.x - margin, self.min.y - margin),
                    Position(self.max.x + margin, self.max.y + margin))


@dataclass(frozen=True)
class Segment:
    """Constant-speed leg from ``start`` toward ``dest``; the vehicle parks on arrival."""

    start_time: float
    start: Position
    dest: Position
    speed: float

    @property
    def length(self) -> float:
        return self.start.distance_to(self.dest)

    @property
    def arrival_time(self) -> float:
        if self.length == 0.0:
            return self.start_time
        if self.speed == 0.0:
            return math.inf
        return self.start_time + self.length / self.speed

    def position(self, t: float) -> Position:
        dist = self.length
        if dist == 0.0 or self.speed == 0.0 or t <= self.start_time:
            return self.start
        travelled = self.speed * (t - self.start_time)
        if travelled >= dist:
            return self.dest
        f = travelled / dist
        return Position(self.start.x + (self.dest.x - self.start.x) * f,
                        self.start.y + (self.dest.y - self.start.y) * f)


@dataclass(frozen=True)
class Track:
    initial: Position
    segments: Tuple[Segment, ...] = ()
    appear: float = 0.0
    _starts: Tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        starts = tuple(s.start_time for s in self.segments)
        if any(b < a for a, b in zip(starts, starts[1:])):
            raise ValueError("segments must be sorted by start_time")
        object.__setattr__(self, "_starts", starts)

    def position(self, t: float) -> Optional[Position]:
        if t < self.appear:
            return None
        i = bisect.bisect_right(self._starts, t) - 1
        if i < 0:
            return self.initial
        return self.segments[i].position(t)

    def motion(self, t: float) -> Tuple[float, float]:
        """(speed m/s, heading rad) at ``t``; parked vehicles report (0, 0)."""
        i = bisect.bisect_right(self._starts, t) - 1
        if i < 0:
            return 0.0, 0.0
        s = self.segments[i]
        if s.speed == 0.0 or s.length == 0.0 or t >= s.arrival_time:
            return 0.0, 0.0
        return s.speed, math.atan2(s.dest.y - s.start.y, s.dest.x - s.start.x)


@dataclass(frozen=True)
class MobilityTrace:
    tracks: Dict[int, Track]
    duration: float = math.inf
    warnings: Tuple[str, ...] = ()

    @property
    def vehicles(self) -> List[int]:
        return sorted(self.tracks)

    def __len__(self) -> int:
        return len(self.tracks)

    def bounds(self) -> Optional[Rect]:
        """Bounding box of every waypoint; positions are convex combinations of these."""
        xs: List[float] = []
        ys: List[float] = []
        for tr in self.tracks.values():
            pts = [tr.initial] + [p for s in tr.segments for p in (s.start, s.dest)]
            xs.extend(p.x for p in pts)
            ys.extend(p.y for p in pts)
        if not xs:
            return None
        return Rect(Position(min(xs), min(ys)), Position(max(xs), max(ys)))

    def normalized(self) -> "MobilityTrace":
        """Shift all coordinates so the bounding box starts at the origin."""
        box = self.bounds()
        if box is None:
            return self
        dx, dy = box.min.x, box.min.y

        def mv(p: Position) -> Position:
            return Position(p.x - dx, p.y - dy)

        tracks = {
            v: Track(mv(tr.initial),
                     tuple(Segment(s.start_time, mv(s.start), mv(s.dest), s.speed) for s in tr.segments),
                     tr.appear)
            for v, tr in self.tracks.items()
        }
        return MobilityTrace(tracks, self.duration, self.warnings)


def position_at(trace: MobilityTrace, v: int, t: float) -> Optional[Position]:
    """Position of ``v`` at ``t``; ``None`` before the vehicle appears."""
    try:
        track = trace.tracks[v]
    except KeyError:
        raise KeyError(f"unknown vehicle {v!r}") from None
    if not (0.0 <= t <= trace.duration):
        raise ValueError(f"t={t} outside [0, {trace.duration}]")
    return track.position(t)


def positions_at(trace: MobilityTrace, t: float) -> Dict[int, Position]:
    out = {}
    for v in sorted(trace.tracks):
        p = trace.tracks[v].position(t)
        if p is not None:
            out[v] = p
    return out


# --- NS-2 ---------------------------------------------------------------

class TraceParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


_SET_RE = re.compile(r'^\$node_\(\s*(\S+?)\s*\)\s+set\s+([XYZ])_\s+(\S+)\s*$')
_SETDEST_RE = re.compile(
    r'^\$ns_\s+at\s+(\S+)\s+"\s*\$node_\(\s*(\S+?)\s*\)\s+setdest\s+(\S+)\s+(\S+)\s+(\S+)\s*"\s*$')


def _num(tok: str, lineno: int, what: str) -> float:
    try:
        val = float(tok)
    except ValueError:
        raise TraceParseError(lineno, f"malformed {what}: {tok!r}") from None
    if not math.isfinite(val):
        raise TraceParseError(lineno, f"non-finite {what}: {tok!r}")
    return val


def _node_id(tok: str, lineno: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise TraceParseError(lineno, f"malformed node id: {tok!r}") from None


def parse_ns2_trace(text: str, duration: float = math.inf,
                    max_speed: float = MAX_PLAUSIBLE_SPEED) -> MobilityTrace:
    """Parse the X_/Y_/setdest subset of an NS-2 movement file.

    Parked vehicles stay put indefinitely, so the default duration is unbounded.
    """
    initial: Dict[int, Dict[str, float]] = {}
    moves: Dict[int, List[Tuple[float, int, Position, float]]] = {}
    warns: List[str] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _SET_RE.match(line)
        if m:
            node = _node_id(m.group(1), lineno)
            axis = m.group(2)
            val = _num(m.group(3), lineno, f"{axis}_ value")
            if axis == "Z":
                continue
            coords = initial.setdefault(node, {})
            if axis in coords:
                msg = f"line {lineno}: duplicate initial {axis}_ for node {node}, last value wins"
                warns.append(msg)
                log.warning(msg)
            coords[axis] = val
            continue
        m = _SETDEST_RE.match(line)
        if m:
            t = _num(m.group(1), lineno, "time")
            node = _node_id(m.group(2), lineno)
            x = _num(m.group(3), lineno, "x")
            y = _num(m.group(4), lineno, "y")
            speed = _num(m.group(5), lineno, "speed")
            if t < 0:
                raise TraceParseError(lineno, f"negative time {t}")
            if speed < 0 or speed > max_speed:
                raise TraceParseError(lineno, f"implausible speed {speed} m/s")
            coords = initial.get(node, {})
            if "X" not in coords or "Y" not in coords:
                raise TraceParseError(lineno, f"setdest for node {node} before its initial X_/Y_")
            moves.setdefault(node, []).append((t, lineno, Position(x, y), speed))
            continue
        if "setdest" in line:
            raise TraceParseError(lineno, f"unrecognized setdest statement: {line!r}")

    tracks = {}
    for node, coords in initial.items():
        if "X" not in coords or "Y" not in coords:
            raise ValueError(f"node {node} has an incomplete initial position")
        start = Position(coords["X"], coords["Y"])
        segs: List[Segment] = []
        for t, _, dest, speed in sorted(moves.get(node, []), key=lambda m: (m[0], m[1])):
            here = segs[-1].position(t) if segs else start
            segs.append(Segment(t, here, dest, speed))
        tracks[node] = Track(start, tuple(segs))
    return MobilityTrace(tracks, duration, tuple(warns))


def to_ns2(trace: MobilityTrace) -> str:
    """Serialize back to NS-2 statements; floats use repr so re-parsing is exact."""
    lines = []
    for v in trace.vehicles:
        tr = trace.tracks[v]
        lines.append(f"$node_({v}) set X_ {tr.initial.x!r}")
        lines.append(f"$node_({v}) set Y_ {tr.initial.y!r}")
        lines.append(f"$node_({v}) set Z_ 0.0")
    for v in trace.vehicles:
        for s in trace.tracks[v].segments:
            lines.append(f'$ns_ at {s.start_time!r} "$node_({v}) setdest {s.dest.x!r} {s.dest.y!r} {s.speed!r}"')
    return "\n".join(lines) + "\n"


def load_ns2_trace(path, duration: float = math.inf) -> MobilityTrace:
    with open(path, encoding="utf-8") as fh:
        return parse_ns2_trace(fh.read(), duration=duration)


# --- synthetic ----------------------------------------------------------

def generate_synthetic_trace(seed: int, n: int = 45, area: Optional[Rect] = None,
                             duration: float = 180.0,
                             speed_range: Tuple[float, float] = (10 * KMH, 50 * KMH),
                             pause: float = 0.0) -> MobilityTrace:
    """Random-waypoint trajectories, fully determined by ``seed``."""
    if area is None:
        area = Rect.from_size(DEFAULT_AREA_WIDTH, DEFAULT_AREA_HEIGHT)
    if n < 1:
        raise ValueError("need at least one vehicle")
    if area.width <= 0 or area.height <= 0:
        raise ValueError("area must be non-degenerate")
    lo, hi = speed_range
    if not (0 < lo <= hi <= MAX_PLAUSIBLE_SPEED):
        raise ValueError(f"speed range {speed_range} outside (0, {MAX_PLAUSIBLE_SPEED:.2f}] m/s")
    if duration <= 0 or pause < 0:
        raise ValueError("duration must be positive and pause non-negative")

    rng = random.Random(seed)

    def point() -> Position:
        return Position(rng.uniform(area.min.x, area.max.x), rng.uniform(area.min.y, area.max.y))

    tracks = {}
    for v in range(n):
        here = point()
        t = 0.0
        segs = []
        while t < duration:
            dest = point()
            speed = rng.uniform(lo, hi)
            seg = Segment(t, here, dest, speed)
            segs.append(seg)
            t = seg.arrival_time + pause
            here = dest
        tracks[v] = Track(segs[0].start, tuple(segs))
    return MobilityTrace(tracks, duration)


def vehicle_density(n_vehicles: int, area: Rect) -> float:
    """Vehicles per km^2."""
    return n_vehicles / (area.area / 1e6)


def sample_times(duration: float, step: float) -> Iterable[float]:
    i = 0
    while i * step <= duration:
        yield i * step
        i += 1
