import math

import pytest
from hypothesis import given, settings, strategies as st

from navisim.trace import (KMH, MobilityTrace, Position, Rect, Segment, Track, TraceParseError,
                           generate_synthetic_trace, parse_ns2_trace, position_at, positions_at, to_ns2,
                           vehicle_density)

STATIONARY = """\
$node_(0) set X_ 10.0
$node_(0) set Y_ 20.0
$node_(0) set Z_ 0.0
"""


def test_stationary_vehicle_stays_put():
    tr = parse_ns2_trace(STATIONARY)
    assert tr.vehicles == [0]
    for t in (0.0, 1.0, 179.9, 1e6):
        assert position_at(tr, 0, t) == (10.0, 20.0)


def test_constant_velocity_midpoint():
    tr = parse_ns2_trace('$node_(0) set X_ 0\n$node_(0) set Y_ 0\n$ns_ at 0.0 "$node_(0) setdest 100 0 10"\n')
    assert position_at(tr, 0, 5.0) == pytest.approx((50.0, 0.0))
    assert position_at(tr, 0, 10.0) == (100.0, 0.0)


def test_arrival_then_parked():
    tr = parse_ns2_trace('$node_(0) set X_ 0\n$node_(0) set Y_ 0\n$ns_ at 0.0 "$node_(0) setdest 30 40 5"\n')
    seg = tr.tracks[0].segments[0]
    assert seg.arrival_time == pytest.approx(10.0)   # 50 m at 5 m/s
    assert position_at(tr, 0, 12.0) == (30.0, 40.0)
    assert tr.tracks[0].motion(12.0) == (0.0, 0.0)
    speed, heading = tr.tracks[0].motion(3.0)
    assert speed == 5.0 and heading == pytest.approx(math.atan2(40, 30))


def test_second_setdest_starts_from_current_position():
    text = ('$node_(1) set X_ 0\n$node_(1) set Y_ 0\n'
            '$ns_ at 0.0 "$node_(1) setdest 100 0 10"\n'
            '$ns_ at 5.0 "$node_(1) setdest 50 50 10"\n')
    tr = parse_ns2_trace(text)
    assert position_at(tr, 1, 5.0) == pytest.approx((50.0, 0.0))
    assert position_at(tr, 1, 8.0) == pytest.approx((50.0, 30.0))
    assert position_at(tr, 1, 20.0) == (50.0, 50.0)


def test_setdest_order_independent_of_file_order():
    a = ('$node_(0) set X_ 0\n$node_(0) set Y_ 0\n'
         '$ns_ at 5.0 "$node_(0) setdest 0 50 10"\n$ns_ at 0.0 "$node_(0) setdest 50 0 10"\n')
    tr = parse_ns2_trace(a)
    assert [s.start_time for s in tr.tracks[0].segments] == [0.0, 5.0]
    # at t=5 at (50, 0); then 50 m along the diagonal toward (0, 50)
    d = 50 / math.sqrt(2)
    assert position_at(tr, 0, 10.0) == pytest.approx((50.0 - d, d))


@pytest.mark.parametrize("text, lineno", [
    ("$node_(0) set X_ abc\n", 1),
    ('$node_(0) set X_ 0\n$node_(0) set Y_ 0\n$ns_ at 1.0 "$node_(0) setdest 1 zz 3"\n', 3),
    ('$ns_ at 0.0 "$node_(0) setdest 1 1 1"\n', 1),
    ('$node_(0) set X_ 0\n$node_(0) set Y_ 0\n\n$ns_ at 0.0 "$node_(0) setdest 1 1 100"\n', 4),
    ('$node_(0) set X_ 0\n$node_(0) set Y_ 0\n$ns_ at 0.0 "$node_(0) setdest 1 1"\n', 3),
])
def test_parse_errors_carry_line_numbers(text, lineno):
    with pytest.raises(TraceParseError) as ei:
        parse_ns2_trace(text)
    assert ei.value.lineno == lineno
    assert f"line {lineno}" in str(ei.value)


def test_duplicate_initial_position_last_wins_with_warning():
    tr = parse_ns2_trace("$node_(3) set X_ 1\n$node_(3) set Y_ 2\n$node_(3) set X_ 7\n")
    assert position_at(tr, 3, 0.0) == (7.0, 2.0)
    assert len(tr.warnings) == 1 and "duplicate" in tr.warnings[0]


def test_comments_and_blank_lines_ignored():
    tr = parse_ns2_trace("# header\n\n" + STATIONARY)
    assert tr.vehicles == [0]


def test_position_at_errors():
    tr = parse_ns2_trace(STATIONARY, duration=180.0)
    with pytest.raises(KeyError):
        position_at(tr, 99, 1.0)
    with pytest.raises(ValueError):
        position_at(tr, 0, 181.0)
    with pytest.raises(ValueError):
        position_at(tr, 0, -0.1)


def test_vehicle_absent_before_appearing():
    tr = MobilityTrace({0: Track(Position(0, 0), appear=10.0)})
    assert position_at(tr, 0, 5.0) is None
    assert positions_at(tr, 5.0) == {}
    assert positions_at(tr, 10.0) == {0: (0.0, 0.0)}


def test_segments_must_be_sorted():
    s1 = Segment(5.0, Position(0, 0), Position(1, 0), 1.0)
    s0 = Segment(0.0, Position(0, 0), Position(1, 0), 1.0)
    with pytest.raises(ValueError):
        Track(Position(0, 0), (s1, s0))


# --- synthetic ------------------------------------------------------------

def test_synthetic_is_deterministic():
    assert to_ns2(generate_synthetic_trace(7)) == to_ns2(generate_synthetic_trace(7))
    assert to_ns2(generate_synthetic_trace(7)) != to_ns2(generate_synthetic_trace(8))


def test_synthetic_round_trips_through_ns2():
    tr = generate_synthetic_trace(3, n=10, duration=60.0)
    back = parse_ns2_trace(to_ns2(tr), duration=60.0)
    assert back.vehicles == tr.vehicles
    for i in range(601):
        t = i / 10
        for v in tr.vehicles:
            p, q = position_at(tr, v, t), position_at(back, v, t)
            assert math.hypot(p.x - q.x, p.y - q.y) < 1e-9


def test_synthetic_single_vehicle_stays_in_area():
    area = Rect.from_size(600, 730)
    tr = generate_synthetic_trace(11, n=1, area=area)
    assert tr.vehicles == [0]
    for i in range(1801):
        assert area.contains(position_at(tr, 0, i / 10))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 8))
def test_synthetic_speed_and_bounds(seed, n):
    area = Rect.from_size(300, 200)
    tr = generate_synthetic_trace(seed, n=n, area=area, duration=60.0)
    box = area.expanded(1.0)
    for v in tr.vehicles:
        track = tr.tracks[v]
        for s in track.segments:
            assert 10 * KMH <= s.speed <= 50 * KMH
        prev = position_at(tr, v, 0.0)
        for i in range(1, 121):
            t = i * 0.5
            p = position_at(tr, v, t)
            assert box.contains(p)
            # never faster than the fastest leg
            assert prev.distance_to(p) <= 50 * KMH * 0.5 + 1e-9
            prev = p


def test_density_matches_configured_vehicle_count():
    # 45 vehicles on 0.40 km^2 -> 112.5 veh/km^2, within 10 % of the 113 target
    assert vehicle_density(45, Rect.from_size(500, 800)) == pytest.approx(112.5)
    assert abs(vehicle_density(45, Rect.from_size(500, 800)) - 113) / 113 < 0.10
    # the 600 x 730 m default sits lower
    assert vehicle_density(45, Rect.from_size(600, 730)) == pytest.approx(102.74, abs=0.01)


def test_bounds_and_normalized():
    tr = parse_ns2_trace('$node_(0) set X_ 10\n$node_(0) set Y_ 20\n$node_(1) set X_ 40\n$node_(1) set Y_ 5\n'
                         '$ns_ at 0 "$node_(1) setdest 60 90 5"\n')
    box = tr.bounds()
    assert (box.min, box.max) == ((10.0, 5.0), (60.0, 90.0))
    n = tr.normalized()
    assert n.bounds().min == (0.0, 0.0)
    assert position_at(n, 0, 0.0) == (0.0, 15.0)
