import math

import pytest

from navisim.trace import MobilityTrace, Position, Track


def stationary_trace(points, duration=math.inf):
    """Trace of parked vehicles: {id: (x, y)}."""
    return MobilityTrace({v: Track(Position(*p)) for v, p in points.items()}, duration)


@pytest.fixture
def parked():
    return stationary_trace


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for _, _, line in sorted(results):
        terminalreporter.write_line(line)
