import numpy as np
import pytest

from odcal.harness.scenario import generate_scenario
from odcal.network import Network, PathSet, Segment, Zone, route_od_pairs


def chain_network(n=3, length=1000.0, lanes=1, vmax=25.0, cap=1800.0):
    """``n`` segments in a line; zone 0 enters at the first, zone 1 exits at the last."""
    segs = [
        Segment(i, length, lanes, vmax, cap, (i + 1,) if i + 1 < n else ())
        for i in range(n)
    ]
    return Network(segs, [Zone(0, 0, 0), Zone(1, n - 1, n - 1)])


def diamond_network():
    """Two routes 0->1->3->4 (100 s) and 0->2->3->4 (120 s) between zones 0 and 1."""
    segs = [
        Segment(0, 100.0, 1, 10.0, 1800.0, (1, 2)),
        Segment(1, 500.0, 2, 10.0, 1800.0, (3,)),
        Segment(2, 700.0, 2, 10.0, 1800.0, (3,)),
        Segment(3, 300.0, 2, 10.0, 1800.0, (4,)),
        Segment(4, 100.0, 1, 10.0, 1800.0, ()),
    ]
    return Network(segs, [Zone(0, 0, 0), Zone(1, 4, 4)])


def shared_network():
    """Two ODs merging on segment 3: routes [0, 3, 4] and [1, 2, 3, 4]."""
    segs = [
        Segment(0, 800.0, 1, 25.0, 1800.0, (3,)),
        Segment(1, 400.0, 1, 25.0, 1800.0, (2,)),
        Segment(2, 600.0, 2, 30.0, 2000.0, (3,)),
        Segment(3, 1500.0, 2, 30.0, 2000.0, (4,)),
        Segment(4, 500.0, 1, 25.0, 1800.0, ()),
    ]
    zones = [Zone(0, 0, 0), Zone(1, 1, 1), Zone(2, 4, 4)]
    net = Network(segs, zones)
    return net, route_od_pairs(net, [(0, 2), (1, 2)])


@pytest.fixture
def chain():
    return chain_network()


@pytest.fixture
def diamond():
    return diamond_network()


@pytest.fixture
def shared():
    return shared_network()


@pytest.fixture(scope="session")
def small_scenario():
    return generate_scenario(40, 12, "medium", seed=5)


@pytest.fixture(scope="session")
def low_scenario():
    return generate_scenario(40, 12, "low", seed=6)


def single_path(net, od=(0, 1), route=None):
    route = route if route is not None else list(range(net.n_segments))
    return PathSet([od], [route])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary -------------------------------------------------------

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
