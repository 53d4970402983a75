import pytest

from multihop_aoi import DistSpec, Network, Link


def line_network(n_links, dist=None, buffer=1):
    dist = dist or DistSpec.deterministic(1.0)
    return Network(n_links + 1, tuple(Link(i, i + 1, buffer, dist) for i in range(n_links)))


@pytest.fixture
def line():
    return line_network


VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
