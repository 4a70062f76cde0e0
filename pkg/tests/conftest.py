import pytest

from holdsim.fixtures import builtin_fixture
from holdsim.headway import build_virtual_map, expected_dwell_fixed_point


@pytest.fixture(scope="session")
def line():
    return builtin_fixture("he2019")


@pytest.fixture(scope="session")
def vmap_esh(line):
    dwells, esh = expected_dwell_fixed_point(line)
    return build_virtual_map(line, dwells), esh


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("#")[1].split()[0])):
            terminalreporter.write_line(line)
