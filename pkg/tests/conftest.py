import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from progen import problems_of  # noqa: E402


@pytest.fixture
def problems():
    """Build verification problems from inline ST text."""
    return problems_of


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running randomized suites")
    config.addinivalue_line("markers", "external: needs NuSMV or CBMC binaries")


_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance():
    """Collect one summary line per acceptance criterion."""
    return _ACCEPTANCE.append


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
