"""Fixtures and reporting hooks; the shared helpers live in support.py
under a unique module name so sibling test trees cannot shadow them."""

import numpy as np
import pytest

from support import _CRITERION_LINES


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERION_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
