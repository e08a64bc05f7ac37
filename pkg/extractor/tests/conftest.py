"""Fixtures and reporting hooks for the feature-export tests; shared
helpers live in feature_helpers.py under a unique module name."""

import pytest

pytest.importorskip("torch")
pytest.importorskip("cifarfeat")

from feature_helpers import _CRITERION_LINES, StubNet


def pytest_terminal_summary(terminalreporter):
    if not _CRITERION_LINES:
        return
    terminalreporter.section("feature-extraction criteria")
    for line in _CRITERION_LINES:
        terminalreporter.write_line(line)


@pytest.fixture
def stub_net():
    return StubNet().eval()
