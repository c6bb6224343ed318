"""Shared fixtures and the acceptance-criteria summary hook.

Tests marked ``@pytest.mark.acceptance("<criterion>")`` feed a PASS/FAIL
line per criterion printed after the run, so the release gate is readable
at a glance. A criterion passes only if every test carrying its name
passed.
"""

from __future__ import annotations

import numpy as np
import pytest

_ACCEPTANCE: dict[str, list[bool]] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(name): release-gate criterion this test verifies"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    name = mark.args[0]
    if rep.when == "call":
        _ACCEPTANCE.setdefault(name, []).append(rep.passed)
    elif rep.failed:  # setup/teardown crash counts against the criterion
        _ACCEPTANCE.setdefault(name, []).append(False)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        verdict = "PASS" if all(_ACCEPTANCE[name]) else "FAIL"
        terminalreporter.write_line(f"{name}: {verdict}")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
