from __future__ import annotations

import os
import re

import pytest

from groupdraw.model import load_instance

FIGURE_SCALE = os.environ.get("GROUPDRAW_FIGURE_SCALE") == "1"

_CRITERION = re.compile(r"test_criterion_(\d+)")
_outcomes: dict[int, tuple[str, str]] = {}


def pytest_collection_modifyitems(config, items):
    if FIGURE_SCALE:
        return
    skip = pytest.mark.skip(reason="set GROUPDRAW_FIGURE_SCALE=1 to run figure-scale simulations")
    for item in items:
        if "figure_scale" in item.keywords:
            item.add_marker(skip)


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        name = report.nodeid.split("::")[-1]
        _outcomes[n] = (status, name)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        status, name = _outcomes[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {name}")


@pytest.fixture(scope="session")
def wc2018():
    return load_instance("wc2018")


@pytest.fixture(scope="session")
def wc2022():
    return load_instance("wc2022")


@pytest.fixture(scope="session")
def example1():
    return load_instance("example1")
