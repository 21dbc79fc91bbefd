import sys
from importlib import resources
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from reenactd.auditlog import parse_log  # noqa: E402
from reenactd.history import execute_history  # noqa: E402

TESTS = Path(__file__).parent


def running_example_text() -> str:
    return resources.files("reenactd").joinpath("data/running_example.log").read_text()


@pytest.fixture(scope="session")
def example_text():
    return running_example_text()


@pytest.fixture(scope="session")
def example():
    return parse_log(running_example_text())


@pytest.fixture(scope="session")
def example_state(example):
    return execute_history(example)


@pytest.fixture
def golden():
    return TESTS / "golden"


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    results = getattr(acceptance, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
