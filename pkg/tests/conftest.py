import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cvfrank.ranks import analyze  # noqa: E402
from cvfrank.ring import SystemParams  # noqa: E402


@pytest.fixture(scope="session")
def analysis33():
    return analyze(SystemParams(3, 3))


@pytest.fixture(scope="session")
def analysis44():
    return analyze(SystemParams(4, 4))


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is not None and module.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in module.RESULTS:
            terminalreporter.write_line(line)
