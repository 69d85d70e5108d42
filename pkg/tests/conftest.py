import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def card():
    from irsense.thermal_network import CardSpec
    return CardSpec()


@pytest.fixture
def second_card():
    from irsense.thermal_network import CardSpec
    return CardSpec.second_board()


@pytest.fixture(scope="session")
def fixture_dir():
    return Path(__file__).parent / "fixtures"


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
