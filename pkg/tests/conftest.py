import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from witnesscert import ghz_game, table4_state  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def game():
    return ghz_game()


@pytest.fixture(scope="session")
def ideal_game():
    return ghz_game(1.0, 1.0)


@pytest.fixture(scope="session")
def rho_table4():
    return table4_state()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
