from __future__ import annotations

import numpy as np
import pytest

from rlalloc import protocol as P
from rlalloc import scenarios as S

# Acceptance tests register one line each; printed at the end of the session.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance():
    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def random_year(rng: np.random.Generator, n: int = 252) -> tuple[np.ndarray, np.ndarray]:
    """Independent normal daily returns for a risky and a safe asset."""
    return rng.normal(0.0004, 0.012, n), rng.normal(0.0001, 0.003, n)


@pytest.fixture(scope="session")
def small_years():
    """Three complete fiscal years of a stationary synthetic market."""
    return P.prepare_years(S.make_market(S.stationary(3, seed=5)))
