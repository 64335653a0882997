import numpy as np
import pytest
from hypothesis import settings

from eepolitex import StochasticPolicy, random_unichain

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


def random_policy(S, A, rng):
    return StochasticPolicy(rng.dirichlet(np.ones(A), size=S))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_mdp(rng):
    return random_unichain(5, 3, rng=rng)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion for the run summary."""

    def _report(number: int, name: str, ok: bool, detail: str) -> bool:
        line = f"acceptance {number} [{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
