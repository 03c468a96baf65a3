import numpy as np
import pytest

from mcsbi.model import builtin_model, parse_model

BIRTH_DEATH = """
param k = 5.0
param d = 1.0
species X = 0
reaction birth: 0 -> X @ k
reaction death: X -> 0 @ d*X
"""

PURE_DEATH = """
param d = 1.0
species X = 1
reaction death: X -> 0 @ d*X
"""


@pytest.fixture(scope="session")
def sir():
    return builtin_model("sir")


@pytest.fixture(scope="session")
def birth_death():
    return parse_model(BIRTH_DEATH)


@pytest.fixture(scope="session")
def pure_death():
    return parse_model(PURE_DEATH)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance_report(request):
    """Record one pass/fail line per acceptance criterion; shown in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, {})

    def report(number, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
        lines[number] = line
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
