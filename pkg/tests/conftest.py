import numpy as np
import pytest

from srtlab.laws import TailSpec, build_law, custom_law

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def two_step():
    """p(1) = p(2) = 1/2."""
    return custom_law([0.0, 0.5, 0.5])


@pytest.fixture(scope="session")
def uniform3():
    return custom_law([0.0, 1 / 3, 1 / 3, 1 / 3])


@pytest.fixture(scope="session")
def deterministic():
    return custom_law([0.0, 1.0])


@pytest.fixture(scope="session")
def pure07():
    return build_law(TailSpec(0.7), 1 << 16)


@pytest.fixture(scope="session")
def pure04():
    return build_law(TailSpec(0.4), 1 << 16)


@pytest.fixture(scope="session")
def sym15():
    return build_law(TailSpec(1.5, support="centered-two-sided"), 4000)


def all_family_specs():
    return [
        TailSpec(0.7),
        TailSpec(0.4, family="log-power", beta_l=1.0),
        TailSpec(0.5, family="boundary-half", beta_l=1.0),
        TailSpec(0.6, family="oscillating", osc_amplitude=0.2, osc_exponent=0.5),
        TailSpec(0.3, family="spike-perturbed"),
    ]


def brute_power(p: np.ndarray, n: int, x: int) -> float:
    """P(S_n = x) by explicit recursion over the last step (independent of the engine)."""
    if n == 1:
        return float(p[x]) if 0 <= x < p.size else 0.0
    return sum(p[w] * brute_power(p, n - 1, x - w) for w in range(1, min(x, p.size - 1) + 1) if p[w] > 0)
