import numpy as np
import pytest

from oparq.arq import OutageProfile

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def worked_profile():
    # lambda_p = 0.5, eps_s1 = 0.1, eps_s2 = 0.5: beta = -0.25, T = 0.55
    return OutageProfile(eps_s1=0.1, eps_s2=0.5, eps_p1=0.01, eps_p2=0.2, lambda_p=0.5)


def random_profile(rng: np.random.Generator) -> OutageProfile:
    e1 = rng.uniform(0.0, 0.4)
    e2 = rng.uniform(e1, 1.0)
    p1 = rng.uniform(0.0, 0.2)
    p2 = rng.uniform(p1, 1.0)
    return OutageProfile(e1, e2, p1, p2, rng.uniform(0.0, 1.0))
