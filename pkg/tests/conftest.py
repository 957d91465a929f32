import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ahm.fixtures import background, hat_spec, hm_spec, random_perturbation

settings.register_profile("ci", max_examples=25, deadline=None, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=400, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE: dict = {}


def record(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture(params=[(3, 1.0), (4, -0.5)], ids=["n3-a1", "n4-a-0.5"])
def hat(request):
    n, a = request.param
    return hat_spec(n, a)


@pytest.fixture
def hm3():
    return hm_spec(3, 1.0)


@pytest.fixture(params=[3, 4], ids=["n3", "n4"])
def perturbed(request):
    n = request.param
    return random_perturbation(background(n, 0.5), np.random.default_rng(n), 1e-3)
