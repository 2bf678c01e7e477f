import math

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

KAPPAS = (3.0, 4.0, 16.0 / 3.0, 6.0, 7.5)


@pytest.fixture(params=KAPPAS, ids=lambda k: f"kappa={k:.4g}")
def kappa(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def lambda_crit(k):
    return 1.0 - 2.0 / k - 3.0 * k / 32.0


def bernoulli_rate(x):
    """Closed-form Λ* of the ±1 coin."""
    if abs(x) == 1.0:
        return math.log(2.0)
    return 0.5 * (1 + x) * math.log1p(x) + 0.5 * (1 - x) * math.log1p(-x)


_VERDICTS = []


@pytest.fixture
def verdict(request):
    """Record and print one PASS/FAIL line for an acceptance criterion."""
    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
