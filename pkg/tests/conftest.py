import numpy as np
import pytest

from waoimf.core import scalar_type, uniform_population

# acceptance outcomes, printed once at the end of the session
ACCEPTANCE: dict = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def unit_type():
    return scalar_type(1.0, 1.0)


@pytest.fixture
def six_types():
    from waoimf.experiments import FIG4_A, FIG4_KW
    return [scalar_type(a, k, id=str(j)) for j, (a, k) in enumerate(zip(FIG4_A, FIG4_KW))]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def scalar_pop(params, agents_per_type=1):
    types = [scalar_type(a, k, id=str(j)) for j, (a, k) in enumerate(params)]
    return uniform_population(types, agents_per_type)
