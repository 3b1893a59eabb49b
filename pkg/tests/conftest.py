import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from detsum.suite import small_model

settings.register_profile(
    "default",
    derandomize=True,
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def model3():
    # 1D, three spatial points, Mtot = 6
    return small_model(3)


@pytest.fixture(scope="session")
def model4():
    return small_model(4)


# acceptance criteria report ---------------------------------------------------------

ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance():
    """Record ``(criterion, ok, detail)``; lines are printed in the summary."""

    def record(name: str, ok: bool, detail: str) -> bool:
        ACCEPTANCE[name] = (bool(ok), detail)
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda n: (int(n[1:].split("(")[0]), n)):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
