import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_stochastic(rng, n, density=1.0):
    """Random row-stochastic matrix; ``density < 1`` zeroes entries at random."""
    a = rng.random((n, n))
    if density < 1:
        a *= rng.random((n, n)) < density
        for i in range(n):
            if a[i].sum() == 0:
                a[i, rng.integers(n)] = 1.0
    return a / a.sum(axis=1, keepdims=True)


def random_irreducible(rng, n, density=0.5):
    """Random chain with a Hamiltonian cycle ``0 -> 1 -> ... -> n-1 -> 0`` embedded."""
    a = rng.random((n, n)) * (rng.random((n, n)) < density)
    for i in range(n):
        a[i, (i + 1) % n] += 0.5 + rng.random()
    return a / a.sum(axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# -- acceptance report ----------------------------------------------------

_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance():
    """``record(criterion, ok, detail)`` logs one verdict line and returns ``ok``."""

    def record(criterion: str, ok: bool, detail: str = "") -> bool:
        line = f"{criterion} {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
