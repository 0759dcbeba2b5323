import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def unit_vectors(dim):
    """Hypothesis strategy for unit vectors with a non-negligible last component."""
    from hypothesis import strategies as st

    comp = st.floats(-1, 1, allow_nan=False)
    return (st.tuples(*[comp] * dim)
            .map(np.array)
            .filter(lambda v: np.linalg.norm(v) > 0.1)
            .map(lambda v: v / np.linalg.norm(v))
            .filter(lambda v: abs(v[-1]) > 1e-3))


CRITERIA: dict[int, str] = {}


@pytest.fixture
def report():
    """Record the one-line outcome of an acceptance criterion."""

    def record(number: int, ok: bool, detail: str):
        CRITERIA[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])
