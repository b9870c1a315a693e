import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from schnull.weights import WeightEvaluator, WeightParams

settings.register_profile(
    "default", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", deadline=None, max_examples=200)
settings.load_profile("default")


@pytest.fixture(scope="session")
def practical_ev():
    """Weights with ell rescaled to O(1e-3) and sigma = 4: plain float64 works."""
    return WeightEvaluator.build(WeightParams(scaling="practical", sigma_override=4.0), (0.3, 0.7))


@pytest.fixture(scope="session")
def exact_ev():
    return WeightEvaluator.build(WeightParams(scaling="exact"), (0.3, 0.7))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture(scope="session")
def acceptance_log():
    """Criterion number -> one-line verdict, echoed in the terminal summary."""
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[k])
