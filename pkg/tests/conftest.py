import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from conformal_bound.bound import CAP_GRID
from conformal_bound.metric import ConformalMetric
from conformal_bound.spectral import normalize

settings.register_profile(
    "default", deadline=None, max_examples=30, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def normalized_s2():
    """Normalized random S^2 metrics, cached across tests."""
    cache = {}

    def get(seed):
        if seed not in cache:
            cache[seed] = normalize(ConformalMetric.random(2, 3, 0.3, rng=seed))
        return cache[seed]

    return get


@pytest.fixture(scope="session")
def cap_source():
    def make(N):
        return lambda a: N.cap_measure(a, **CAP_GRID[N.n])

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion; printed at the end."""

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}  {title}: {detail}"
        print(line)
        request.config.stash[_ACCEPTANCE].append((number, line))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
