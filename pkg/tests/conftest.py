import numpy as np
import pytest

from dyson_cbm import set_backend


@pytest.fixture(params=["numba", "numpy"])
def each_backend(request):
    prev = set_backend(request.param)
    yield request.param
    set_backend(prev)


@pytest.fixture
def numpy_backend():
    prev = set_backend("numpy")
    yield
    set_backend(prev)


def ordered_points(rng, n, lo=-5.0, hi=5.0, sep=1e-3):
    """Strictly increasing points in [lo, hi] separated by at least ``sep``."""
    while True:
        x = np.sort(rng.uniform(lo, hi, n))
        if n == 1 or np.min(np.diff(x)) >= sep:
            return x


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
