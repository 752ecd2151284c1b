import numpy as np
import pytest

from curvegas import _backend
from curvegas.curves import CurveSpec, build_arclength_curve

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def circle():
    return build_arclength_curve(CurveSpec.circle(1.0))


@pytest.fixture(scope="session")
def ellipse():
    return build_arclength_curve(CurveSpec.ellipse(2.0, 1.0))


@pytest.fixture(params=_backend.available())
def backend(request, monkeypatch):
    """Run a test once per importable kernel backend."""
    monkeypatch.setattr(_backend, "kernels", _backend.load(request.param))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def random_config(rng, N, length, min_gap=1e-3):
    """Sorted configuration in E with every cyclic gap above ``min_gap``."""
    while True:
        x = np.sort(rng.uniform(0.0, length, N))
        gaps = np.diff(np.append(x, x[0] + length))
        if gaps.min() > min_gap:
            return x


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
