import numpy as np
import pytest

from varndrr.model import DimensionsConfig, init_params

# (criterion, passed, detail) rows filled in by test_acceptance.py
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


TINY = DimensionsConfig(d_z=3, d_x1=7, d_x2=7, d_h1=5, d_h2=5, d_hy=5, d_h1p=5, d_h2p=5, d_m=4, d_y=2)


@pytest.fixture
def tiny_dims():
    return TINY


@pytest.fixture
def tiny_params():
    # larger than the training init so every nonlinearity is exercised
    return init_params(TINY, np.random.default_rng(1234), std=0.5)


def random_instance(rng, dims=TINY, positive=None):
    x1 = (rng.random(dims.d_x1) < 0.4).astype(float)
    x2 = (rng.random(dims.d_x2) < 0.4).astype(float)
    pos = rng.random() < 0.5 if positive is None else positive
    y = np.array([1.0, 0.0]) if pos else np.array([0.0, 1.0])
    return x1, x2, y
