import math

import numpy as np
import pytest

from backend.monitors import TimeSeriesRecord
from backend.profile import catenoid, cone, cosine, reciprocal_mollified
from backend.solver import StepControl, StopThresholds


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run full-resolution flows (M=400)")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-resolution flow, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def catenoid_profile():
    return catenoid(1.0)


@pytest.fixture
def cone_profile():
    return cone(1.0, 0.0)


@pytest.fixture
def cosine_profile():
    return cosine(2.0, 1.0, 1.0, window=(-1.0, 7.0))


@pytest.fixture
def reciprocal_profile():
    return reciprocal_mollified(0.0)


@pytest.fixture
def control():
    return StepControl()


@pytest.fixture
def quick_thresholds():
    """Looser convergence settings for reduced grids."""
    return StopThresholds(eps_h=1e-4, eps_r=1e-5, trailing_window=5, t_max=40.0)


@pytest.fixture
def make_series():
    """Build monitor records from arrays of t, r and sup|A|²."""

    def build(t, r, sup_A2):
        records = []
        for ti, ri, ai in zip(t, r, sup_A2):
            records.append(TimeSeriesRecord(
                t=float(ti), r=float(ri), sup_A2=float(ai), sup_H=math.sqrt(ai),
                area=math.pi * ri * ri, boundary_grad=0.0, u_min=0.0, u_max=0.0,
                u_boundary=0.0, r_dot=0.0, h_min=0.0, h_max=0.0, sup_grad=0.0,
                dissipation=0.0,
            ))
        return records

    return build


@pytest.fixture
def pinch_times():
    return np.linspace(0.5, 0.99, 16)
