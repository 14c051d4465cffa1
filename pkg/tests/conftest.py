import numpy as np
import pytest

from coxballs.laws import Kernel, MarkLaw, RadiusLaw
from coxballs.measures import TestMeasure
from coxballs.pointprocess import ModelSpec, ScalingLaw


def make_model(scaling=None, marks=None, beta=1.5, kernel=None, d=1):
    return ModelSpec(
        d,
        kernel or Kernel("gaussian", 1.0, d),
        RadiusLaw(beta, 1.0),
        marks or MarkLaw.rademacher(),
        scaling or ScalingLaw("local", 0.0, 2.0, 1.0, 1.0),
    )


@pytest.fixture
def reference_model():
    """d=1, Pareto(1.5, 1), Gaussian h=1, Rademacher marks, kappa=1, lambda=rho**-2."""
    return make_model()


@pytest.fixture
def unit():
    return TestMeasure.interval(0.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
