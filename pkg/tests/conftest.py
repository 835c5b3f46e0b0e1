import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from skewfa.model import ComponentParams, MixtureModel  # noqa: E402

DATA = Path(__file__).parent / "data"


def recovery_truth(nus=(5.0, 8.0)):
    """g=2, p=6, q=2, r=2 CFUSTFA model used by the recovery and selection experiments."""
    p, q = 6, 2
    rng = np.random.default_rng(12345)
    B1 = rng.normal(size=(p, q))
    B2 = rng.normal(size=(p, q))
    c1 = ComponentParams(0.45, np.zeros(p), B1, [[2.0, 0.0], [0.0, 1.5]], np.full(p, 0.5), nus[0])
    c2 = ComponentParams(0.55, [4.0, -4.0, 3.0, 0.0, 2.0, -2.0], B2, [[-1.5, 0.5], [0.0, -2.0]], np.full(p, 0.4), nus[1])
    return MixtureModel((c1, c2), "cfustfa")


def selection_truth():
    """g=2, p=6, q=2, r=2 CFUSTFA model with two strong skewness directions per component."""
    p = 6
    rng = np.random.default_rng(2024)
    B1 = rng.normal(size=(p, 2))
    B2 = rng.normal(size=(p, 2))
    c1 = ComponentParams(0.5, np.zeros(p), B1, [[3.0, 0.0], [0.0, 3.0]], np.full(p, 0.3), 6.0)
    c2 = ComponentParams(0.5, [5.0, -5.0, 4.0, 0.0, 3.0, -3.0], B2, [[-3.0, 0.0], [0.0, -2.5]], np.full(p, 0.3), 10.0)
    return MixtureModel((c1, c2), "cfustfa")


def toy_model():
    """g=2, p=2, q=1, r=1 model for the quadrature oracle."""
    c1 = ComponentParams(0.4, [0.5, -0.2], [[1.2], [0.7]], [[1.5]], [0.6, 0.9], 6.0)
    c2 = ComponentParams(0.6, [-1.0, 1.0], [[0.5], [-1.1]], [[-0.8]], [1.1, 0.4], 4.5)
    return MixtureModel((c1, c2), "cfustfa")


TOY_POINTS = np.array(
    [[0.1, 0.3], [2.0, 1.0], [-1.0, 1.5], [3.0, -2.0], [0.5, 0.5],
     [-2.0, 2.0], [1.0, 0.0], [0.0, -1.0], [4.0, 3.0], [-3.0, -3.0]]
)


def small_skew_model(family="cfustfa"):
    """g=2, p=4, q=1, r=1 well-separated model for quick fits."""
    c1 = ComponentParams(0.5, [0.0, 0.0, 0.0, 0.0], [[1.0], [0.8], [0.6], [0.4]], [[1.5]], [0.3, 0.3, 0.3, 0.3], 6.0)
    c2 = ComponentParams(0.5, [5.0, -5.0, 4.0, 4.0], [[0.5], [-0.7], [0.9], [0.3]], [[-1.2]], [0.4, 0.2, 0.3, 0.5], 9.0)
    model = MixtureModel((c1, c2), "cfustfa")
    if family == "cfustfa":
        return model
    from dataclasses import replace

    from skewfa.model import Family

    family = Family.parse(family)
    comps = []
    for c in model.components:
        delta = c.Delta if family.skewed else np.zeros((1, 0))
        comps.append(replace(c, Delta=delta, nu=c.nu if family.has_nu else np.inf))
    return MixtureModel(tuple(comps), family)


@pytest.fixture(scope="session")
def data_dir():
    return DATA


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
