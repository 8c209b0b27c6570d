import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rigel.simplex import ObjectiveError, OptimizerConfig, minimize


def test_quadratic():
    r = minimize(lambda x: (x[0] - 3.0) ** 2, [0.0])
    assert r.converged
    assert abs(r.argmin[0] - 3.0) < 1e-4
    assert r.value < 1e-8


def test_rosenbrock():
    def rosen(x):
        return 100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2

    r = minimize(rosen, [-1.2, 1.0], OptimizerConfig(tolerance=1e-8))
    assert np.allclose(r.argmin, [1.0, 1.0], atol=1e-3)


def test_budget_exhaustion_returns_best_so_far():
    r = minimize(lambda x: x[0] ** 2, [5.0], OptimizerConfig(max_iterations=1, restart=False))
    assert not r.converged
    assert r.value <= 25.0
    assert r.value == pytest.approx(r.argmin[0] ** 2)


def test_nonfinite_objective_raises():
    with pytest.raises(ObjectiveError):
        minimize(lambda x: math.nan, [1.0, 2.0])


def test_bad_config():
    with pytest.raises(ValueError):
        OptimizerConfig(contraction=1.5)
    with pytest.raises(ValueError):
        minimize(lambda x: 0.0, [math.inf])


def test_deterministic():
    f = lambda x: (x[0] - 1) ** 2 + 3 * (x[1] + 2) ** 2 + x[0] * x[1]
    a = minimize(f, [0.0, 0.0])
    b = minimize(f, [0.0, 0.0])
    assert np.array_equal(a.argmin, b.argmin) and a.iterations == b.iterations


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=5),
       st.lists(st.floats(0.5, 5), min_size=5, max_size=5))
def test_separable_quadratics(center, weights):
    c = np.array(center)
    w = np.array(weights[:len(c)])
    r = minimize(lambda x: float(np.sum(w * (x - c) ** 2)), np.zeros(len(c)),
                 OptimizerConfig(tolerance=1e-9))
    assert np.allclose(r.argmin, c, atol=1e-4)
    # never worse than the start
    assert r.value <= float(np.sum(w * c ** 2))
