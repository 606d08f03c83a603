import numpy as np
import pytest

from wonhamsplit.diagnostics import (bm_grid_hitting_probability, bm_hitting_probability,
                                     f_test)


def test_reflection_value():
    assert bm_hitting_probability(3.0, 1.0) == pytest.approx(2.6998e-3, rel=2e-5)
    assert bm_hitting_probability(0.0, 2.0) == 1.0


def test_grid_monitoring_lowers_the_probability():
    exact = bm_hitting_probability(3.0, 1.0)
    assert bm_grid_hitting_probability(3.0, 1.0, 1e-3) < exact
    assert bm_grid_hitting_probability(3.0, 1.0, 1e-12) == pytest.approx(exact, rel=1e-5)


def test_f_test():
    rng = np.random.default_rng(0)
    a = rng.normal(size=200)
    assert f_test(a, a) == (1.0, 1.0)
    ratio, p = f_test(a * 2, a)
    assert ratio == pytest.approx(4.0) and p < 1e-10
    _, p = f_test(rng.normal(size=200), rng.normal(size=200))
    assert p > 0.01
