import numpy as np
import pytest
from hypothesis import settings

from wonhamsplit import LevelSchedule, SwitchingModel

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def bm():
    return SwitchingModel.build([[0.0]])


@pytest.fixture(scope="session")
def two_mode():
    # nominal mode drifts away from the levels, degraded mode toward them
    return SwitchingModel.build([[-0.5], [1.5]], [[0.0, 0.1], [1.0, 0.0]],
                                theta_probs=[1.0, 0.0])


@pytest.fixture(scope="session")
def planar():
    """Two-dimensional, three-mode affine model with logistic rates."""
    A = np.array([[[-1.0, 0.5], [0.0, -0.3]],
                  [[0.2, 0.0], [0.1, 0.4]],
                  [[0.0, 1.0], [-1.0, 0.0]]])
    c = np.array([[0.0, 1.0], [0.5, -0.5], [1.0, 0.0]])
    from wonhamsplit.model import DriftSpec, InitialLaw, RateSpec
    lb = np.array([[0.0, 1.0, 0.5], [2.0, 0.0, 1.0], [0.3, 0.7, 0.0]])
    w = np.arange(18, dtype=float).reshape(3, 3, 2) / 10 - 0.8
    beta = np.array([[0.0, 0.5, -0.5], [1.0, 0.0, 0.2], [-1.0, 0.3, 0.0]])
    init = InitialLaw(np.array([0.1, -0.2]), 0.3, np.array([0.2, 0.5, 0.3]))
    return SwitchingModel(2, 3, DriftSpec.affine(A, c), RateSpec.logistic(lb, w, beta), init)


@pytest.fixture(scope="session")
def three_levels():
    return LevelSchedule((1.0, 2.0, 3.0), 1.0)
