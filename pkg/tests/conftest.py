import numpy as np
import pytest

from markovmirror import TransitionKernel, random_ergodic


@pytest.fixture
def two_state():
    # pi = (2/3, 1/3), second eigenvalue 0.7, tau_mix = 3
    return TransitionKernel(np.array([[0.9, 0.1], [0.2, 0.8]]))


@pytest.fixture
def dense8():
    return random_ergodic(8, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(20260816)
