import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from decpomdp.problems import random_problem

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def tiny_random(seed, horizon=2, n_states=2, n_actions=(2, 2), n_observations=(2, 2),
                sparsity=0.0):
    return random_problem(
        np.random.default_rng(seed), n_states, n_actions, n_observations, horizon, sparsity
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
