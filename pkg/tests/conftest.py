import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from quadctrl.controllability import analyze
from quadctrl.synthesis import grammian
from quadctrl.model import Basis, LinearControlSystem

settings.register_profile(
    "default", deadline=None, max_examples=25, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")


def random_controllable(rng, d, m, complex_=False, scale=1.0, max_cond=1e6, max_gram_cond=None, T=1.0):
    """Random system whose Kalman matrix is comfortably full rank.

    ``max_gram_cond`` additionally bounds the condition number of the
    horizon-``T`` Grammian, i.e. keeps the steering problem numerically
    well posed at the accuracy being tested.
    """
    while True:
        A = rng.normal(size=(d, d))
        C = rng.normal(size=(d, m))
        if complex_:
            A = A + 1j * rng.normal(size=(d, d))
            C = C + 1j * rng.normal(size=(d, m))
        A *= scale / max(1.0, np.linalg.norm(A, 2))
        sys = LinearControlSystem(A, C, Basis.CUSTOM)
        rep = analyze(sys)
        s = rep.singular_values
        if rep.controllable and s[0] / s[d - 1] < max_cond:
            if max_gram_cond is None or np.linalg.cond(grammian(sys, T)) < max_gram_cond:
                return sys


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
