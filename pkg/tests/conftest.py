import numpy as np
import pytest


def make_spd(k, seed, jitter=1.0):
    """Random symmetric positive definite matrix B B^T + jitter I."""
    rng = np.random.default_rng(seed)
    b = rng.standard_normal((k, k))
    return b @ b.T + jitter * np.eye(k)


def make_instance(seed, n=4, k=8, m=16, gap=0.3):
    """Weights plus an aligned sparse/dense calibration pair."""
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((n, k))
    xhat = rng.standard_normal((k, m))
    xtilde = xhat + gap * rng.standard_normal((k, m))
    return w, xhat, xtilde


@pytest.fixture
def rng():
    return np.random.default_rng(0)
