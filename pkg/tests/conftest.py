import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.register_profile("thorough", max_examples=400, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_spd(rng, d, floor=0.2):
    G = rng.standard_normal((d, d))
    return G @ G.T / d + floor * np.eye(d)


def random_orthogonal(rng, d):
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    return Q * np.sign(np.diag(R))


def simplex_grid(p, step):
    """All points of the probability simplex with coordinates on a ``step`` lattice."""
    k = int(round(1 / step))
    if p == 2:
        a = np.arange(k + 1) / k
        return np.column_stack([a, 1 - a])
    pts = [(i, j, k - i - j) for i in range(k + 1) for j in range(k + 1 - i)]
    return np.array(pts, dtype=float) / k
