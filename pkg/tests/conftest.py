import numpy as np
import pytest

from segrisk.model import Categorical, Gaussian, HmmModel, identity_model, m2_model, sample


@pytest.fixture
def m2():
    return m2_model()


@pytest.fixture
def mid():
    return identity_model()


def random_small_model(rng, sparse=False):
    """Random categorical HMM with |S| <= 3, K <= 4 and an entrywise-positive transition."""
    S = int(rng.integers(2, 4))
    K = int(rng.integers(2, 5))
    P = rng.dirichlet(np.ones(S), size=S)
    F = rng.dirichlet(np.ones(K), size=S)
    if sparse:
        mask = rng.random((S, K)) < 0.3
        mask[np.arange(S), rng.integers(0, K, S)] = False
        F = np.where(mask, 0.0, F)
        F /= F.sum(axis=1, keepdims=True)
    init = "stationary" if rng.random() < 0.5 else rng.dirichlet(np.ones(S))
    return HmmModel(P, Categorical(F), init)


def random_instances(count, seed=2024, max_n=8):
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        model = random_small_model(rng, sparse=(k % 3 == 0))
        n = int(rng.integers(1, max_n + 1))
        x = sample(model, n, seed=int(rng.integers(2**32))).x
        out.append((model, x))
    return out


@pytest.fixture(scope="session")
def small_instances():
    return random_instances(200)


def gaussian_model():
    return HmmModel(
        np.array([[0.95, 0.05], [0.1, 0.9]]),
        Gaussian(np.array([0.0, 2.0]), np.array([1.0, 0.7])),
    )
