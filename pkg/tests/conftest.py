import numpy as np
import pytest

from core.domain import Dataset
from core.synth import generate_preset, make_rng


@pytest.fixture
def rng():
    return make_rng(20240601)


@pytest.fixture
def make_dataset():
    """随机一维数据：L ~ U(low, high)，Y ~ Bernoulli(p)，p 随 L 线性变化"""
    def factory(n, seed, low=0.0, high=100.0, slope=True):
        g = make_rng(seed)
        l = g.uniform(low, high, size=n)
        p = 0.2 + 0.6 * (l - low) / (high - low) if slope else np.full(n, 0.5)
        y = (g.random(n) < p).astype(np.int8)
        return Dataset(l=l, y=y)
    return factory


@pytest.fixture(scope="session")
def paper_uniform():
    return generate_preset("paper-uniform", 50000, 7)


@pytest.fixture(scope="session")
def paper_truncnormal():
    return generate_preset("paper-truncnormal", 50000, 11)
