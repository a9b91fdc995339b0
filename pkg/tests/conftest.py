import numpy as np
import pytest

from brascpd import DenseTensor, FactorModel
from brascpd.tensor import reconstruct


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def make_exact(rng, shape=(5, 4, 3), rank=2, positive=True):
    draw = rng.random if positive else rng.standard_normal
    truth = FactorModel([draw((s, rank)) for s in shape])
    return DenseTensor(reconstruct(truth.factors)), truth


@pytest.fixture
def exact_small(rng):
    """Noiseless rank-2 tensor of shape 5x4x3 and its factors."""
    return make_exact(rng)
