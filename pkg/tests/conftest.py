import numpy as np
import pytest

from modisom.kernel import AlgebraElement, ModuleVector
from modisom.sampling import complex_gaussian


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)


def random_vector(rng, d, k, norm=None):
    v = ModuleVector(complex_gaussian(rng, (k, d, d)))
    if norm is not None:
        from modisom.kernel import vec_norm

        v = (norm / vec_norm(v)) * v
    return v


def random_algebra(rng, d):
    return AlgebraElement(complex_gaussian(rng, (d, d)))
