import numpy as np
import pytest

from slowpoison.model_core import Dataset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_dataset(generator, n, d, max_row_norm=1.0):
    from oracles import random_instance

    X, y = random_instance(generator, n, d, max_row_norm)
    return Dataset(X, y)
