import numpy as np
import pytest

from hjhom.grid import GridFunction
from hjhom.hamiltonians import coefficient, model_bpm


@pytest.fixture(scope="session")
def eikonal_ham():
    # H(x, y, p) = |p|^2 - cos(2 pi y)
    return model_bpm("one", "cos_y", 2.0)


@pytest.fixture(scope="session")
def unit_a():
    return coefficient("one")


@pytest.fixture(scope="session")
def wavy_a():
    return coefficient("two_plus_cos_y")


def trig_poly(seed: int, n: int, modes: int = 4, scale: float = 1.0) -> GridFunction:
    rng = np.random.default_rng(seed)
    x = np.arange(n) / n
    vals = np.zeros(n)
    for k in range(1, modes + 1):
        vals += rng.normal() * np.cos(2 * np.pi * k * x) / k
        vals += rng.normal() * np.sin(2 * np.pi * k * x) / k
    return GridFunction(scale * vals)
