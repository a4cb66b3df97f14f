import numpy as np
import pytest

from driftlab.rng import RngStream


@pytest.fixture
def rng():
    return RngStream(1234)


def central_diff(fn, x, h=1e-6):
    """Elementwise central finite difference of a scalar-valued fn of x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    out = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn(x)
        flat[i] = orig - h
        fm = fn(x)
        flat[i] = orig
        out[i] = (fp - fm) / (2.0 * h)
    return g
