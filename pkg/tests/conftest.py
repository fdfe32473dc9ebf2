import numpy as np
import pytest

from mmhet import Dataset, MMParams, mm_mean


def make_curve_data(rng, n=40, vmax=100.0, km=20.0, noise=1.0, s_lo=1.0, s_hi=100.0):
    s = np.linspace(s_lo, s_hi, n)
    y = mm_mean(s, MMParams(vmax, km)) + rng.standard_normal(n) * noise
    return Dataset(s=s, y=y)


@pytest.fixture
def rng():
    return np.random.default_rng(20417)


@pytest.fixture
def noiseless_data():
    s = np.linspace(1.0, 100.0, 50)
    return Dataset(s=s, y=mm_mean(s, MMParams(100.0, 20.0)))
