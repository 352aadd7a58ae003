import numpy as np
import pytest

from csaqr import Dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_dataset(rng, n=30, p=3, intercept=True, seed_shift=0):
    """Random regression dataset with an optional leading all-ones column."""
    X = rng.standard_normal((n, p))
    if intercept:
        X[:, 0] = 1.0
    beta = rng.standard_normal(p)
    y = X @ beta + rng.standard_normal(n)
    return Dataset(y=y, X=X, intercept_col=0 if intercept else None)


def check_objective(data, cols, tau, theta):
    """Mean check loss of theta on the selected columns (independent path)."""
    r = data.y - data.X[:, list(cols)] @ np.asarray(theta)
    return float(np.mean(r * (tau - (r <= 0))))
