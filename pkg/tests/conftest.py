from __future__ import annotations

import numpy as np
import pytest

from manycov.design import RegressionData


def random_design(rng: np.random.Generator, n: int, K: int, d: int = 1, *, dummies: bool = False):
    """Random full-rank regression data (Gaussian W, or sparse dummies plus intercept)."""
    if dummies and K:
        W = (rng.random((n, K)) < 0.2).astype(float)
        W[:, 0] = 1.0
    else:
        W = rng.standard_normal((n, K))
    X = rng.standard_normal((n, d)) + (W[:, :1] if K else 0.0)
    y = X @ np.arange(1, d + 1, dtype=float) + rng.standard_normal(n) * (1 + np.abs(X[:, 0]))
    if K:
        y = y + W @ rng.standard_normal(K)
    return RegressionData(y, X, W)


def fe_design(N: int, T: int) -> np.ndarray:
    return np.kron(np.eye(N), np.ones((T, 1)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
