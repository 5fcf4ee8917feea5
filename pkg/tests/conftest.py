"""Shared fixtures and independent oracles used across the test suite.

The oracles here deliberately avoid the library's own fold machinery:
plain numpy loops, dense solves, quadrature, and brute-force scans.
"""

import numpy as np
import pytest

from foldml import Dataset


def make_regression(seed, n, d, noise=0.1):
    """Random full-rank regression problem with an intercept column."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, d))
    X[:, 0] = 1.0
    beta = rng.normal(size=d)
    y = X @ beta + rng.normal(0.0, noise, size=n)
    return Dataset(X, y)


def make_logistic(seed, n, d, scale=1.0):
    """Random non-separable logistic problem: moderate true coefficients
    leave plenty of label noise on both sides of the boundary."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, d))
    X[:, 0] = 1.0
    beta = scale * rng.normal(size=d)
    prob = 1.0 / (1.0 + np.exp(-(X @ beta)))
    y = (rng.uniform(size=n) < prob).astype(float)
    return Dataset(X, y)


def ols_oracle(X, y):
    """Normal-equation solution computed directly with dense numpy."""
    return np.linalg.solve(X.T @ X, X.T @ y)


def newton_logistic_oracle(X, y, tol=1e-12, max_iter=200):
    """Dense Newton ascent on the binary logistic log-likelihood."""
    beta = np.zeros(X.shape[1])
    for _ in range(max_iter):
        mu = 1.0 / (1.0 + np.exp(-(X @ beta)))
        grad = X.T @ (y - mu)
        hess = X.T @ (X * (mu * (1.0 - mu))[:, None])
        step = np.linalg.solve(hess, grad)
        beta = beta + step
        if np.abs(step).max() < tol:
            break
    return beta


def logistic_ll_oracle(X, y, beta):
    eta = X @ beta
    sign = 2.0 * y - 1.0
    return -float(np.logaddexp(0.0, -sign * eta).sum())


def lloyd_oracle(X, centroids0, max_iter=100):
    """Straightforward dense Lloyd loop: assign to nearest centroid,
    reposition to barycenters, stop at a fixed point. Returns (centroids,
    assignments, objective)."""
    C = centroids0.copy()
    prev = None
    for _ in range(max_iter):
        d2 = ((X[:, :, None] - C[None, :, :]) ** 2).sum(axis=1)
        assign = d2.argmin(axis=1)
        if prev is not None and np.array_equal(assign, prev):
            break
        new = C.copy()
        for j in range(C.shape[1]):
            members = X[assign == j]
            if len(members):
                new[:, j] = members.mean(axis=0)
        C = new
        prev = assign
    d2 = ((X[:, :, None] - C[None, :, :]) ** 2).sum(axis=1)
    assign = d2.argmin(axis=1)
    return C, assign, float(d2.min(axis=1).sum())


def kmeans_objective_oracle(X, centroids):
    d2 = ((X[:, :, None] - centroids[None, :, :]) ** 2).sum(axis=1)
    return float(d2.min(axis=1).sum())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
