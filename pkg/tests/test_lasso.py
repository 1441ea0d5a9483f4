import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cofu.core import soft_threshold
from cofu.lasso import lasso_fit, lasso_gram, lasso_path, logistic_lasso


def test_orthogonal_design_closed_form():
    # with X'X/n = I the lasso is soft-thresholding of X'y/n
    n, p = 8, 4
    Q, _ = np.linalg.qr(np.random.default_rng(0).normal(size=(n, p)))
    X = Q * np.sqrt(n)
    y = np.random.default_rng(1).normal(size=n)
    for lam in (0.0, 0.1, 0.5):
        assert np.allclose(lasso_fit(X, y, lam, tol=1e-14), soft_threshold(X.T @ y / n, lam), atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000), st.floats(0.001, 1.0))
def test_kkt_conditions(seed, lam):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 8))
    y = X[:, 0] - X[:, 3] + rng.normal(size=30)
    b = lasso_fit(X, y, lam, tol=1e-12)
    g = X.T @ (y - X @ b) / 30
    on = b != 0
    assert np.allclose(g[on], lam * np.sign(b[on]), atol=1e-8)
    assert np.all(np.abs(g[~on]) <= lam + 1e-8)


def test_path_and_warm_start_agree():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(40, 10))
    y = rng.normal(size=40)
    G, c = X.T @ X / 40, X.T @ y / 40
    lams = [0.3, 0.1, 0.03]
    path = lasso_path(G, c, lams, tol=1e-12)
    for i, lam in enumerate(lams):
        assert np.allclose(path[:, i], lasso_gram(G, c, lam, tol=1e-12), atol=1e-9)
    assert np.all(lasso_gram(G, c, np.max(np.abs(c)) * 1.0001) == 0)


def test_cvxpy_reference():
    cp = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(5)
    X = rng.normal(size=(25, 6))
    y = rng.normal(size=25)
    b = cp.Variable(6)
    cp.Problem(cp.Minimize(cp.sum_squares(y - X @ b) / 50 + 0.05 * cp.norm1(b))).solve(solver=cp.CLARABEL)
    assert np.allclose(lasso_fit(X, y, 0.05, tol=1e-12), b.value, atol=1e-6)


def test_logistic_lasso_kkt():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(80, 5))
    y = (rng.random(80) < 1 / (1 + np.exp(-X[:, 0]))).astype(float)
    lam = 0.02
    b = logistic_lasso([X], [y], [1 / 80], lam, tol=1e-13)
    g = X.T @ (1 / (1 + np.exp(-X @ b)) - y) / 80
    on = b != 0
    assert np.allclose(-g[on], lam * np.sign(b[on]), atol=1e-6)
    assert np.all(np.abs(g[~on]) <= lam + 1e-6)
