"""Covariance-update coordinate descent for the plain Lasso.

Deliberately shares no code with the ADMM solvers: the baselines built on it
double as the reference the ADMM path is checked against.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from scipy.special import expit


@njit(cache=True)
def _sweep(G, diag, beta, grad, lam, idx):
    biggest = 0.0
    for j in idx:
        gjj = diag[j]
        old = beta[j]
        new = 0.0
        if gjj > 0.0:
            z = grad[j] + gjj * old
            if z > lam:
                new = (z - lam) / gjj
            elif z < -lam:
                new = (z + lam) / gjj
        d = new - old
        if d != 0.0:
            beta[j] = new
            for i in range(grad.shape[0]):
                grad[i] -= G[j, i] * d
            if abs(d) > biggest:
                biggest = abs(d)
    return biggest


@njit(cache=True)
def _cd(G, c, lam, beta, tol, max_sweeps):
    p = c.shape[0]
    diag = np.empty(p)
    for j in range(p):
        diag[j] = G[j, j]
    grad = c - G @ beta
    everything = np.arange(p)
    for _ in range(max_sweeps):
        if _sweep(G, diag, beta, grad, lam, everything) < tol:
            break
        active = np.flatnonzero(beta)
        for _ in range(max_sweeps):
            if _sweep(G, diag, beta, grad, lam, active) < tol:
                break
    return beta


def lasso_gram(G: np.ndarray, c: np.ndarray, lam: float, beta0=None,
               tol: float = 1e-7, max_sweeps: int = 100_000) -> np.ndarray:
    """Minimize ``0.5 b'Gb - c'b + lam*||b||_1`` by cyclic coordinate descent.

    Full sweeps alternate with sweeps restricted to the active set until a full
    sweep changes no coordinate by more than ``tol``.
    """
    G = np.ascontiguousarray(G, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    beta = np.zeros(c.shape[0]) if beta0 is None else np.array(beta0, dtype=np.float64)
    return _cd(G, c, float(lam), beta, float(tol), int(max_sweeps))


def lasso_fit(X: np.ndarray, y: np.ndarray, lam: float, beta0=None,
              tol: float = 1e-7) -> np.ndarray:
    """Lasso with loss ``(1/2n)||y - Xb||^2``."""
    n = X.shape[0]
    G = X.T @ X / n
    c = X.T @ y / n
    return lasso_gram(G, c, lam, beta0=beta0, tol=tol)


def lasso_path(G: np.ndarray, c: np.ndarray, lambdas, tol: float = 1e-7) -> np.ndarray:
    """Warm-started fits along ``lambdas`` (in the given order); returns ``p x len``."""
    out = np.zeros((c.shape[0], len(lambdas)))
    beta = None
    for i, lam in enumerate(lambdas):
        beta = lasso_gram(G, c, lam, beta0=beta, tol=tol)
        out[:, i] = beta
    return out


def _logistic_value_grad(Xs, ys, weights, beta):
    value = 0.0
    grad = np.zeros_like(beta)
    for X, y, w in zip(Xs, ys, weights):
        z = X @ beta
        value += w * float(np.sum(np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z))) - y * z))
        grad += w * (X.T @ (expit(z) - y))
    return value, grad


def logistic_lasso(Xs, ys, weights, lam: float, beta0=None, tol: float = 1e-8,
                   max_iter: int = 100_000) -> np.ndarray:
    """FISTA for ``sum_k w_k NLL_k(b) + lam ||b||_1`` (NLL summed over observations).

    The step size is the inverse of the global Lipschitz bound
    ``sum_k w_k ||X_k||_2^2 / 4``. Stops when an iterate moves less than ``tol``.
    """
    p = Xs[0].shape[1]
    Lip = sum(w * np.linalg.norm(X, 2) ** 2 / 4.0 for X, w in zip(Xs, weights))
    if Lip == 0.0:
        return np.zeros(p)
    step = 1.0 / Lip
    x = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    z, t = x.copy(), 1.0
    for _ in range(max_iter):
        _, g = _logistic_value_grad(Xs, ys, weights, z)
        w = z - step * g
        x_new = np.sign(w) * np.maximum(np.abs(w) - step * lam, 0.0)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = x_new + ((t - 1.0) / t_new) * (x_new - x)
        moved = np.max(np.abs(x_new - x))
        x, t = x_new, t_new
        if moved < tol:
            break
    return x
