"""ADMM solver for the community-fusion penalized least-squares problem.

Minimizes::

    sum_k 1/(2 n_k) ||y^k - X^k b^k||^2 + lambda1 sum_k ||b^k||_1
        + lambda2 sum_{k<K} sum_l ||b^k_(l) - b^{k+1}_(l)||_2

by splitting ``delta = beta`` (lasso copy) and ``eta = A beta`` (adjacent
differences), with duals ``u`` and ``v``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg

from .core import (
    AdmmState,
    CommunityPartition,
    DimensionError,
    MultiDataset,
    PenaltyConfig,
    check_panel,
    community_block_norms,
    difference_apply,
    difference_gram,
    difference_transpose_apply,
    group_shrink_blocks,
    soft_threshold,
    stack,
    unstack,
)


@dataclass
class FitResult:
    panel: np.ndarray
    raw_beta: np.ndarray
    eta: np.ndarray
    iterations: int
    converged: bool
    objective: float
    residual_norms: tuple[float, float, float, float]
    init_objective: float = float("nan")
    inner_failures: int = 0


def data_fingerprint(data: MultiDataset, sigma: float) -> str:
    h = hashlib.sha1()
    h.update(np.float64(sigma).tobytes())
    for Xk, yk in zip(data.X, data.y):
        h.update(np.asarray(Xk.shape).tobytes())
        h.update(np.ascontiguousarray(Xk).tobytes())
        h.update(np.ascontiguousarray(yk).tobytes())
    return h.hexdigest()


def check_compatible(data: MultiDataset, partition: CommunityPartition) -> None:
    if partition.p != data.p:
        raise DimensionError(f"partition covers {partition.p} predictors, data has {data.p}")


def objective(data: MultiDataset, partition: CommunityPartition, panel: np.ndarray,
              cfg: PenaltyConfig) -> float:
    """Penalized least-squares loss of ``panel``."""
    check_compatible(data, partition)
    panel = check_panel(panel, data.p, data.K)
    loss = 0.0
    for k, (Xk, yk) in enumerate(zip(data.X, data.y)):
        r = yk - Xk @ panel[:, k]
        loss += 0.5 * (r @ r) / yk.size
    penalty = cfg.lambda1 * np.abs(panel).sum()
    if data.K > 1 and cfg.lambda2 > 0:
        penalty += cfg.lambda2 * community_block_norms(panel, partition).sum()
    return float(loss + penalty)


class FactorCache:
    """Factorization of ``M = X'X + sigma (A'A + I)`` for a fixed dataset and sigma.

    ``X`` is block diagonal in the size-normalized ``X^k / sqrt(n_k)``. When the
    total sample size is below ``pK`` the solve goes through the Woodbury
    identity around ``sigma (A'A + I) = sigma (T kron I_p)``, whose inverse is
    ``T^{-1} kron I_p / sigma`` with ``T`` only ``K x K``; otherwise ``M`` is
    assembled and Cholesky-factorized directly. Up to ``pK = 1500`` the
    explicit inverse is kept instead, since one matrix-vector product beats two
    triangular solves there. ``M`` does not depend on the tuning parameters, so
    one cache serves a whole grid.
    """

    INVERSE_LIMIT = 1500

    def __init__(self, data: MultiDataset, sigma: float = 2.0, method: str = "auto"):
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        self.sigma = float(sigma)
        self.p, self.K = data.p, data.K
        self.n = data.n
        self.fingerprint = data_fingerprint(data, sigma)
        self.Xs = [Xk / np.sqrt(Xk.shape[0]) for Xk in data.X]
        self.Xty = np.column_stack([Xk.T @ yk / yk.size for Xk, yk in zip(data.X, data.y)])
        T = difference_gram(self.K) + np.eye(self.K)
        self.T = T
        self.Tinv = np.linalg.inv(T)
        N = sum(self.n)
        if method == "auto":
            if self.p * self.K <= self.INVERSE_LIMIT:
                method = "inverse"
            else:
                method = "woodbury" if N < self.p * self.K else "dense"
        if method not in ("woodbury", "dense", "inverse"):
            raise ValueError(f"unknown factorization method {method!r}")
        self.method = method
        try:
            if method == "dense":
                self._factor = linalg.cho_factor(self.dense_matrix(), lower=True)
            elif method == "inverse":
                factor = linalg.cho_factor(self.dense_matrix(), lower=True)
                self._inverse = linalg.cho_solve(factor, np.eye(self.p * self.K))
                self._inverse = 0.5 * (self._inverse + self._inverse.T)
            else:
                self._offsets = np.concatenate([[0], np.cumsum(self.n)])
                C = np.eye(N)
                for k in range(self.K):
                    sk = slice(self._offsets[k], self._offsets[k + 1])
                    for j in range(self.K):
                        if self.Tinv[k, j] == 0.0:
                            continue
                        sj = slice(self._offsets[j], self._offsets[j + 1])
                        C[sk, sj] += (self.Xs[k] @ self.Xs[j].T) * (self.Tinv[k, j] / self.sigma)
                self._factor = linalg.cho_factor(C, lower=True)
        except (linalg.LinAlgError, ValueError) as exc:
            raise linalg.LinAlgError(f"factorization failed: {exc}") from exc

    def dense_matrix(self) -> np.ndarray:
        p, K = self.p, self.K
        M = self.sigma * np.kron(self.T, np.eye(p))
        for k, Xk in enumerate(self.Xs):
            M[k * p:(k + 1) * p, k * p:(k + 1) * p] += Xk.T @ Xk
        return M

    def matvec(self, vec: np.ndarray) -> np.ndarray:
        B = unstack(vec, self.p)
        out = self.sigma * (B @ self.T)
        for k, Xk in enumerate(self.Xs):
            out[:, k] += Xk.T @ (Xk @ B[:, k])
        return stack(out)

    def solve_panel(self, R: np.ndarray) -> np.ndarray:
        """Solve ``M z = r`` with ``r`` and ``z`` given as ``p x K`` panels."""
        if self.method == "inverse":
            return unstack(self._inverse @ stack(R), self.p)
        if self.method == "dense":
            return unstack(linalg.cho_solve(self._factor, stack(R), check_finite=False), self.p)
        Z = R @ (self.Tinv / self.sigma)
        w = np.concatenate([Xk @ Z[:, k] for k, Xk in enumerate(self.Xs)])
        s = linalg.cho_solve(self._factor, w, check_finite=False)
        Q = np.column_stack([
            Xk.T @ s[self._offsets[k]:self._offsets[k + 1]] for k, Xk in enumerate(self.Xs)
        ])
        return Z - Q @ (self.Tinv / self.sigma)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return stack(self.solve_panel(unstack(rhs, self.p)))


def build_factor(data: MultiDataset, sigma: float = 2.0, method: str = "auto") -> FactorCache:
    return FactorCache(data, sigma, method)


def beta_rhs(cache: FactorCache, state: AdmmState) -> np.ndarray:
    """Right-hand side ``X'y + sigma [A'(eta - u/sigma) + delta - v/sigma]`` as a panel."""
    p, K, s = cache.p, cache.K, cache.sigma
    R = cache.Xty + s * unstack(state.delta, p) - unstack(state.v, p)
    if K > 1:
        R = R + difference_transpose_apply(s * unstack(state.eta, p) - unstack(state.u, p), K)
    return R


def beta_update(cache: FactorCache, state: AdmmState) -> np.ndarray:
    return stack(cache.solve_panel(beta_rhs(cache, state)))


def delta_update(beta: np.ndarray, v: np.ndarray, cfg: PenaltyConfig) -> np.ndarray:
    return soft_threshold(beta + v / cfg.sigma, cfg.lambda1 / cfg.sigma)


def eta_update(beta: np.ndarray, u: np.ndarray, partition: CommunityPartition,
               cfg: PenaltyConfig) -> np.ndarray:
    p = partition.p
    arg = difference_apply(unstack(beta, p)) + unstack(u, p) / cfg.sigma
    return stack(group_shrink_blocks(arg, partition, cfg.lambda2 / cfg.sigma))


def dual_update(state: AdmmState, cfg: PenaltyConfig, p: int) -> tuple[np.ndarray, np.ndarray]:
    Abeta = stack(difference_apply(unstack(state.beta, p)))
    u = state.u + cfg.sigma * (Abeta - state.eta)
    v = state.v + cfg.sigma * (state.beta - state.delta)
    return u, v


def run_admm(state: AdmmState, partition: CommunityPartition, cfg: PenaltyConfig,
             beta_step) -> tuple[AdmmState, bool, tuple[float, float, float, float]]:
    """Shared ADMM loop; ``beta_step(state)`` returns the new stacked beta.

    Stops once ``max(||A b - eta||, ||b - delta||, ||d delta||, ||d eta||) < epsilon``.
    """
    p = partition.p
    sigma = cfg.sigma
    t1 = cfg.lambda1 / sigma
    t2 = cfg.lambda2 / sigma
    norms = (np.inf,) * 4
    converged = False
    for it in range(1, int(cfg.max_iter) + 1):
        beta = beta_step(state)
        B = unstack(beta, p)
        delta = soft_threshold(beta + state.v / sigma, t1)
        AB = difference_apply(B)
        if AB.shape[1]:
            eta = stack(group_shrink_blocks(AB + unstack(state.u, p) / sigma, partition, t2))
        else:
            eta = state.eta
        r_fuse = stack(AB) - eta
        r_copy = beta - delta
        d_delta = delta - state.delta
        d_eta = eta - state.eta
        norms = (
            math.sqrt(r_fuse @ r_fuse),
            math.sqrt(r_copy @ r_copy),
            math.sqrt(d_delta @ d_delta),
            math.sqrt(d_eta @ d_eta),
        )
        state = AdmmState(beta, delta, eta, state.u + sigma * r_fuse,
                          state.v + sigma * r_copy, it)
        if max(norms) < cfg.epsilon:
            converged = True
            break
    return state, converged, norms


def solve(data: MultiDataset, partition: CommunityPartition, cfg: PenaltyConfig,
          init: np.ndarray | None = None, cache: FactorCache | None = None) -> FitResult:
    """Fit the community-fusion estimator at ``(cfg.lambda1, cfg.lambda2)``.

    Without ``init`` the iterations start from the unfused (``lambda2 = 0``) fit
    at the same ``lambda1``, itself computed by this solver from zero. The
    reported panel is the sparse copy ``delta``; ``raw_beta`` keeps ``beta``.
    Hitting ``max_iter`` is not an error: ``converged`` is simply False.
    """
    check_compatible(data, partition)
    p, K = data.p, data.K
    if cache is None:
        cache = FactorCache(data, cfg.sigma)
    elif cache.sigma != cfg.sigma or (cache.p, cache.K) != (p, K):
        raise ValueError("factor cache was built for a different problem")
    if init is None:
        init = np.zeros((p, K))
        if K > 1 and cfg.lambda2 > 0:
            init = solve(data, partition, replace(cfg, lambda2=0.0), init=init, cache=cache).panel
    init = check_panel(init, p, K)

    state = AdmmState.from_panel(init)

    def step(st):
        return stack(cache.solve_panel(beta_rhs(cache, st)))

    state, converged, norms = run_admm(state, partition, cfg, step)
    panel = unstack(state.delta, p).copy()
    return FitResult(
        panel=panel,
        raw_beta=unstack(state.beta, p).copy(),
        eta=unstack(state.eta, p).copy(),
        iterations=state.iteration,
        converged=converged,
        objective=objective(data, partition, panel, cfg),
        residual_norms=norms,
        init_objective=objective(data, partition, init, cfg),
    )
