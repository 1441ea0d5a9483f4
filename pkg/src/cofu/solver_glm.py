"""Community-fusion estimator under the logistic model.

Same ADMM scaffold as :mod:`cofu.solver_lr`; only the beta step changes; it
minimizes the smooth, strongly convex subproblem::

    -sum_k (1/n_k) L_k(b^k)
        + sigma/2 (||A b - eta + u/sigma||^2 + ||b - delta + v/sigma||^2)

with L-BFGS, warm-started at the current beta.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize, special

from .core import (
    AdmmState,
    CommunityPartition,
    MultiDataset,
    PenaltyConfig,
    check_panel,
    community_block_norms,
    difference_apply,
    difference_transpose_apply,
    stack,
    unstack,
)
from .solver_lr import FitResult, check_compatible, run_admm

INNER_MAXITER = 200
INNER_MEMORY = 10
INNER_GTOL = 1e-6


@dataclass(frozen=True)
class GlmSpec:
    family: str = "logit"

    def link(self, mu):
        mu = np.asarray(mu, dtype=float)
        return np.log(mu / (1.0 - mu))

    def inverse_link(self, eta):
        return special.expit(eta)


def check_binary(data: MultiDataset) -> None:
    for k, yk in enumerate(data.y):
        if not np.all((yk == 0) | (yk == 1)):
            raise ValueError(f"dataset {k}: logistic responses must be 0/1")


def log1p_exp(z):
    """Overflow-safe ``log(1 + exp(z))``."""
    z = np.asarray(z, dtype=float)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def neg_loglik(data: MultiDataset, panel: np.ndarray) -> float:
    """``-sum_k (1/n_k) L_k(beta^k)`` for the logit model."""
    check_binary(data)
    panel = check_panel(panel, data.p, data.K)
    total = 0.0
    for k, (Xk, yk) in enumerate(zip(data.X, data.y)):
        z = Xk @ panel[:, k]
        total += float(np.sum(log1p_exp(z) - yk * z)) / yk.size
    return total


def glm_objective(data: MultiDataset, partition: CommunityPartition, panel: np.ndarray,
                  cfg: PenaltyConfig) -> float:
    check_compatible(data, partition)
    value = neg_loglik(data, panel) + cfg.lambda1 * np.abs(panel).sum()
    if data.K > 1 and cfg.lambda2 > 0:
        value += cfg.lambda2 * community_block_norms(panel, partition).sum()
    return float(value)


def subproblem(data: MultiDataset, state: AdmmState, sigma: float):
    """Value-and-gradient closure for the beta subproblem (stacked vectors)."""
    p, K = data.p, data.K
    eta_c = unstack(state.eta, p) - unstack(state.u, p) / sigma
    delta_c = unstack(state.delta, p) - unstack(state.v, p) / sigma

    def fun(beta):
        B = unstack(beta, p)
        value = 0.0
        G = np.empty_like(B)
        for k, (Xk, yk) in enumerate(zip(data.X, data.y)):
            z = Xk @ B[:, k]
            n = yk.size
            value += float(np.sum(log1p_exp(z) - yk * z)) / n
            G[:, k] = Xk.T @ (special.expit(z) - yk) / n
        R2 = B - delta_c
        value += 0.5 * sigma * float(np.sum(R2 * R2))
        G += sigma * R2
        if K > 1:
            R1 = difference_apply(B) - eta_c
            value += 0.5 * sigma * float(np.sum(R1 * R1))
            G += sigma * difference_transpose_apply(R1, K)
        return value, stack(G)

    return fun


def glm_beta_update(data: MultiDataset, state: AdmmState, cfg: PenaltyConfig,
                    return_info: bool = False):
    """Minimize the beta subproblem; optionally also report inner convergence.

    Success means ``||grad|| < 1e-6 (1 + ||grad at start||)`` within 200
    L-BFGS iterations.
    """
    fun = subproblem(data, state, cfg.sigma)
    x0 = np.asarray(state.beta, dtype=float)
    _, g0 = fun(x0)
    target = INNER_GTOL * (1.0 + np.linalg.norm(g0))
    x, ok = x0, np.linalg.norm(g0) < target
    if not ok:
        res = optimize.minimize(
            fun, x0, jac=True, method="L-BFGS-B",
            options={
                "maxcor": INNER_MEMORY,
                "maxiter": INNER_MAXITER,
                # inf-norm bound that implies the 2-norm target
                "gtol": target / np.sqrt(x0.size),
                "ftol": 1e-15,
                "maxls": 50,
            },
        )
        x = res.x
        ok = bool(np.linalg.norm(fun(x)[1]) < target)
    if return_info:
        return x, ok
    return x


def solve_glm(data: MultiDataset, partition: CommunityPartition, cfg: PenaltyConfig,
              init: np.ndarray | None = None) -> FitResult:
    """Logistic community-fusion fit. Mirrors :func:`cofu.solver_lr.solve`."""
    check_binary(data)
    check_compatible(data, partition)
    p, K = data.p, data.K
    if init is None:
        init = np.zeros((p, K))
        if K > 1 and cfg.lambda2 > 0:
            init = solve_glm(data, partition, replace(cfg, lambda2=0.0), init=init).panel
    init = check_panel(init, p, K)
    inner = {"failures": 0, "last_ok": True}

    def step(st):
        x, ok = glm_beta_update(data, st, cfg, return_info=True)
        inner["failures"] += not ok
        inner["last_ok"] = ok
        return x

    state, converged, norms = run_admm(AdmmState.from_panel(init), partition, cfg, step)
    panel = unstack(state.delta, p).copy()
    return FitResult(
        panel=panel,
        raw_beta=unstack(state.beta, p).copy(),
        eta=unstack(state.eta, p).copy(),
        iterations=state.iteration,
        converged=converged and inner["last_ok"],
        objective=glm_objective(data, partition, panel, cfg),
        residual_norms=norms,
        init_objective=glm_objective(data, partition, init, cfg),
        inner_failures=inner["failures"],
    )
