"""Tuning grids, V-fold cross-validation and the two Lasso baselines.

P.Lasso fits one coefficient vector to all datasets at once; S.Lasso fits each
dataset on its own. Both run on the coordinate-descent code in
:mod:`cofu.lasso` (logistic-loss variants on its FISTA routine) and never touch
the ADMM solvers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import CommunityPartition, MultiDataset, PenaltyConfig
from .lasso import lasso_gram, logistic_lasso
from .parallel import pmap
from .solver_glm import log1p_exp, solve_glm
from .solver_lr import FactorCache, solve

CV_LAMBDA2 = (0.001, 0.01, 0.1, 1.0)
ROC_LAMBDA2 = (0.0, 0.001, 0.01, 0.1, 1.0, 10.0)
GRID_RATIO = {"cv": 0.01, "roc": 0.001}
METHODS = ("cofu", "slasso", "plasso")


@dataclass(frozen=True)
class TuningGrid:
    lambda1_values: tuple[float, ...]
    lambda2_values: tuple[float, ...]

    def __post_init__(self):
        if any(not v > 0 for v in self.lambda1_values):
            raise ValueError("lambda1 values must be positive")
        if any(v < 0 for v in self.lambda2_values):
            raise ValueError("lambda2 values must be non-negative")

    @property
    def pairs(self) -> list[tuple[float, float]]:
        return [(l1, l2) for l2 in self.lambda2_values for l1 in self.lambda1_values]


@dataclass
class CvReport:
    lambda1_values: tuple[float, ...]
    lambda2_values: tuple[float, ...]
    mean_loss: np.ndarray  # (n_lambda2, n_lambda1)
    fold_loss: np.ndarray  # (V, n_lambda2, n_lambda1)
    selected: tuple[float, float]
    fold_assignments: list[np.ndarray]
    nonconverged: int = 0
    model: str = "lr"

    def rows(self):
        for j, l2 in enumerate(self.lambda2_values):
            for i, l1 in enumerate(self.lambda1_values):
                yield l1, l2, float(self.mean_loss[j, i])


@dataclass
class GridFits:
    lambda1_values: tuple[float, ...]
    lambda2_values: tuple[float, ...]
    panels: np.ndarray  # (n_lambda2, n_lambda1, p, K)
    converged: np.ndarray = field(default=None)
    iterations: np.ndarray = field(default=None)


def _score_target(yk: np.ndarray, model: str) -> np.ndarray:
    # negative loss gradient at zero is X'(y - mu0)/n with mu0 = 0 (lr) or 1/2 (logit)
    if model == "lr":
        return yk
    if model == "logit":
        return yk - 0.5
    raise ValueError(f"unknown model {model!r}")


def lambda1_max(data: MultiDataset, model: str = "lr") -> float:
    """Smallest lambda1 that zeroes every coefficient when lambda2 = 0."""
    return float(max(np.max(np.abs(Xk.T @ _score_target(yk, model))) / yk.size
                     for Xk, yk in zip(data.X, data.y)))


def pooled_gram(data: MultiDataset) -> tuple[np.ndarray, np.ndarray]:
    """Gram matrix and score of the pooled loss ``(1/K) sum_k (1/2n_k) ||y^k - X^k b||^2``."""
    K = data.K
    G = sum(Xk.T @ Xk / yk.size for Xk, yk in zip(data.X, data.y)) / K
    c = sum(Xk.T @ yk / yk.size for Xk, yk in zip(data.X, data.y)) / K
    return G, c


def pooled_lambda_max(data: MultiDataset, model: str = "lr") -> float:
    c = sum(Xk.T @ _score_target(yk, model) / yk.size for Xk, yk in zip(data.X, data.y)) / data.K
    return float(np.max(np.abs(c)))


def geometric_grid(lmax: float, ratio: float, n: int = 20) -> tuple[float, ...]:
    """``n`` log-spaced values from ``lmax`` down to ``ratio * lmax`` (descending)."""
    vals = np.geomspace(lmax, ratio * lmax, n)
    vals[0], vals[-1] = lmax, ratio * lmax
    return tuple(float(v) for v in vals)


def make_grid(data: MultiDataset, mode: str = "cv", n_lambda1: int = 20,
              lmax: float | None = None, model: str = "lr") -> TuningGrid:
    if mode not in GRID_RATIO:
        raise ValueError(f"unknown grid mode {mode!r}")
    lmax = lambda1_max(data, model) if lmax is None else lmax
    if not lmax > 0:
        raise ValueError(
            "lambda1_max is 0 (every X'y vanishes); the data carry no signal to tune on"
        )
    l2 = CV_LAMBDA2 if mode == "cv" else ROC_LAMBDA2
    return TuningGrid(geometric_grid(lmax, GRID_RATIO[mode], n_lambda1), l2)


def fold_assignments(n: list[int], V: int, seed: int) -> list[np.ndarray]:
    """Independent random V-fold labels per dataset; fold sizes differ by at most one."""
    out = []
    for k, nk in enumerate(n):
        rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(k,)))
        labels = np.empty(nk, dtype=int)
        labels[rng.permutation(nk)] = np.arange(nk) % V
        out.append(labels)
    return out


def fit_cofu(data: MultiDataset, partition: CommunityPartition, cfg: PenaltyConfig,
             model: str = "lr", init=None, cache: FactorCache | None = None):
    if model == "lr":
        return solve(data, partition, cfg, init=init, cache=cache)
    if model == "logit":
        return solve_glm(data, partition, cfg, init=init)
    raise ValueError(f"unknown model {model!r}")


def fit_cofu_grid(data: MultiDataset, partition: CommunityPartition,
                  lambda1_values, lambda2_values, model: str = "lr", sigma: float = 2.0,
                  epsilon: float = 1e-3, max_iter: int = 5000) -> GridFits:
    """Fit every grid pair, sweeping lambda1 in the given order within each lambda2.

    Each fit after the first in a sweep starts from the previous panel; the
    order is fixed, so the result is deterministic.
    """
    cache = FactorCache(data, sigma) if model == "lr" else None
    n1, n2 = len(lambda1_values), len(lambda2_values)
    panels = np.zeros((n2, n1, data.p, data.K))
    converged = np.zeros((n2, n1), dtype=bool)
    iterations = np.zeros((n2, n1), dtype=int)
    for j, l2 in enumerate(lambda2_values):
        init = None
        for i, l1 in enumerate(lambda1_values):
            cfg = PenaltyConfig(l1, l2, sigma=sigma, epsilon=epsilon, max_iter=max_iter)
            res = fit_cofu(data, partition, cfg, model, init=init, cache=cache)
            panels[j, i] = res.panel
            converged[j, i] = res.converged
            iterations[j, i] = res.iterations
            init = res.panel
    return GridFits(tuple(lambda1_values), tuple(lambda2_values), panels, converged, iterations)


def validation_loss(data: MultiDataset, panel: np.ndarray, model: str = "lr") -> float:
    """Summed over datasets: mean squared error (lr) or mean negative log-likelihood (logit)."""
    total = 0.0
    for k, (Xk, yk) in enumerate(zip(data.X, data.y)):
        z = Xk @ panel[:, k]
        if model == "lr":
            total += float(np.mean((yk - z) ** 2))
        else:
            total += float(np.mean(log1p_exp(z) - yk * z))
    return total


def split_fold(data: MultiDataset, folds: list[np.ndarray], v: int):
    train = data.subset([f != v for f in folds])
    valid = data.subset([f == v for f in folds])
    return train, valid


def _select(mean_loss: np.ndarray, l1: tuple, l2: tuple) -> tuple[float, float]:
    """Minimizer of the mean loss; ties go to larger lambda1, then larger lambda2."""
    best = np.nanmin(mean_loss)
    tol = 1e-12 * max(1.0, abs(best))
    cands = [(l1[i], l2[j]) for j in range(len(l2)) for i in range(len(l1))
             if mean_loss[j, i] <= best + tol]
    return max(cands)


def _cofu_fold_task(args):
    data, partition, grid, folds, v, model, sigma, epsilon, max_iter = args
    train, valid = split_fold(data, folds, v)
    fits = fit_cofu_grid(train, partition, grid.lambda1_values, grid.lambda2_values,
                         model, sigma, epsilon, max_iter)
    n2, n1 = fits.converged.shape
    loss = np.array([[validation_loss(valid, fits.panels[j, i], model) for i in range(n1)]
                     for j in range(n2)])
    return loss, int((~fits.converged).sum())


def check_folds(data: MultiDataset, V: int) -> None:
    if V < 2:
        raise ValueError("need at least 2 folds")
    for k, nk in enumerate(data.n):
        if nk < V:
            raise ValueError(f"dataset {k} has {nk} observations, fewer than V={V} folds")


def cv_select(data: MultiDataset, partition: CommunityPartition, grid: TuningGrid,
              V: int = 5, seed: int = 0, model: str = "lr", threads: int | None = 1,
              sigma: float = 2.0, epsilon: float = 1e-3, max_iter: int = 5000) -> CvReport:
    """V-fold CV over the (lambda1, lambda2) grid for the fusion estimator.

    Folds are drawn within each dataset and matched by fold index. Fold tasks
    may run in parallel; losses are reduced in fold order.
    """
    check_folds(data, V)
    folds = fold_assignments(data.n, V, seed)
    tasks = [(data, partition, grid, folds, v, model, sigma, epsilon, max_iter) for v in range(V)]
    results = pmap(_cofu_fold_task, tasks, threads)
    fold_loss = np.stack([r[0] for r in results])
    mean_loss = fold_loss.mean(axis=0)
    selected = _select(mean_loss, grid.lambda1_values, grid.lambda2_values)
    return CvReport(grid.lambda1_values, grid.lambda2_values, mean_loss, fold_loss, selected,
                    folds, sum(r[1] for r in results), model)


# -- baselines -------------------------------------------------------------

def _single(data: MultiDataset, k: int) -> MultiDataset:
    return MultiDataset([data.X[k]], [data.y[k]])


def plasso_path(data: MultiDataset, lambdas, model: str = "lr") -> np.ndarray:
    """Pooled-Lasso coefficient vectors along ``lambdas``; returns ``p x len``."""
    out = np.zeros((data.p, len(lambdas)))
    beta = None
    if model == "lr":
        G, c = pooled_gram(data)
    weights = [1.0 / (data.K * nk) for nk in data.n]
    for i, lam in enumerate(lambdas):
        if model == "lr":
            beta = lasso_gram(G, c, lam, beta0=beta)
        else:
            beta = logistic_lasso(data.X, data.y, weights, lam, beta0=beta)
        out[:, i] = beta
    return out


def fit_plasso(data: MultiDataset, lambda1: float, model: str = "lr") -> np.ndarray:
    """P.Lasso: one Lasso on all datasets pooled, replicated across the K columns.

    The pooled loss averages the per-dataset normalized losses, so stacking
    identical datasets or replicating rows within a dataset leaves the fit
    unchanged.
    """
    beta = plasso_path(data, [lambda1], model)[:, 0]
    return np.repeat(beta[:, None], data.K, axis=1)


def slasso_path(data: MultiDataset, lambdas, model: str = "lr") -> np.ndarray:
    """Separate Lasso per dataset at each shared lambda; returns ``len x p x K``."""
    out = np.zeros((len(lambdas), data.p, data.K))
    for k in range(data.K):
        Xk, yk = data.X[k], data.y[k]
        nk = yk.size
        beta = None
        if model == "lr":
            G, c = Xk.T @ Xk / nk, Xk.T @ yk / nk
        for i, lam in enumerate(lambdas):
            if model == "lr":
                beta = lasso_gram(G, c, lam, beta0=beta)
            else:
                beta = logistic_lasso([Xk], [yk], [1.0 / nk], lam, beta0=beta)
            out[i, :, k] = beta
    return out


def fit_slasso(data: MultiDataset, lambda1_per_k, model: str = "lr") -> np.ndarray:
    """S.Lasso: column k is the Lasso fit of dataset k alone at ``lambda1_per_k[k]``."""
    lams = np.broadcast_to(np.asarray(lambda1_per_k, dtype=float), (data.K,))
    return np.column_stack([
        slasso_path(_single(data, k), [lams[k]], model)[0, :, 0] for k in range(data.K)
    ])


def _cv_lambda(losses: np.ndarray, lambdas) -> float:
    best = np.nanmin(losses)
    tol = 1e-12 * max(1.0, abs(best))
    return max(l for l, v in zip(lambdas, losses) if v <= best + tol)


def cv_slasso(data: MultiDataset, V: int = 5, seed: int = 0, model: str = "lr",
              n_lambda1: int = 20) -> list[float]:
    """Per-dataset V-fold CV; returns the selected lambda1 for each dataset."""
    check_folds(data, V)
    folds = fold_assignments(data.n, V, seed)
    chosen = []
    for k in range(data.K):
        single = _single(data, k)
        lmax = lambda1_max(single, model)
        if lmax == 0:
            chosen.append(0.0)
            continue
        lambdas = geometric_grid(lmax, GRID_RATIO["cv"], n_lambda1)
        losses = np.zeros(len(lambdas))
        for v in range(V):
            train, valid = split_fold(single, [folds[k]], v)
            path = slasso_path(train, lambdas, model)
            losses += [validation_loss(valid, path[i], model) for i in range(len(lambdas))]
        chosen.append(_cv_lambda(losses / V, lambdas))
    return chosen


def cv_plasso(data: MultiDataset, V: int = 5, seed: int = 0, model: str = "lr",
              n_lambda1: int = 20) -> float:
    check_folds(data, V)
    folds = fold_assignments(data.n, V, seed)
    lmax = pooled_lambda_max(data, model)
    if lmax == 0:
        return 0.0
    lambdas = geometric_grid(lmax, GRID_RATIO["cv"], n_lambda1)
    losses = np.zeros(len(lambdas))
    for v in range(V):
        train, valid = split_fold(data, folds, v)
        path = plasso_path(train, lambdas, model)
        for i in range(len(lambdas)):
            panel = np.repeat(path[:, i:i + 1], data.K, axis=1)
            losses[i] += validation_loss(valid, panel, model)
    return _cv_lambda(losses / V, lambdas)


@dataclass
class TunedFit:
    method: str
    panel: np.ndarray
    lambda1: object
    lambda2: float | None = None
    converged: bool = True
    cv: CvReport | None = None


def fit_method_cv(data: MultiDataset, partition: CommunityPartition, method: str,
                  V: int = 5, seed: int = 0, model: str = "lr", threads: int | None = 1,
                  epsilon: float = 1e-3, max_iter: int = 5000) -> TunedFit:
    """CV-tune ``method`` on ``data`` and refit on all of it at the selected tuning."""
    if method == "cofu":
        grid = make_grid(data, "cv", model=model)
        report = cv_select(data, partition, grid, V, seed, model, threads,
                           epsilon=epsilon, max_iter=max_iter)
        l1, l2 = report.selected
        res = fit_cofu(data, partition, PenaltyConfig(l1, l2, epsilon=epsilon, max_iter=max_iter),
                       model)
        return TunedFit(method, res.panel, l1, l2, res.converged, report)
    if method == "slasso":
        lams = cv_slasso(data, V, seed, model)
        return TunedFit(method, fit_slasso(data, lams, model), lams)
    if method == "plasso":
        lam = cv_plasso(data, V, seed, model)
        return TunedFit(method, fit_plasso(data, lam, model), lam)
    raise ValueError(f"unknown method {method!r}")
