"""Identification, estimation and prediction metrics, plus resampling summaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import CommunityPartition, MultiDataset, community_block_norms
from .parallel import pmap
from .selection import (
    METHODS,
    TuningGrid,
    fit_cofu_grid,
    fit_method_cv,
    lambda1_max,
    plasso_path,
    pooled_lambda_max,
    slasso_path,
)

COMMONALITY_THRESHOLD = 0.01
# community-level ROC treats "differs between adjacent datasets" as the positive class
COMMUNITY_POSITIVE = "different"


@dataclass(frozen=True)
class IdentificationTruth:
    effects: np.ndarray  # p x K, True where the true coefficient is nonzero
    commonality: np.ndarray  # L x (K-1), True where adjacent blocks are identical

    @classmethod
    def from_panel(cls, panel: np.ndarray, partition: CommunityPartition) -> "IdentificationTruth":
        return cls(np.asarray(panel) != 0, detect_commonality(panel, partition, 0.0))


@dataclass
class RocCurve:
    points: list[tuple[float, float]]  # envelope vertices, sorted by FPR
    auc: float


@dataclass
class RocResult:
    table: list[dict]  # one row per grid point
    curve: RocCurve
    target: str
    method: str


def detect_commonality(panel: np.ndarray, partition: CommunityPartition,
                       threshold: float = COMMONALITY_THRESHOLD) -> np.ndarray:
    """True where ``||beta^k_(l) - beta^{k+1}_(l)||_2 < threshold`` (or the blocks coincide)."""
    norms = community_block_norms(np.asarray(panel, dtype=float), partition)
    return (norms < threshold) | (norms == 0.0)


def _rates(pred: np.ndarray, truth: np.ndarray) -> tuple[float | None, float | None]:
    pred = np.asarray(pred, dtype=bool).ravel()
    truth = np.asarray(truth, dtype=bool).ravel()
    if pred.shape != truth.shape:
        raise ValueError("prediction and truth shapes differ")
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    tpr = float((pred & truth).sum()) / n_pos if n_pos else None
    fpr = float((pred & ~truth).sum()) / n_neg if n_neg else None
    return tpr, fpr


def effect_rates(panel: np.ndarray, truth: np.ndarray, zero_tol: float = 0.0):
    """(TPR, FPR) of nonzero-effect selection over all p x K cells; None when undefined."""
    truth = truth.effects if isinstance(truth, IdentificationTruth) else truth
    return _rates(np.abs(panel) > zero_tol, truth)


def community_rates(labels: np.ndarray, truth: np.ndarray):
    """(TPR, FPR) for detecting *differences*; inputs are commonality labels."""
    truth = truth.commonality if isinstance(truth, IdentificationTruth) else truth
    return _rates(~np.asarray(labels, dtype=bool), ~np.asarray(truth, dtype=bool))


def _upper_hull(pts: list[tuple[float, float]]) -> list[tuple[float, float]]:
    hull: list[tuple[float, float]] = []
    for x, y in pts:
        while len(hull) >= 2:
            (ox, oy), (ax, ay) = hull[-2], hull[-1]
            if (ax - ox) * (y - oy) - (ay - oy) * (x - ox) > 0:
                hull.pop()
            else:
                break
        hull.append((x, y))
    return hull


def roc_auc(points) -> RocCurve:
    """Envelope of (FPR, TPR) operating points and the trapezoidal area under it.

    The envelope is the upper concave hull of the points together with (0, 0)
    and (1, 1), i.e. the best curve reachable by mixing operating points.
    """
    pts = [(float(f), float(t)) for f, t in points]
    if not pts:
        raise ValueError("no ROC points")
    for f, t in pts:
        if not (0.0 <= f <= 1.0 and 0.0 <= t <= 1.0):
            raise ValueError(f"ROC point {(f, t)} outside the unit square")
    best: dict[float, float] = {0.0: 0.0, 1.0: 1.0}
    for f, t in pts:
        # only the highest TPR at each FPR can lie on the upper envelope
        best[f] = max(best.get(f, 0.0), t)
    hull = _upper_hull(sorted(best.items()))
    xs = np.array([h[0] for h in hull])
    ys = np.array([h[1] for h in hull])
    auc = float(np.sum(np.diff(xs) * (ys[1:] + ys[:-1]) / 2.0))
    return RocCurve(hull, auc)


def _point(panel, truth: IdentificationTruth, partition, target):
    if target == "effects":
        return effect_rates(panel, truth)
    return community_rates(detect_commonality(panel, partition), truth)


@dataclass
class GridPanels:
    """Fitted panels over a tuning grid, in sweep order."""

    method: str
    rows: list[dict]  # lambda1, lambda2, converged
    panels: list[np.ndarray]


def grid_panels(data: MultiDataset, partition: CommunityPartition, grid: TuningGrid,
                method: str = "cofu", model: str = "lr", epsilon: float = 1e-3,
                max_iter: int = 5000) -> GridPanels:
    """Fit ``method`` at every tuning value of ``grid``.

    CoFu sweeps the full grid. S.Lasso uses the lambda1 values only (shared by
    all datasets). P.Lasso rescales the lambda1 sequence so its top value is
    the pooled problem's own zeroing threshold.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    rows, panels = [], []
    if method == "cofu":
        fits = fit_cofu_grid(data, partition, grid.lambda1_values, grid.lambda2_values,
                             model, epsilon=epsilon, max_iter=max_iter)
        for j, l2 in enumerate(grid.lambda2_values):
            for i, l1 in enumerate(grid.lambda1_values):
                rows.append(dict(lambda1=l1, lambda2=l2, converged=bool(fits.converged[j, i])))
                panels.append(fits.panels[j, i])
    elif method == "slasso":
        path = slasso_path(data, grid.lambda1_values, model)
        for i, l1 in enumerate(grid.lambda1_values):
            rows.append(dict(lambda1=l1, lambda2=float("nan"), converged=True))
            panels.append(path[i])
    else:
        scale = pooled_lambda_max(data, model) / max(grid.lambda1_values)
        lambdas = [l * scale for l in grid.lambda1_values]
        path = plasso_path(data, lambdas, model)
        for i, l1 in enumerate(lambdas):
            rows.append(dict(lambda1=l1, lambda2=float("nan"), converged=True))
            panels.append(np.repeat(path[:, i:i + 1], data.K, axis=1))
    return GridPanels(method, rows, panels)


def roc_from_panels(fits: GridPanels, truth: IdentificationTruth,
                    partition: CommunityPartition, target: str = "effects") -> RocResult:
    """ROC over pre-computed grid fits. Points with undefined rates are dropped;
    non-converged fits are kept and flagged in the table."""
    if target not in ("effects", "communities"):
        raise ValueError(f"unknown ROC target {target!r}")
    if fits.method == "plasso" and target == "communities":
        raise ValueError("P.Lasso forces identical columns and cannot identify community differences")
    table = []
    for row, panel in zip(fits.rows, fits.panels):
        tpr, fpr = _point(panel, truth, partition, target)
        table.append(dict(row, fpr=fpr, tpr=tpr))
    usable = [(r["fpr"], r["tpr"]) for r in table if r["fpr"] is not None and r["tpr"] is not None]
    if not usable:
        raise ValueError("truth has no positives or no negatives; ROC undefined")
    return RocResult(table, roc_auc(usable), target, fits.method)


def grid_roc(data: MultiDataset, partition: CommunityPartition, truth: IdentificationTruth,
             grid: TuningGrid, target: str = "effects", method: str = "cofu",
             model: str = "lr", epsilon: float = 1e-3, max_iter: int = 5000) -> RocResult:
    """One (FPR, TPR) point per tuning value, then the envelope AUC."""
    if target not in ("effects", "communities"):
        raise ValueError(f"unknown ROC target {target!r}")
    if method == "plasso" and target == "communities":
        raise ValueError("P.Lasso forces identical columns and cannot identify community differences")
    fits = grid_panels(data, partition, grid, method, model, epsilon, max_iter)
    return roc_from_panels(fits, truth, partition, target)


def ermse(panel: np.ndarray, truth_panel: np.ndarray) -> float:
    """``sqrt(sum_k ||beta^k - hat beta^k||^2)``."""
    d = np.asarray(truth_panel, dtype=float) - np.asarray(panel, dtype=float)
    return float(np.sqrt(np.sum(d * d)))


def prmse(data: MultiDataset, panel: np.ndarray) -> float:
    """``sqrt(sum_k ||y^k - X^k hat beta^k||^2)`` (not normalized by sample size)."""
    total = 0.0
    for k, (Xk, yk) in enumerate(zip(data.X, data.y)):
        r = yk - Xk @ panel[:, k]
        total += float(r @ r)
    return float(np.sqrt(total))


def prmse_normalized(data: MultiDataset, panel: np.ndarray) -> float:
    return prmse(data, panel) / np.sqrt(sum(data.n))


def split_sizes(n: int, ratio=(2, 1)) -> tuple[int, int]:
    a, b = ratio
    n_train = -(-a * n // (a + b))
    return n_train, n - n_train


def train_test_split(data: MultiDataset, ratio=(2, 1), seed: int = 0):
    train_rows, test_rows = [], []
    for k, nk in enumerate(data.n):
        rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(k,)))
        perm = rng.permutation(nk)
        n_train, _ = split_sizes(nk, ratio)
        train_rows.append(np.sort(perm[:n_train]))
        test_rows.append(np.sort(perm[n_train:]))
    return data.subset(train_rows), data.subset(test_rows)


def tuned_fit(data, partition, method, V=5, seed=0, model="lr", threads=1):
    if lambda1_max(data, model) == 0.0:
        # no covariate is correlated with any response: every method fits zero
        return np.zeros((data.p, data.K))
    return fit_method_cv(data, partition, method, V, seed, model, threads).panel


def holdout_rmse(data: MultiDataset, partition: CommunityPartition, method: str,
                 split_ratio=(2, 1), seed: int = 0, model: str = "lr", V: int = 5,
                 threads: int | None = 1) -> float:
    """Per-observation RMSE on a random test split after a CV-tuned fit on the rest."""
    train, test = train_test_split(data, split_ratio, seed)
    panel = tuned_fit(train, partition, method, V, seed, model, threads)
    return prmse_normalized(test, panel)


def _ooi_task(args):
    data, partition, method, seed, b, model, V = args
    rows = []
    for k, nk in enumerate(data.n):
        rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(b, k)))
        rows.append(np.sort(rng.permutation(nk)[:split_sizes(nk)[0]]))
    sub = data.subset(rows)
    panel = tuned_fit(sub, partition, method, V, seed + b, model, 1)
    return np.any(panel != 0, axis=1)


def ooi(data: MultiDataset, partition: CommunityPartition, method: str, resamples: int = 100,
        seed: int = 0, model: str = "lr", V: int = 5, threads: int | None = 1) -> np.ndarray:
    """Observed occurrence index: selection frequency of each predictor over 2:1 subsamples."""
    if resamples < 1:
        raise ValueError("need at least one resample")
    tasks = [(data, partition, method, seed, b, model, V) for b in range(resamples)]
    picks = pmap(_ooi_task, tasks, threads)
    return np.mean(np.stack(picks), axis=0)


def marginal_screen(data: MultiDataset, alpha: float = 0.05) -> np.ndarray:
    """Indices of predictors whose Pearson correlation with the response is
    significant (two-sided t-test) in at least one dataset."""
    keep = np.zeros(data.p, dtype=bool)
    for Xk, yk in zip(data.X, data.y):
        n = yk.size
        Xc = Xk - Xk.mean(axis=0)
        yc = yk - yk.mean()
        denom = np.sqrt((Xc * Xc).sum(axis=0) * (yc @ yc))
        with np.errstate(invalid="ignore", divide="ignore"):
            r = (Xc.T @ yc) / denom
            r = np.clip(r, -1.0, 1.0)
            t = r * np.sqrt((n - 2) / (1.0 - r * r))
        pval = 2.0 * stats.t.sf(np.abs(t), df=n - 2)
        keep |= np.nan_to_num(pval, nan=1.0) < alpha
    return np.flatnonzero(keep)
