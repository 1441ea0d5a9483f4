"""Shared domain types and the primitive operators used by the ADMM updates.

Coefficients live in a ``p x K`` array whose column ``k`` is the coefficient
vector of dataset ``k``. Whenever a flat vector is needed the panel is stacked
dataset-major (column-major), i.e. ``beta = panel.ravel(order="F")``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class DimensionError(ValueError):
    """Raised when arrays handed to an operation have inconsistent shapes."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MultiDataset:
    """K design matrices with their responses, all sharing the same p predictors."""

    X: tuple[np.ndarray, ...]
    y: tuple[np.ndarray, ...]

    def __init__(self, X: Sequence[np.ndarray], y: Sequence[np.ndarray]):
        if len(X) == 0:
            raise DimensionError("need at least one dataset")
        if len(X) != len(y):
            raise DimensionError(f"{len(X)} design matrices but {len(y)} responses")
        Xs, ys = [], []
        for k, (Xk, yk) in enumerate(zip(X, y)):
            Xk = np.array(Xk, dtype=float, ndmin=2)
            yk = np.array(yk, dtype=float).reshape(-1)
            if Xk.ndim != 2:
                raise DimensionError(f"dataset {k}: design matrix must be 2-d")
            if Xk.shape[0] != yk.shape[0]:
                raise DimensionError(
                    f"dataset {k}: {Xk.shape[0]} rows but {yk.shape[0]} responses"
                )
            if not (np.all(np.isfinite(Xk)) and np.all(np.isfinite(yk))):
                raise ValueError(f"dataset {k}: non-finite entries")
            Xs.append(_frozen(Xk))
            ys.append(_frozen(yk))
        if len({Xk.shape[1] for Xk in Xs}) != 1:
            raise DimensionError("all design matrices must have the same number of columns")
        object.__setattr__(self, "X", tuple(Xs))
        object.__setattr__(self, "y", tuple(ys))

    @property
    def p(self) -> int:
        return self.X[0].shape[1]

    @property
    def K(self) -> int:
        return len(self.X)

    @property
    def n(self) -> list[int]:
        return [Xk.shape[0] for Xk in self.X]

    def subset(self, rows: Sequence[np.ndarray]) -> "MultiDataset":
        """Row-subset every dataset; ``rows[k]`` indexes dataset ``k``."""
        return MultiDataset(
            [Xk[idx] for Xk, idx in zip(self.X, rows)],
            [yk[idx] for yk, idx in zip(self.y, rows)],
        )

    def columns(self, cols: np.ndarray) -> "MultiDataset":
        return MultiDataset([Xk[:, cols] for Xk in self.X], list(self.y))

    def standardized(self) -> "MultiDataset":
        """Z-score every predictor column within each dataset.

        Constant columns are only centered.
        """
        Xs = []
        for Xk in self.X:
            sd = Xk.std(axis=0)
            sd[sd == 0] = 1.0
            Xs.append((Xk - Xk.mean(axis=0)) / sd)
        return MultiDataset(Xs, list(self.y))


@dataclass(frozen=True)
class CommunityPartition:
    """Non-overlapping, exhaustive assignment of predictors to communities.

    ``assignment`` holds 0-based community ids; file formats use 1-based ids.
    """

    assignment: np.ndarray
    L: int
    groups: tuple[np.ndarray, ...] = field(repr=False, compare=False)
    order: np.ndarray = field(repr=False, compare=False)
    starts: np.ndarray = field(repr=False, compare=False)
    contiguous: bool = field(repr=False, compare=False)
    _sizes: np.ndarray = field(repr=False, compare=False)

    def __init__(self, assignment: Sequence[int], L: int | None = None):
        a = np.asarray(assignment)
        if a.ndim != 1 or a.size == 0:
            raise DimensionError("assignment must be a non-empty 1-d sequence")
        if not np.issubdtype(a.dtype, np.integer):
            if not np.all(a == np.round(a)):
                raise ValueError("community ids must be integers")
            a = a.astype(np.int64)
        a = a.astype(np.int64)
        if a.min() < 0:
            raise ValueError("community ids must be non-negative")
        if L is None:
            L = int(a.max()) + 1
        if a.max() >= L:
            raise ValueError(f"community id {int(a.max())} out of range for L={L}")
        groups = tuple(np.flatnonzero(a == l) for l in range(L))
        empty = [l for l, g in enumerate(groups) if g.size == 0]
        if empty:
            raise ValueError(f"communities {empty} have no members")
        object.__setattr__(self, "assignment", _frozen(a))
        object.__setattr__(self, "L", int(L))
        object.__setattr__(self, "groups", groups)
        # sorted-by-community layout used for vectorized block reductions
        object.__setattr__(self, "order", _frozen(np.argsort(a, kind="stable")))
        object.__setattr__(
            self, "starts", _frozen(np.concatenate([[0], np.cumsum([g.size for g in groups])[:-1]]))
        )
        object.__setattr__(self, "contiguous", bool(np.all(np.diff(a) >= 0)))
        object.__setattr__(self, "_sizes", _frozen(np.array([g.size for g in groups])))

    @property
    def p(self) -> int:
        return self.assignment.size

    @property
    def sizes(self) -> list[int]:
        return [g.size for g in self.groups]

    @classmethod
    def from_sizes(cls, sizes: Sequence[int]) -> "CommunityPartition":
        """Contiguous blocks: the first ``sizes[0]`` predictors form community 0, ..."""
        return cls(np.repeat(np.arange(len(sizes)), sizes), len(sizes))


@dataclass(frozen=True)
class PenaltyConfig:
    lambda1: float
    lambda2: float
    sigma: float = 2.0
    epsilon: float = 1e-3
    max_iter: int = 5000

    def __post_init__(self):
        if not (self.lambda1 >= 0 and self.lambda2 >= 0):
            raise ValueError("lambda1 and lambda2 must be non-negative")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be a positive integer")


@dataclass
class AdmmState:
    """Iterates of the splitting scheme, all as stacked (dataset-major) vectors."""

    beta: np.ndarray
    delta: np.ndarray
    eta: np.ndarray
    u: np.ndarray
    v: np.ndarray
    iteration: int = 0

    @classmethod
    def from_panel(cls, panel: np.ndarray) -> "AdmmState":
        """Start state: delta = beta, eta = A beta, zero duals."""
        beta = stack(panel)
        eta = stack(difference_apply(panel))
        return cls(beta.copy(), beta.copy(), eta, np.zeros_like(eta), np.zeros_like(beta))


def check_panel(panel: np.ndarray, p: int, K: int) -> np.ndarray:
    panel = np.asarray(panel, dtype=float)
    if panel.shape != (p, K):
        raise DimensionError(f"panel has shape {panel.shape}, expected {(p, K)}")
    if not np.all(np.isfinite(panel)):
        raise ValueError("panel has non-finite entries")
    return panel


def stack(panel: np.ndarray) -> np.ndarray:
    """Dataset-major stacking of a ``p x m`` block matrix into a length ``p*m`` vector."""
    return np.asarray(panel, dtype=float).ravel(order="F")


def unstack(vec: np.ndarray, p: int) -> np.ndarray:
    return np.asarray(vec, dtype=float).reshape((p, -1), order="F")


def difference_apply(panel: np.ndarray) -> np.ndarray:
    """Adjacent column differences: block ``k`` is ``panel[:, k] - panel[:, k + 1]``.

    This is ``A beta`` with ``A = Delta kron I_p``, returned as a ``p x (K-1)``
    array (empty when K = 1).
    """
    panel = np.asarray(panel, dtype=float)
    return panel[:, :-1] - panel[:, 1:]


def difference_transpose_apply(diffs: np.ndarray, K: int) -> np.ndarray:
    """``A^T`` applied to a ``p x (K-1)`` block matrix; returns ``p x K``."""
    diffs = np.asarray(diffs, dtype=float)
    out = np.zeros((diffs.shape[0], K))
    out[:, :-1] += diffs
    out[:, 1:] -= diffs
    return out


def difference_gram(K: int) -> np.ndarray:
    """The K x K matrix ``Delta^T Delta`` (tridiagonal path Laplacian)."""
    D = np.zeros((K, K))
    for k in range(K - 1):
        D[k, k] += 1.0
        D[k + 1, k + 1] += 1.0
        D[k, k + 1] -= 1.0
        D[k + 1, k] -= 1.0
    return D


def soft_threshold(x, t: float) -> np.ndarray:
    """Elementwise ``sign(x) * max(|x| - t, 0)``."""
    if t < 0:
        raise ValueError("threshold must be non-negative")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def group_shrink(v, t: float) -> np.ndarray:
    """Block soft-thresholding ``max(1 - t / ||v||, 0) * v``; zero maps to zero."""
    if t < 0:
        raise ValueError("threshold must be non-negative")
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm <= t or norm == 0.0:
        return np.zeros_like(v)
    return (1.0 - t / norm) * v


def group_shrink_blocks(D: np.ndarray, partition: CommunityPartition, t: float) -> np.ndarray:
    """Apply :func:`group_shrink` to every (community, column) block of ``D``."""
    if D.shape[1] == 0:
        return np.zeros_like(D)
    Ds = D if partition.contiguous else D[partition.order]
    norms = np.sqrt(np.add.reduceat(Ds * Ds, partition.starts, axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.maximum(1.0 - t / norms, 0.0)
    scale[norms == 0.0] = 0.0
    shrunk = Ds * np.repeat(scale, partition._sizes, axis=0)
    if partition.contiguous:
        return shrunk
    out = np.empty_like(D)
    out[partition.order] = shrunk
    return out


def community_block_norms(panel: np.ndarray, partition: CommunityPartition) -> np.ndarray:
    """``L x (K-1)`` array of ``||beta^k_(l) - beta^{k+1}_(l)||_2``."""
    D = difference_apply(panel)
    if D.shape[1] == 0:
        return np.zeros((partition.L, 0))
    Ds = D if partition.contiguous else D[partition.order]
    return np.sqrt(np.add.reduceat(Ds * Ds, partition.starts, axis=0))
