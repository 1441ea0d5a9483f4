import numpy as np
import pytest

from cofu.core import CommunityPartition, MultiDataset, PenaltyConfig
from cofu.lasso import lasso_fit
from cofu.selection import (
    _select,
    cv_select,
    fit_plasso,
    fit_slasso,
    fold_assignments,
    geometric_grid,
    lambda1_max,
    make_grid,
    pooled_lambda_max,
    slasso_path,
)
from cofu.solver_lr import solve


def _data(seed, p=6, K=2, n=30):
    rng = np.random.default_rng(seed)
    X = [rng.normal(size=(n, p)) for _ in range(K)]
    y = [Xk[:, 0] - 0.5 * Xk[:, 1] + rng.normal(size=n) for Xk in X]
    return MultiDataset(X, y)


def test_lambda1_max_examples():
    assert lambda1_max(MultiDataset([np.ones((3, 2))] * 2, [np.zeros(3)] * 2)) == 0.0
    assert lambda1_max(MultiDataset([np.eye(2)], [[2.0, -4.0]])) == 2.0
    d = _data(0)
    dup = MultiDataset(list(d.X) + [d.X[0]], list(d.y) + [d.y[0]])
    assert lambda1_max(dup) == lambda1_max(d)


@pytest.mark.parametrize("model", ["lr", "logit"])
def test_lambda1_max_zeroes_the_fit(model):
    d = _data(1)
    if model == "logit":
        d = MultiDataset(d.X, [(yk > 0).astype(float) for yk in d.y])
    lmax = lambda1_max(d, model)
    assert np.all(fit_slasso(d, [lmax * (1 + 1e-9)] * 2, model) == 0)
    assert np.any(fit_slasso(d, [lmax * 0.95] * 2, model) != 0)
    pmax = pooled_lambda_max(d, model)
    assert np.all(fit_plasso(d, pmax * (1 + 1e-9), model) == 0)
    assert np.any(fit_plasso(d, pmax * 0.95, model) != 0)


def test_grids():
    d = MultiDataset([np.eye(2)], [[2.0, 2.0]])  # lambda1_max = 1
    g = make_grid(d, "cv")
    assert g.lambda1_values[0] == 1.0 and g.lambda1_values[-1] == 0.01
    assert len(g.pairs) == 80 and g.lambda2_values == (0.001, 0.01, 0.1, 1.0)
    r = make_grid(d, "roc")
    assert len(r.pairs) == 120 and r.lambda1_values[-1] == pytest.approx(0.001, rel=1e-15)
    ratios = np.diff(np.log(geometric_grid(3.7, 0.01, 20)))
    assert np.ptp(ratios) < 1e-12
    with pytest.raises(ValueError):
        make_grid(MultiDataset([np.eye(2)], [[0.0, 0.0]]))


def test_fold_sizes():
    folds = fold_assignments([200, 200, 200], 5, seed=3)
    for f in folds:
        assert np.bincount(f).tolist() == [40] * 5
    assert not np.array_equal(folds[0], folds[1])
    assert all(np.array_equal(a, b) for a, b in zip(folds, fold_assignments([200] * 3, 5, seed=3)))
    uneven = fold_assignments([23], 5, 0)[0]
    assert np.ptp(np.bincount(uneven)) <= 1


def test_select_tie_breaking():
    l1 = (1.0, 0.5, 0.1)
    l2 = (0.01, 0.1)
    loss = np.array([[2.0, 1.0, 1.0], [3.0, 1.0, 5.0]])
    assert _select(loss, l1, l2) == (0.5, 0.1)


def test_noise_selects_strong_penalty():
    hits = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        d = MultiDataset([rng.normal(size=(40, 10)) for _ in range(2)],
                         [rng.normal(size=40) for _ in range(2)])
        g = make_grid(d, "cv")
        rep = cv_select(d, CommunityPartition.from_sizes([5, 5]), g, seed=seed)
        hits += rep.selected[0] >= g.lambda1_values[9]
    assert hits >= 45


def test_leakage_selects_smallest_lambda1():
    # every row repeated 10 times: validation rows always have twins in training,
    # and with p > unique rows the least-penalized fit interpolates them
    rng = np.random.default_rng(2)
    X = [np.repeat(rng.normal(size=(8, 20)), 10, axis=0) for _ in range(2)]
    y = [np.repeat(rng.normal(size=8), 10) for _ in range(2)]
    d = MultiDataset(X, y)
    g = make_grid(d, "cv")
    rep = cv_select(d, CommunityPartition.from_sizes([10, 10]), g, seed=0, epsilon=1e-5)
    assert rep.selected[0] == min(g.lambda1_values)


def test_cv_report_shapes_and_thread_invariance():
    d = _data(4)
    P = CommunityPartition.from_sizes([3, 3])
    g = make_grid(d, "cv")
    a = cv_select(d, P, g, V=3, seed=1, threads=1)
    b = cv_select(d, P, g, V=3, seed=1, threads=2)
    assert a.mean_loss.shape == (4, 20) and a.fold_loss.shape == (3, 4, 20)
    assert len(list(a.rows())) == 80
    assert np.array_equal(a.mean_loss, b.mean_loss) and a.selected == b.selected


def test_plasso_properties():
    d = _data(5, K=1)
    assert np.allclose(fit_plasso(d, 0.1)[:, 0], lasso_fit(d.X[0], d.y[0], 0.1), atol=1e-6)
    twice = MultiDataset([d.X[0]] * 2, [d.y[0]] * 2)
    assert np.allclose(fit_plasso(twice, 0.1), np.repeat(fit_plasso(d, 0.1), 2, axis=1), atol=1e-8)


def test_slasso_properties():
    d = _data(6, K=3)
    P = CommunityPartition.from_sizes([3, 3])
    lam = 0.05
    s = fit_slasso(d, [lam] * 3)
    ref = solve(d, P, PenaltyConfig(lam, 0.0, epsilon=1e-8, max_iter=100_000)).panel
    assert np.max(np.abs(s - ref)) < 1e-4
    zero_y = MultiDataset(d.X, [d.y[0], np.zeros(30), d.y[2]])
    z = fit_slasso(zero_y, [lam] * 3)
    assert np.all(z[:, 1] == 0) and np.array_equal(z[:, [0, 2]], s[:, [0, 2]])
    perm = MultiDataset([d.X[2], d.X[0], d.X[1]], [d.y[2], d.y[0], d.y[1]])
    assert np.array_equal(fit_slasso(perm, [lam] * 3), s[:, [2, 0, 1]])
    assert slasso_path(d, [0.2, 0.1]).shape == (2, 6, 3)
