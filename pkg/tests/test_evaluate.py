import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cofu.core import CommunityPartition, MultiDataset
from cofu.evaluate import (
    IdentificationTruth,
    community_rates,
    detect_commonality,
    effect_rates,
    ermse,
    grid_panels,
    grid_roc,
    holdout_rmse,
    marginal_screen,
    ooi,
    prmse,
    roc_auc,
    roc_from_panels,
    split_sizes,
)
from cofu.selection import TuningGrid, make_grid
from cofu.simgen import EffectScheme, SimScenario, simulate

unit = st.floats(0, 1, allow_nan=False)


def test_detect_commonality_examples():
    P = CommunityPartition.from_sizes([2, 2])
    eq = np.tile(np.array([[1.0], [2.0], [0.0], [3.0]]), (1, 3))
    assert detect_commonality(eq, P).all()
    bumped = eq.copy()
    bumped[3, 2] += 0.02
    assert detect_commonality(bumped, P).tolist() == [[True, True], [True, False]]
    rng = np.random.default_rng(0)
    assert detect_commonality(rng.normal(size=(4, 3)), P, np.inf).all()


def test_effect_rates_examples():
    truth = np.array([[1, 0], [1, 0]], dtype=bool)
    assert effect_rates(truth.astype(float), truth) == (1.0, 0.0)
    assert effect_rates(np.zeros((2, 2)), truth) == (0.0, 0.0)
    pred = np.array([[1.0, 1.0], [0.0, 0.0]])  # 1 TP of 2, 1 FP of 2
    assert effect_rates(pred, truth) == (0.5, 0.5)
    assert effect_rates(np.zeros((2, 2)), np.zeros((2, 2), dtype=bool)) == (None, 0.0)


def test_community_rates_positive_class_is_difference():
    truth_common = np.array([[True, False], [True, True]])
    assert community_rates(truth_common, truth_common) == (1.0, 0.0)
    all_common = np.ones((2, 2), dtype=bool)
    assert community_rates(all_common, truth_common) == (0.0, 0.0)
    pred = np.array([[False, False], [True, True]])  # flags one null pair as different
    assert community_rates(pred, truth_common) == (1.0, pytest.approx(1 / 3))


def test_roc_auc_examples():
    assert roc_auc([(0.0, 1.0)]).auc == 1.0
    c = roc_auc([(0.5, 0.5)])
    assert c.auc == pytest.approx(0.5) and c.points == [(0.0, 0.0), (0.5, 0.5), (1.0, 1.0)]
    assert roc_auc([(0.2, 0.6), (0.4, 0.8)]).auc == pytest.approx(0.74, abs=1e-15)
    assert roc_auc([(0.3, 0.7)] * 120).auc == roc_auc([(0.3, 0.7)]).auc
    with pytest.raises(ValueError):
        roc_auc([(1.2, 0.5)])


@settings(max_examples=200)
@given(st.lists(st.tuples(unit, unit), min_size=1, max_size=8), st.tuples(unit, unit))
def test_roc_auc_monotone_in_points(points, extra):
    a = roc_auc(points).auc
    b = roc_auc(points + [extra]).auc
    assert 0.5 - 1e-12 <= a <= 1.0 + 1e-12
    assert b >= a - 1e-12


def test_error_metrics():
    rng = np.random.default_rng(0)
    A, B = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    assert ermse(A, A) == 0.0
    Z = np.zeros((4, 3))
    Z1 = Z.copy()
    Z1[2, 1] = 3.0
    assert ermse(Z1, Z) == 3.0
    assert ermse(A, B) == pytest.approx(np.sqrt(sum((A[i, k] - B[i, k]) ** 2 for i in range(4) for k in range(3))))
    X = [rng.normal(size=(5, 4)) for _ in range(3)]
    y = [Xk @ A[:, k] for k, Xk in enumerate(X)]
    d = MultiDataset(X, y)
    assert prmse(d, A) == pytest.approx(0.0, abs=1e-12)
    assert prmse(d, Z) == pytest.approx(np.sqrt(sum(yk @ yk for yk in y)))


def test_split_sizes():
    assert split_sizes(200) == (134, 66)
    assert split_sizes(9) == (6, 3)
    assert split_sizes(10) == (7, 3)


def test_holdout_rmse_consistency():
    rng = np.random.default_rng(1)
    X = [rng.normal(size=(300, 5)) for _ in range(2)]
    b = np.array([1.0, -1.0, 0.5, 0.0, 0.0])
    d = MultiDataset(X, [Xk @ b for Xk in X])
    assert holdout_rmse(d, CommunityPartition([0, 0, 1, 1, 1]), "slasso") < 0.1
    z = MultiDataset(X, [np.zeros(300)] * 2)
    assert holdout_rmse(z, CommunityPartition([0, 0, 1, 1, 1]), "plasso") == 0.0


def _scenario(seed=0):
    sc = SimScenario(p=40, L=4, n=40, K=3, effects=EffectScheme(6, (0.5, 0.0, 0.5)), seed=seed)
    return simulate(sc, 0)


def test_grid_roc_tables():
    r = _scenario()
    truth = IdentificationTruth(r.panel != 0, r.labels)
    g = make_grid(r.data, "roc")
    res = grid_roc(r.data, r.partition, truth, g, "effects", "cofu")
    assert len(res.table) == 120 and 0.5 <= res.curve.auc <= 1.0
    fits = grid_panels(r.data, r.partition, g, "cofu")
    again = roc_from_panels(fits, truth, r.partition, "effects")
    assert again.curve.auc == res.curve.auc
    assert len(grid_roc(r.data, r.partition, truth, g, "effects", "slasso").table) == 20
    with pytest.raises(ValueError):
        grid_roc(r.data, r.partition, truth, g, "communities", "plasso")


def test_grid_roc_drops_undefined_points():
    r = _scenario(1)
    truth = IdentificationTruth(np.ones_like(r.panel, dtype=bool), r.labels)
    with pytest.raises(ValueError):
        grid_roc(r.data, r.partition, truth, TuningGrid((0.1,), (0.0,)), "effects", "slasso")


def test_ooi_examples():
    rng = np.random.default_rng(3)
    X = [rng.normal(size=(60, 6)) for _ in range(2)]
    y = [Xk[:, 2].copy() for Xk in X]
    d = MultiDataset(X, y)
    P = CommunityPartition([0, 0, 0, 1, 1, 1])
    freq = ooi(d, P, "slasso", resamples=5, seed=1)
    assert freq[2] == 1.0 and np.all((0 <= freq) & (freq <= 1))
    one = ooi(d, P, "plasso", resamples=1, seed=2)
    assert set(np.unique(one)) <= {0.0, 1.0}


def test_ooi_order_invariance():
    rng = np.random.default_rng(4)
    X = [rng.normal(size=(45, 5)) for _ in range(2)]
    y = [Xk[:, 0] + rng.normal(size=45) for Xk in X]
    d = MultiDataset(X, y)
    P = CommunityPartition([0, 0, 1, 1, 1])
    base = ooi(d, P, "slasso", resamples=3, seed=0)
    perm = np.array([4, 2, 3, 0, 1])
    dp = d.columns(perm)
    Pp = CommunityPartition(P.assignment[perm])
    assert np.allclose(ooi(dp, Pp, "slasso", resamples=3, seed=0), base[perm])


def test_marginal_screen():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(50, 8))
    d = MultiDataset([X], [X[:, 3].copy()])
    assert 3 in marginal_screen(d)
    assert marginal_screen(d, alpha=1.0).tolist() == list(range(8))
    kept = []
    for seed in range(20):
        g = np.random.default_rng(100 + seed)
        null = MultiDataset([g.normal(size=(100, 200))], [g.normal(size=100)])
        kept.append(marginal_screen(null).size / 200)
    assert abs(np.mean(kept) - 0.05) < 0.02
