import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cofu.core import (
    AdmmState,
    CommunityPartition,
    DimensionError,
    MultiDataset,
    PenaltyConfig,
    community_block_norms,
    difference_apply,
    difference_gram,
    difference_transpose_apply,
    group_shrink,
    group_shrink_blocks,
    soft_threshold,
    stack,
    unstack,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_dataset_validation():
    X = [np.ones((3, 2)), np.ones((4, 2))]
    y = [np.zeros(3), np.zeros(4)]
    d = MultiDataset(X, y)
    assert (d.p, d.K, d.n) == (2, 2, [3, 4])
    with pytest.raises(DimensionError):
        MultiDataset([np.ones((3, 2))], [np.zeros(4)])
    with pytest.raises(DimensionError):
        MultiDataset([np.ones((3, 2)), np.ones((3, 3))], [np.zeros(3)] * 2)
    with pytest.raises(DimensionError):
        MultiDataset([np.ones((3, 2))], [])
    with pytest.raises(ValueError):
        MultiDataset([np.array([[np.nan]])], [np.zeros(1)])
    with pytest.raises(ValueError):
        d.X[0][0, 0] = 5.0  # arrays are read-only


def test_standardized_columns():
    rng = np.random.default_rng(0)
    X = rng.normal(3, 2, (30, 4))
    X[:, 2] = 7.0
    d = MultiDataset([X], [rng.normal(size=30)]).standardized()
    Z = d.X[0]
    assert np.allclose(Z.mean(axis=0), 0)
    assert np.allclose(Z[:, [0, 1, 3]].std(axis=0), 1)
    assert np.all(Z[:, 2] == 0)


def test_partition():
    P = CommunityPartition([1, 0, 1, 2])
    assert P.L == 3 and P.p == 4 and P.sizes == [1, 2, 1]
    assert [g.tolist() for g in P.groups] == [[1], [0, 2], [3]]
    assert CommunityPartition.from_sizes([2, 3]).assignment.tolist() == [0, 0, 1, 1, 1]
    with pytest.raises(ValueError):
        CommunityPartition([0, 2])  # community 1 empty
    with pytest.raises(ValueError):
        CommunityPartition([-1, 0])
    with pytest.raises(ValueError):
        CommunityPartition([0, 3], L=2)


def test_penalty_config_validation():
    with pytest.raises(ValueError):
        PenaltyConfig(-1.0, 0.0)
    with pytest.raises(ValueError):
        PenaltyConfig(1.0, -0.1)
    with pytest.raises(ValueError):
        PenaltyConfig(1.0, 0.0, sigma=0.0)


def test_difference_examples():
    assert difference_apply(np.ones((3, 1))).shape == (3, 0)
    assert np.all(difference_apply(np.tile([[1.0], [2.0]], (1, 3))) == 0)
    out = difference_apply(np.array([[1.0, 0.5], [2.0, -1.0]]))
    assert np.allclose(out, [[0.5], [3.0]])


@given(arrays(float, (3, 4), elements=finite), arrays(float, (3, 3), elements=finite))
def test_difference_adjoint(B, D):
    # <A b, d> = <b, A' d>
    lhs = np.sum(difference_apply(B) * D)
    rhs = np.sum(B * difference_transpose_apply(D, 4))
    assert np.isclose(lhs, rhs, atol=1e-9)


def test_difference_gram_matches_dense():
    K = 4
    A = np.zeros((K - 1, K))
    for k in range(K - 1):
        A[k, k], A[k, k + 1] = 1, -1
    assert np.allclose(difference_gram(K), A.T @ A)


def test_stack_roundtrip():
    B = np.arange(6.0).reshape(3, 2)
    v = stack(B)
    assert v.tolist() == [0, 2, 4, 1, 3, 5]
    assert np.array_equal(unstack(v, 3), B)


def test_soft_threshold_examples():
    x = np.array([0.3, -2.0])
    assert np.array_equal(soft_threshold(x, 0.0), x)
    assert soft_threshold(0.5, 1.0) == 0.0
    assert soft_threshold(-1.2, 0.5) == pytest.approx(-0.7, abs=1e-15)


@given(finite, st.floats(0, 5))
def test_soft_threshold_is_prox(x, t):
    # prox optimality: z minimizes 0.5 (z - x)^2 + t |z|
    z = float(soft_threshold(x, t))
    f = lambda w: 0.5 * (w - x) ** 2 + t * abs(w)
    for w in (z - 1e-3, z + 1e-3, 0.0, x):
        assert f(z) <= f(w) + 1e-12


def test_group_shrink_examples():
    assert np.array_equal(group_shrink(np.zeros(3), 1.0), np.zeros(3))
    assert np.array_equal(group_shrink(np.array([3.0, 4.0]), 5.0), np.zeros(2))
    assert np.allclose(group_shrink(np.array([3.0, 4.0]), 1.0), [2.4, 3.2])


@settings(max_examples=50)
@given(arrays(float, 3, elements=finite), st.floats(0, 5))
def test_group_shrink_norm(v, t):
    z = group_shrink(v, t)
    assert np.linalg.norm(z) == pytest.approx(max(np.linalg.norm(v) - t, 0.0), abs=1e-9)


@settings(max_examples=30)
@given(arrays(float, (5, 2), elements=finite), st.floats(0, 3))
def test_block_shrink_matches_loop(D, t):
    P = CommunityPartition([0, 1, 0, 2, 1])
    out = group_shrink_blocks(D, P, t)
    for g in P.groups:
        for k in range(D.shape[1]):
            assert np.allclose(out[g, k], group_shrink(D[g, k], t))
    norms = community_block_norms(np.column_stack([D[:, 0], np.zeros(5), D[:, 1]]), P)
    for l, g in enumerate(P.groups):
        assert np.isclose(norms[l, 0], np.linalg.norm(D[g, 0]))
        assert np.isclose(norms[l, 1], np.linalg.norm(D[g, 1]))


def test_state_from_panel():
    s = AdmmState.from_panel(np.ones((2, 3)))
    assert s.beta.shape == (6,) and s.eta.shape == (4,) and np.all(s.eta == 0)
