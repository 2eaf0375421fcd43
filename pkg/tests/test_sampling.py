"""SPXY selection, splits and folds against a brute-force greedy oracle."""

import numpy as np
import pytest

from specbench.errors import DegenerateInputError, ParameterError
from specbench.sampling import (
    fold_indices,
    joint_distance_matrix,
    spxy_kfold,
    spxy_order,
    spxy_select,
    spxy_split,
    stratified_split,
)


def brute_force_spxy(X, y, m):
    """Independent greedy reimplementation over an explicit loop."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    dx = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            dx[i, j] = np.sqrt(np.sum((X[i] - X[j]) ** 2))
    d = dx / dx.max()
    if y is not None:
        y = np.asarray(y, dtype=float)
        dy = np.abs(y[:, None] - y[None, :])
        if dy.max() > 0:
            d = d + dy / dy.max()
    best_pair, best_val = None, -1.0
    for i in range(n):
        for j in range(i + 1, n):
            if d[i, j] > best_val:
                best_val = d[i, j]
                best_pair = (i, j)
    selected = list(best_pair)
    while len(selected) < m:
        best_idx, best_val = None, -1.0
        for i in range(n):
            if i in selected:
                continue
            mind = min(d[i, j] for j in selected)
            if mind > best_val:
                best_val = mind
                best_idx = i
        selected.append(best_idx)
    return selected


def test_line_fixture_extreme_pair():
    X = np.array([[0.0], [1.0], [10.0]])
    y = X[:, 0]
    assert sorted(spxy_select(X, y, 2)) == [0, 2]
    assert spxy_select(X, y, 3)[2] == 1


def test_matches_brute_force_on_random_fixtures():
    rng = np.random.default_rng(7)
    for trial in range(30):
        n = int(rng.integers(8, 16))
        X = rng.normal(size=(n, 2))
        y = rng.normal(size=n)
        m = int(rng.integers(2, n + 1))
        assert spxy_select(X, y, m) == brute_force_spxy(X, y, m)


def test_monotone_prefix_and_permutation():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(5, 20))
        X = rng.normal(size=(n, 3))
        y = rng.normal(size=n)
        full = spxy_select(X, y, n)
        assert sorted(full) == list(range(n))
        for m in range(2, n):
            assert spxy_select(X, y, m) == full[:m]


def test_split_sizes_and_determinism():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(8, 4))
    y = rng.normal(size=8)
    train, test = spxy_split(X, y, 0.25)
    assert len(train) == 6 and len(test) == 2
    assert spxy_split(X, y, 0.25) == (train, test)
    assert not set(train) & set(test)
    assert sorted(train + test) == list(range(8))


def test_split_extreme_pair_in_train():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(12, 3))
    y = rng.normal(size=12)
    d = joint_distance_matrix(X, y)
    i, j = np.unravel_index(np.argmax(d), d.shape)
    train, _ = spxy_split(X, y, 0.25)
    assert i in train and j in train


def test_identical_samples_error():
    X = np.ones((5, 3))
    with pytest.raises(DegenerateInputError):
        spxy_select(X, np.ones(5), 2)


def test_stratified_counts_and_restriction():
    rng = np.random.default_rng(9)
    X = np.vstack([rng.normal(size=(4, 3)), rng.normal(loc=5, size=(4, 3))])
    labels = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    train, test = stratified_split(X, labels, 0.25)
    assert len(test) == 2
    assert sum(labels[i] == 0 for i in test) == 1
    assert sum(labels[i] == 1 for i in test) == 1
    # per-class selection equals spxy restricted to the class (oracle)
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        order = brute_force_spxy(X[idx], None, 4)
        expected_train = sorted(int(idx[i]) for i in order[:3])
        assert sorted(i for i in train if labels[i] == cls) == expected_train


def test_stratified_singleton_class_errors():
    X = np.random.default_rng(1).normal(size=(4, 2))
    with pytest.raises(ParameterError):
        stratified_split(X, np.array([0, 0, 0, 1]), 0.25)


def test_kfold_balance_and_modular_assignment():
    rng = np.random.default_rng(13)
    X = rng.normal(size=(6, 4))
    y = rng.normal(size=6)
    fold_of = spxy_kfold(X, y, 3)
    sizes = np.bincount(fold_of, minlength=3)
    assert list(sizes) == [2, 2, 2]
    order = spxy_order(X, y)
    for pos, idx in enumerate(order):
        assert fold_of[idx] == pos % 3


def test_kfold_first_k_spread():
    rng = np.random.default_rng(17)
    for _ in range(20):
        n = int(rng.integers(7, 25))
        k = int(rng.integers(2, 5))
        X = rng.normal(size=(n, 3))
        y = rng.normal(size=n)
        fold_of = spxy_kfold(X, y, k)
        sizes = np.bincount(fold_of, minlength=k)
        assert sizes.max() - sizes.min() <= 1
        order = spxy_order(X, y)
        assert {fold_of[i] for i in order[:k]} == set(range(k))


def test_kfold_classification_uses_x_only():
    rng = np.random.default_rng(19)
    X = rng.normal(size=(9, 4))
    fold_of = spxy_kfold(X, None, 3)
    assert sorted(np.bincount(fold_of)) == [3, 3, 3]


def test_fold_indices_partition():
    fold_of = np.array([0, 1, 2, 0, 1, 2])
    pairs = fold_indices(fold_of, 3)
    for tr, va in pairs:
        assert len(tr) + len(va) == 6
        assert not set(tr) & set(va)


def test_constant_target_drops_dy():
    rng = np.random.default_rng(23)
    X = rng.normal(size=(6, 3))
    y = np.full(6, 2.0)
    d_joint = joint_distance_matrix(X, y)
    d_x = joint_distance_matrix(X, None)
    np.testing.assert_array_equal(d_joint, d_x)
