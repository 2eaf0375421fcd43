"""SPXY sample-set partitioning and SPXY-driven k-fold construction.

The joint distance between two samples is the Euclidean distance of their
spectra plus the absolute target difference, each normalised by its global
maximum over all pairs. Selection is the classic greedy max-min ordering:
start from the most distant pair, then repeatedly add the sample farthest
from the current selection. Everything is deterministic; ties break toward
the lowest index.
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels
from .errors import DegenerateInputError, ParameterError


def joint_distance_matrix(X, y=None) -> np.ndarray:
    """Normalised spectral (+ optional target) distance matrix."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise ParameterError("need at least 2 samples")
    sq = np.einsum("ij,ij->i", X, X)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d2, 0.0, out=d2)
    dx = np.sqrt(d2)
    np.fill_diagonal(dx, 0.0)
    max_dx = dx.max()
    if not max_dx > 0:
        raise DegenerateInputError("all samples identical in X")
    dist = dx / max_dx
    if y is not None:
        y = np.asarray(y, dtype=np.float64).ravel()
        if y.size != n:
            raise ParameterError("X and y length mismatch")
        dy = np.abs(y[:, None] - y[None, :])
        max_dy = dy.max()
        if max_dy > 0:  # constant targets contribute nothing
            dist = dist + dy / max_dy
    return dist


def spxy_order(X, y=None) -> np.ndarray:
    """Full SPXY selection order (a permutation of all sample indices)."""
    dist = joint_distance_matrix(X, y)
    return _kernels.maximin_order(dist, dist.shape[0])


def spxy_select(X, y, m: int) -> list[int]:
    """Select ``m`` samples by greedy max-min on the joint X-y distance."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if not 2 <= m <= n:
        raise ParameterError(f"m={m} must be in [2, {n}]")
    dist = joint_distance_matrix(X, y)
    return [int(i) for i in _kernels.maximin_order(dist, m)]


def spxy_split(X, y, test_fraction: float) -> tuple[list[int], list[int]]:
    """Deterministic train/test split: train = SPXY-selected prefix of size
    n - floor(test_fraction * n), test = complement in ascending order."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if not 0 < test_fraction < 1:
        raise ParameterError("test_fraction must be in (0, 1)")
    n_test = int(math.floor(test_fraction * n))
    n_train = n - n_test
    if n_test < 1 or n_train < 2:
        raise ParameterError(f"degenerate split sizes for n={n}, fraction={test_fraction}")
    train = spxy_select(X, y, n_train)
    in_train = np.zeros(n, dtype=bool)
    in_train[train] = True
    test = [int(i) for i in np.flatnonzero(~in_train)]
    return train, test


def stratified_split(X, labels, test_fraction: float, seed: int = 0) -> tuple[list[int], list[int]]:
    """Per-class SPXY split for classification targets.

    Within a class the target is constant, so the distance reduces to the
    spectral term. Test counts are round(fraction * n_c) clamped so every
    class keeps at least one sample on each side. The algorithm is
    deterministic; ``seed`` is accepted for interface symmetry only.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    if not 0 < test_fraction < 1:
        raise ParameterError("test_fraction must be in (0, 1)")
    train: list[int] = []
    test: list[int] = []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        n_c = idx.size
        if n_c < 2:
            raise ParameterError(f"class {cls!r} has a single sample")
        n_test = int(round(test_fraction * n_c))
        n_test = min(max(n_test, 1), n_c - 1)
        order = _kernels.maximin_order(joint_distance_matrix(X[idx]), n_c)
        train.extend(int(idx[i]) for i in order[: n_c - n_test])
        test.extend(int(idx[i]) for i in order[n_c - n_test :])
    return sorted(train), sorted(test)


def spxy_kfold(X, y, k: int) -> np.ndarray:
    """Fold assignment by SPXY order: sample at selection position i goes
    to fold i mod k, spreading the most mutually distant samples across
    folds. Pass ``y=None`` for classification (spectral distances only).
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if k < 2:
        raise ParameterError("k must be >= 2")
    if n < k:
        raise ParameterError(f"cannot make {k} folds from {n} samples")
    order = spxy_order(X, y)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[order] = np.arange(n) % k
    return fold_of


def fold_indices(fold_of: np.ndarray, k: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """(train_idx, val_idx) pairs per fold, each side in ascending order."""
    return [
        (np.flatnonzero(fold_of != f), np.flatnonzero(fold_of == f))
        for f in range(k)
    ]
