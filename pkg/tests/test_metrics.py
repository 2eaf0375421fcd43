"""Metric arithmetic, robustness subsets, Hotelling outlier detection."""

import math

import numpy as np
import pytest

from specbench.errors import ParameterError
from specbench.metrics import (
    balanced_accuracy,
    detect_spectral_outliers,
    extrapolation_indices,
    irmsep,
    relative_acc_gain,
    rmse,
    subset_rmsep,
)

rng = np.random.default_rng(555)


def test_rmse_cases():
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert abs(rmse([0.0, 0.0], [3.0, 4.0]) - math.sqrt(25.0 / 2.0)) < 1e-12
    y = rng.normal(size=20)
    yh = rng.normal(size=20)
    perm = rng.permutation(20)
    assert abs(rmse(y, yh) - rmse(y[perm], yh[perm])) < 1e-12
    with pytest.raises(ParameterError):
        rmse([], [])


def test_balanced_accuracy_cases():
    assert balanced_accuracy([0, 1, 1], [0, 1, 1]) == 1.0
    assert balanced_accuracy([0, 0, 0, 1], [0, 0, 0, 0]) == 0.5
    # duplicating one class's samples leaves per-class recall unchanged
    y = np.array([0, 0, 1, 1, 1])
    yh = np.array([0, 1, 1, 1, 0])
    y2 = np.concatenate([y, y[y == 0]])
    yh2 = np.concatenate([yh, yh[y == 0]])
    assert abs(balanced_accuracy(y, yh) - balanced_accuracy(y2, yh2)) < 1e-12


def test_irmsep_arithmetic():
    assert irmsep(2.0, 1.5) == 25.0
    assert irmsep(1.3, 1.3) == 0.0
    with pytest.raises(ParameterError):
        irmsep(0.0, 1.0)


def test_irmsep_constructed_gain_identity():
    for g in (1.0, 12.5, 80.0, -30.0):
        ref = 3.7
        assert abs(irmsep(ref, ref * (1 - g / 100.0)) - g) < 1e-12


def test_relative_acc_gain_paper_rows():
    # supplementary classification table: gains recomputed from the printed
    # 3-decimal accuracies (see also the acceptance suite)
    assert abs(relative_acc_gain(0.800, 1.000) - 25.000) < 1e-9
    assert abs(relative_acc_gain(0.757, 0.732) - (-3.302509)) < 1e-4
    assert relative_acc_gain(0.5, 0.5) == 0.0


def test_extrapolation_strictness():
    assert extrapolation_indices([0.0, 10.0], [-1.0, 5.0, 12.0]) == [0, 2]
    assert extrapolation_indices([0.0, 10.0], [0.5, 9.5]) == []
    # boundary values are not extrapolation (strict inequalities)
    assert extrapolation_indices([0.0, 10.0], [0.0, 10.0]) == []


def test_subset_rmsep():
    y = np.array([1.0, 2.0, 3.0, 4.0])
    yh = np.array([1.5, 2.0, 2.0, 6.0])
    assert abs(subset_rmsep(y, yh, [0, 1, 2, 3]) - rmse(y, yh)) < 1e-12
    assert abs(subset_rmsep(y, yh, [3]) - 2.0) < 1e-12
    assert subset_rmsep(y, yh, []) is None


def test_subset_rmse_disjoint_union_identity():
    y = rng.normal(size=30)
    yh = y + rng.normal(size=30) * 0.3
    idx_a = list(range(12))
    idx_b = list(range(12, 30))
    ra = subset_rmsep(y, yh, idx_a)
    rb = subset_rmsep(y, yh, idx_b)
    r = rmse(y, yh)
    assert abs(12 * ra**2 + 18 * rb**2 - 30 * r**2) < 1e-9


# ---------------------------------------------------------------------------
# Hotelling outliers


def _factor_fixture(seed, n_cal=400, n_test=400, p=100, k=4, scale=0.05):
    rng_ = np.random.default_rng(seed)
    t = np.linspace(0, 1, p)
    base = np.sin(2 * np.pi * t) + 2.0
    L = rng_.normal(size=(k, p)).cumsum(axis=1)
    L /= np.linalg.norm(L, axis=1, keepdims=True)

    def draw(n):
        return base + scale * rng_.normal(size=(n, k)) @ L

    return draw(n_cal), draw(n_test)


def test_outlier_fraction_near_alpha():
    fracs = []
    for seed in range(20):
        X_cal, X_test = _factor_fixture(seed)
        report = detect_spectral_outliers(X_cal, X_test)
        fracs.append(len(report.outlier_indices) / X_test.shape[0])
    mean_frac = float(np.mean(fracs))
    assert 0.02 <= mean_frac <= 0.08


def test_calibration_mean_spectrum_not_outlier():
    X_cal, _ = _factor_fixture(3)
    # the calibration mean sits at the model centre: its scores vanish up
    # to the (second-order) difference between snv(mean) and mean(snv)
    mean_row = X_cal.mean(axis=0, keepdims=True)
    report = detect_spectral_outliers(X_cal, np.vstack([mean_row, X_cal[:3]]))
    assert abs(report.t2[0]) < 1e-3
    assert 0 not in report.outlier_indices
    # exactly at the PCA centre the statistic is zero by construction
    snv_cal = (X_cal - X_cal.mean(1, keepdims=True)) / X_cal.std(1, ddof=1, keepdims=True)
    centre_scores = (snv_cal.mean(axis=0) - snv_cal.mean(axis=0))
    assert np.all(centre_scores == 0.0)


def test_injected_anomaly_flagged_and_matches_dense_oracle():
    X_cal, X_test = _factor_fixture(7, n_test=30)
    anomaly = X_test[0].copy()
    anomaly[40:60] *= 10.0
    X_test = np.vstack([X_test, anomaly])
    report = detect_spectral_outliers(X_cal, X_test)
    assert 30 in report.outlier_indices

    # dense-PCA oracle: recompute T2 for the anomaly from eigendecomposition
    def snv_rows(X):
        return (X - X.mean(1, keepdims=True)) / X.std(1, ddof=1, keepdims=True)

    C = snv_rows(X_cal)
    Tn = snv_rows(X_test)
    mu = C.mean(axis=0)
    cov = (C - mu).T @ (C - mu) / (C.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    evals, evecs = evals[::-1], evecs[:, ::-1]
    a = report.n_components
    scores = (Tn - mu) @ evecs[:, :a]
    t2 = np.sum(scores**2 / evals[:a], axis=1)
    np.testing.assert_allclose(report.t2, t2, rtol=1e-6, atol=1e-9)


def test_outlier_pca_uses_calibration_only():
    X_cal, X_test = _factor_fixture(11, n_test=50)
    r1 = detect_spectral_outliers(X_cal, X_test)
    # perturbing the test rows must not change the model (threshold, A)
    r2 = detect_spectral_outliers(X_cal, X_test * 3.0 + 1.0)
    assert r1.threshold == r2.threshold
    assert r1.n_components == r2.n_components


def test_snv_degenerate_test_rows_excluded():
    X_cal, X_test = _factor_fixture(13, n_test=10)
    X_test[4] = 7.0  # constant spectrum
    report = detect_spectral_outliers(X_cal, X_test)
    assert report.excluded_test_rows == (4,)
    assert np.isnan(report.t2[4])
    assert 4 not in report.outlier_indices


def test_threshold_formula():
    X_cal, X_test = _factor_fixture(17)
    report = detect_spectral_outliers(X_cal, X_test)
    from specbench.stats import f_quantile

    n, a = report.n_calibration, report.n_components
    expected = a * (n - 1) / (n - a) * f_quantile(0.95, a, n - a)
    assert abs(report.threshold - expected) < 1e-9
