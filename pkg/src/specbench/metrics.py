"""Evaluation metrics and robustness subsets.

Covers the point metrics (RMSE, balanced accuracy, relative improvement
percentages) plus the two a-posteriori robustness analyses: spectral
outliers in the test set via Hotelling's T-squared on calibration-fitted
PCA scores, and extrapolation beyond the calibration target range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, ParameterError
from .stats import f_quantile


def rmse(y, y_hat) -> float:
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.size == 0 or y.size != y_hat.size:
        raise ParameterError("rmse: need equal nonzero lengths")
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def balanced_accuracy(y, y_hat) -> float:
    """Mean per-class recall over the classes present in ``y``."""
    y = np.asarray(y).ravel()
    y_hat = np.asarray(y_hat).ravel()
    if y.size == 0 or y.size != y_hat.size:
        raise ParameterError("balanced_accuracy: need equal nonzero lengths")
    classes = np.unique(y)
    recalls = [np.mean(y_hat[y == c] == c) for c in classes]
    return float(np.mean(recalls))


def irmsep(rmsep_ref: float, rmsep_cmp: float) -> float:
    """Percent improvement of a model's RMSEP over the reference's."""
    if not rmsep_ref > 0:
        raise ParameterError("irmsep: reference RMSEP must be > 0")
    return 100.0 * (rmsep_ref - rmsep_cmp) / rmsep_ref


def relative_acc_gain(acc_ref: float, acc_cmp: float) -> float:
    """Percent balanced-accuracy gain over the reference."""
    if not acc_ref > 0:
        raise ParameterError("relative_acc_gain: reference accuracy must be > 0")
    return 100.0 * (acc_cmp - acc_ref) / acc_ref


def extrapolation_indices(y_train, y_test) -> list[int]:
    """Test indices whose targets fall strictly outside the calibration
    target range."""
    y_train = np.asarray(y_train, dtype=np.float64)
    y_test = np.asarray(y_test, dtype=np.float64)
    lo, hi = y_train.min(), y_train.max()
    return [int(i) for i in np.flatnonzero((y_test < lo) | (y_test > hi))]


def subset_rmsep(y_test, y_hat, idx) -> float | None:
    """RMSE restricted to ``idx``; ``None`` (absent) when the subset is
    empty, never zero."""
    idx = np.asarray(list(idx), dtype=np.int64)
    if idx.size == 0:
        return None
    y_test = np.asarray(y_test, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    return rmse(y_test[idx], y_hat[idx])


@dataclass(frozen=True)
class OutlierReport:
    n_components: int  # smallest count explaining >= the variance threshold
    t2: np.ndarray  # per candidate test row (NaN where excluded)
    threshold: float
    outlier_indices: tuple[int, ...]
    excluded_test_rows: tuple[int, ...]  # SNV-degenerate, not candidates
    n_calibration: int


def _snv_rows_or_flag(X):
    sd = X.std(axis=1, ddof=1)
    ok = sd > 0
    out = np.zeros_like(X)
    out[ok] = (X[ok] - X[ok].mean(axis=1, keepdims=True)) / sd[ok, None]
    return out, ok


def detect_spectral_outliers(
    X_cal, X_test, variance_threshold: float = 0.95, alpha: float = 0.05
) -> OutlierReport:
    """Flag spectrally atypical test rows with Hotelling's T-squared.

    All spectra are SNV-transformed first; a PCA model is fitted on the
    calibration rows only, keeping the smallest component count whose
    cumulative explained variance reaches ``variance_threshold``. Each test
    row's T-squared sums its squared scores over the component variances
    ((n-1) denominator), and is compared to the F-distribution control
    limit A(n-1)/(n-A) * F_{1-alpha}(A, n-A). Constant (SNV-degenerate)
    rows are excluded from candidacy and reported.
    """
    X_cal = np.atleast_2d(np.asarray(X_cal, dtype=np.float64))
    X_test = np.atleast_2d(np.asarray(X_test, dtype=np.float64))
    if X_cal.shape[1] != X_test.shape[1]:
        raise ParameterError("calibration/test feature counts differ")
    cal_snv, cal_ok = _snv_rows_or_flag(X_cal)
    test_snv, test_ok = _snv_rows_or_flag(X_test)
    cal_snv = cal_snv[cal_ok]
    n = cal_snv.shape[0]
    if n < 3:
        raise DegenerateInputError("too few usable calibration spectra")
    mean = cal_snv.mean(axis=0)
    _, s, vt = np.linalg.svd(cal_snv - mean, full_matrices=False)
    var = s**2 / (n - 1)
    total = var.sum()
    if not total > 0:
        raise DegenerateInputError("calibration spectra have no variance after SNV")
    cum = np.cumsum(var) / total
    a95 = int(np.searchsorted(cum, variance_threshold) + 1)
    a95 = min(a95, var.size)
    if n <= a95 + 1:
        raise DegenerateInputError(
            f"need n_cal > A + 1 (n_cal={n}, A={a95}) for the F limit"
        )
    lam = var[:a95]
    comps = vt[:a95]
    scores = (test_snv - mean) @ comps.T
    t2 = np.full(X_test.shape[0], np.nan)
    t2[test_ok] = np.sum(scores[test_ok] ** 2 / lam, axis=1)
    threshold = a95 * (n - 1) / (n - a95) * f_quantile(1.0 - alpha, a95, n - a95)
    outliers = tuple(int(i) for i in np.flatnonzero(test_ok & (t2 > threshold)))
    return OutlierReport(
        n_components=a95,
        t2=t2,
        threshold=float(threshold),
        outlier_indices=outliers,
        excluded_test_rows=tuple(int(i) for i in np.flatnonzero(~test_ok)),
        n_calibration=n,
    )


@dataclass(frozen=True)
class EvalRecord:
    """Per (dataset, model) evaluation row feeding reports and rank stats."""

    dataset: str
    database: str
    model: str
    task: str
    cv_score: float | None
    test_score: float | None
    relative_vs_reference: float | None = None
    outlier_metric: float | None = None
    outlier_relative: float | None = None
    n_outliers: int = 0
    extrapolation_metric: float | None = None
    n_extrapolation: int = 0
