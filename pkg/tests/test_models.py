"""Calibrator oracles: PLS vs OLS, Ridge closed forms, PLS-DA fixtures."""

import numpy as np
import pytest

from specbench.errors import ParameterError
from specbench.models import (
    pls_component_predictions,
    pls_fit,
    plsda_fit,
    plsda_scores,
    predict,
    ridge_fit,
)

rng = np.random.default_rng(2024)


def test_pls_rank1_exact():
    w = rng.normal(size=6)
    t = rng.normal(size=20)
    X = np.outer(t, w)
    y = X @ w
    fp = pls_fit(X, y, 1)
    np.testing.assert_allclose(predict(fp, X), y, atol=1e-8)


def test_pls_full_rank_equals_ols():
    X = rng.normal(size=(40, 5))
    y = X @ rng.normal(size=5) + rng.normal(size=40) * 0.3 + 2.0
    fp = pls_fit(X, y, 5)
    design = np.column_stack([np.ones(40), X])
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    ols_pred = design @ beta
    np.testing.assert_allclose(predict(fp, X), ols_pred, atol=1e-6)


def test_pls_scores_orthogonal():
    X = rng.normal(size=(30, 10))
    y = X @ rng.normal(size=10) + 0.1 * rng.normal(size=30)
    fp = pls_fit(X, y, 5)
    T = fp.state["scores"]
    gram = T.T @ T
    off = np.abs(gram - np.diag(np.diag(gram))).max()
    assert off < 1e-8


def test_pls_component_path_consistent_with_refits():
    X = rng.normal(size=(25, 8))
    y = X @ rng.normal(size=8) + 0.05 * rng.normal(size=25)
    full = pls_fit(X, y, 6)
    path = pls_component_predictions(full, X)
    for a in range(1, 7):
        np.testing.assert_allclose(
            path[:, a - 1], predict(pls_fit(X, y, a), X), atol=1e-9
        )


def test_pls_calibration_rmse_non_increasing():
    X = rng.normal(size=(30, 12))
    y = X @ rng.normal(size=12) + 0.2 * rng.normal(size=30)
    errs = []
    for a in range(1, 6):
        fp = pls_fit(X, y, a)
        errs.append(np.sqrt(np.mean((predict(fp, X) - y) ** 2)))
    assert all(errs[i + 1] <= errs[i] + 1e-12 for i in range(4))


def test_pls_intercept_shift_invariance():
    X = rng.normal(size=(20, 6))
    y = X @ rng.normal(size=6)
    p1 = predict(pls_fit(X, y, 3), X)
    p2 = predict(pls_fit(X, y + 10.0, 3), X)
    np.testing.assert_allclose(p2, p1 + 10.0, atol=1e-9)


def test_pls_truncates_on_exhausted_covariance():
    # rank-1 X: second component has no covariance left
    X = np.outer(rng.normal(size=15), rng.normal(size=4))
    y = X @ rng.normal(size=4)
    fp = pls_fit(X, y, 3)
    assert fp.state["truncated"]
    assert fp.state["n_components_used"] == 1


def test_pls_component_bounds():
    X = rng.normal(size=(10, 4))
    y = rng.normal(size=10)
    with pytest.raises(ParameterError):
        pls_fit(X, y, 5)  # > p
    with pytest.raises(ParameterError):
        pls_fit(X, y, 0)


def test_ridge_hand_solved_fixture():
    # (x'x + 1)^-1 x'y = 5/6 with X = [[1],[2]], y = [1,2], centering off
    fp = ridge_fit(np.array([[1.0], [2.0]]), np.array([1.0, 2.0]), 1.0, fit_intercept=False)
    assert abs(fp.state["coef"][0] - 5.0 / 6.0) < 1e-12


def test_ridge_small_alpha_matches_ols():
    X = rng.normal(size=(30, 4))
    y = X @ rng.normal(size=4) + 1.5
    fp = ridge_fit(X, y, 1e-10)
    design = np.column_stack([np.ones(30), X])
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    np.testing.assert_allclose(predict(fp, X), design @ beta, atol=1e-6)


def test_ridge_gradient_stationarity_finite_differences():
    X = rng.normal(size=(25, 6))
    y = X @ rng.normal(size=6) + 0.1 * rng.normal(size=25)
    alpha = 2.5
    fp = ridge_fit(X, y, alpha, fit_intercept=False)
    beta = fp.state["coef"]

    def objective(b):
        r = y - X @ b
        return 0.5 * float(r @ r) + 0.5 * alpha * float(b @ b)

    h = 1e-6
    grad = np.empty(6)
    for j in range(6):
        e = np.zeros(6)
        e[j] = h
        grad[j] = (objective(beta + e) - objective(beta - e)) / (2 * h)
    scale = max(1.0, float(np.linalg.norm(X.T @ y)))
    assert np.linalg.norm(grad) / scale < 1e-6


def test_ridge_norm_non_increasing_in_alpha():
    X = rng.normal(size=(30, 8))
    y = X @ rng.normal(size=8)
    norms = [
        np.linalg.norm(ridge_fit(X, y, a).state["coef"])
        for a in (1e-3, 1.0, 1e3)
    ]
    assert norms[0] >= norms[1] >= norms[2]


def test_plsda_separable_fixture():
    X = np.vstack([
        rng.normal(loc=0.0, size=(12, 5)),
        rng.normal(loc=6.0, size=(12, 5)),
    ])
    labels = np.array([0] * 12 + [1] * 12)
    fp = plsda_fit(X, labels, 1)
    assert np.mean(predict(fp, X) == labels) == 1.0


def test_plsda_binary_argmax_equals_threshold():
    X = rng.normal(size=(30, 6))
    labels = (X[:, 0] + 0.2 * rng.normal(size=30) > 0).astype(int)
    fp = plsda_fit(X, labels, 2)
    scores = plsda_scores(fp, X)
    by_threshold = (scores[:, 1] - scores[:, 0] > 0).astype(int)
    ties = scores[:, 1] == scores[:, 0]
    preds = predict(fp, X)
    np.testing.assert_array_equal(preds[~ties], by_threshold[~ties])


def test_plsda_label_permutation_invariance():
    X = rng.normal(size=(30, 6))
    labels = np.array(([0] * 12) + ([1] * 10) + ([2] * 8))
    rows = rng.permutation(30)
    X, labels = X[rows], labels[rows]
    fp = plsda_fit(X, labels, 3)
    perm = {0: 2, 1: 0, 2: 1}
    relabeled = np.array([perm[v] for v in labels])
    fp2 = plsda_fit(X, relabeled, 3)
    p1 = predict(fp, X)
    p2 = predict(fp2, X)
    np.testing.assert_array_equal([perm[v] for v in p1], p2)


def test_plsda_single_class_errors():
    from specbench.errors import DegenerateInputError

    with pytest.raises(DegenerateInputError):
        plsda_fit(rng.normal(size=(10, 4)), np.zeros(10, dtype=int), 1)


def test_predict_dimension_mismatch():
    X = rng.normal(size=(10, 4))
    fp = ridge_fit(X, rng.normal(size=10), 1.0)
    with pytest.raises(ParameterError):
        predict(fp, rng.normal(size=(3, 5)))


def test_predict_deterministic():
    X = rng.normal(size=(12, 5))
    y = rng.normal(size=12)
    fp = pls_fit(X, y, 2)
    np.testing.assert_array_equal(predict(fp, X), predict(fp, X))


def test_exact_fit_recovers_targets():
    X = rng.normal(size=(15, 5))
    y = X @ rng.normal(size=5) + 3.0
    fp = pls_fit(X, y, 5)
    np.testing.assert_allclose(predict(fp, X), y, atol=1e-8)
