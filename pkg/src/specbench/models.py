"""Built-in calibrators: PLS regression (NIPALS), PLS-DA, and Ridge.

All models centre X (and y) on calibration means internally and carry no
feature scaling of their own; scaling belongs to the preprocessing
pipeline. External learners are reached through the bridge module and
share the same predict contract.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import DegenerateInputError, ParameterError

MAX_COMPONENTS = 30

_TINY = 1e-12


@dataclass(frozen=True)
class PredictorSpec:
    kind: str  # pls | plsda | ridge | external
    params: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class FittedPredictor:
    spec: PredictorSpec
    state: dict[str, Any]

    @property
    def n_features(self) -> int:
        return int(self.state["n_features"])


def _as_matrix(X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ParameterError("X must be a 2-d matrix")
    return X


def pls_fit(X, y, n_components: int) -> FittedPredictor:
    """NIPALS PLS1.

    Per component: weight from the X-y covariance, score, loading, then
    deflation of both blocks. If the covariance is exhausted before
    ``n_components``, the model truncates and flags it rather than failing.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    n, p = X.shape
    if y.size != n:
        raise ParameterError("X and y length mismatch")
    if not 1 <= n_components <= min(n - 1, p):
        raise ParameterError(
            f"n_components={n_components} outside [1, min(n-1={n - 1}, p={p})]"
        )
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xa = X - x_mean
    ya = y - y_mean
    W = np.zeros((p, n_components))
    P = np.zeros((p, n_components))
    q = np.zeros(n_components)
    T = np.zeros((n, n_components))
    used = 0
    truncated = False
    for a in range(n_components):
        cov = Xa.T @ ya
        cn = np.linalg.norm(cov)
        if not cn > _TINY:
            truncated = True
            break
        w = cov / cn
        t = Xa @ w
        tt = float(t @ t)
        if not tt > _TINY:
            truncated = True
            break
        p_load = Xa.T @ t / tt
        q_a = float(ya @ t) / tt
        Xa = Xa - np.outer(t, p_load)
        ya = ya - q_a * t
        W[:, a] = w
        P[:, a] = p_load
        q[a] = q_a
        T[:, a] = t
        used += 1
    if used == 0:
        raise DegenerateInputError("pls: no covariance between X and y")
    W, P, q, T = W[:, :used], P[:, :used], q[:used], T[:, :used]
    coef_path = _pls_coef_path(W, P, q)
    return FittedPredictor(
        PredictorSpec("pls", {"n_components": n_components}),
        {
            "n_features": p,
            "x_mean": x_mean,
            "y_mean": y_mean,
            "W": W,
            "P": P,
            "q": q,
            "scores": T,
            "n_components_used": used,
            "truncated": truncated,
            "coef": coef_path[:, -1],
            "coef_path": coef_path,
        },
    )


def _pls_coef_path(W, P, q) -> np.ndarray:
    """Regression vectors for every truncation 1..A, columns stacked."""
    p, A = W.shape
    PtW = P.T @ W
    path = np.empty((p, A))
    for a in range(1, A + 1):
        path[:, a - 1] = W[:, :a] @ np.linalg.solve(PtW[:a, :a], q[:a])
    return path


def pls_component_predictions(fp: FittedPredictor, X) -> np.ndarray:
    """Predictions for every component count 1..A_used, shape (n, A_used)."""
    X = _as_matrix(X)
    if X.shape[1] != fp.n_features:
        raise ParameterError("feature count differs from fit")
    Xc = X - fp.state["x_mean"]
    return fp.state["y_mean"] + Xc @ fp.state["coef_path"]


def plsda_fit(X, labels, n_components: int) -> FittedPredictor:
    """NIPALS PLS2 on the column-centred one-hot class matrix."""
    X = _as_matrix(X)
    labels = np.asarray(labels)
    n, p = X.shape
    if labels.size != n:
        raise ParameterError("X and labels length mismatch")
    classes = np.unique(labels)
    C = classes.size
    if C < 2:
        raise DegenerateInputError("plsda: single class in calibration")
    if not 1 <= n_components <= min(n - 1, p):
        raise ParameterError(
            f"n_components={n_components} outside [1, min(n-1={n - 1}, p={p})]"
        )
    Y = (labels[:, None] == classes[None, :]).astype(np.float64)
    x_mean = X.mean(axis=0)
    y_mean = Y.mean(axis=0)
    Xa = X - x_mean
    Ya = Y - y_mean
    W = np.zeros((p, n_components))
    P = np.zeros((p, n_components))
    Q = np.zeros((C, n_components))
    used = 0
    truncated = False
    for a in range(n_components):
        u = Ya[:, int(np.argmax(Ya.var(axis=0)))]
        if not float(u @ u) > _TINY:
            truncated = True
            break
        w = np.zeros(p)
        t = np.zeros(n)
        for _ in range(500):
            w_new = Xa.T @ u
            wn = np.linalg.norm(w_new)
            if not wn > _TINY:
                break
            w_new /= wn
            t_new = Xa @ w_new
            tt = float(t_new @ t_new)
            if not tt > _TINY:
                break
            q_vec = Ya.T @ t_new / tt
            qn = float(q_vec @ q_vec)
            if not qn > _TINY:
                break
            u_new = Ya @ q_vec / qn
            done = np.linalg.norm(t_new - t) <= 1e-10 * max(np.linalg.norm(t_new), 1e-300)
            w, t, u = w_new, t_new, u_new
            if done:
                break
        tt = float(t @ t)
        if not tt > _TINY or not np.linalg.norm(w) > 0:
            truncated = True
            break
        p_load = Xa.T @ t / tt
        q_load = Ya.T @ t / tt
        Xa = Xa - np.outer(t, p_load)
        Ya = Ya - np.outer(t, q_load)
        W[:, a] = w
        P[:, a] = p_load
        Q[:, a] = q_load
        used += 1
    if used == 0:
        raise DegenerateInputError("plsda: no covariance between X and classes")
    W, P, Q = W[:, :used], P[:, :used], Q[:, :used]
    B = W @ np.linalg.inv(P.T @ W) @ Q.T
    return FittedPredictor(
        PredictorSpec("plsda", {"n_components": n_components}),
        {
            "n_features": p,
            "x_mean": x_mean,
            "y_mean": y_mean,
            "classes": classes,
            "coef": B,
            "W": W,
            "P": P,
            "Q": Q,
            "n_components_used": used,
            "truncated": truncated,
        },
    )


def plsda_scores(fp: FittedPredictor, X) -> np.ndarray:
    X = _as_matrix(X)
    if X.shape[1] != fp.n_features:
        raise ParameterError("feature count differs from fit")
    return fp.state["y_mean"] + (X - fp.state["x_mean"]) @ fp.state["coef"]


def ridge_fit(X, y, alpha: float, fit_intercept: bool = True) -> FittedPredictor:
    """Ridge regression via the SVD of the (centred) design matrix."""
    if not alpha > 0:
        raise ParameterError("ridge: alpha must be > 0")
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    n, p = X.shape
    if y.size != n:
        raise ParameterError("X and y length mismatch")
    if fit_intercept:
        x_mean = X.mean(axis=0)
        y_mean = y.mean()
    else:
        x_mean = np.zeros(p)
        y_mean = 0.0
    u, s, vt = np.linalg.svd(X - x_mean, full_matrices=False)
    shrink = s / (s**2 + alpha)
    beta = vt.T @ (shrink * (u.T @ (y - y_mean)))
    return FittedPredictor(
        PredictorSpec("ridge", {"alpha": alpha}),
        {
            "n_features": p,
            "x_mean": x_mean,
            "y_mean": y_mean,
            "coef": beta,
            "intercept": y_mean - float(x_mean @ beta),
        },
    )


def predict(fp: FittedPredictor, X) -> np.ndarray:
    """Regression predictions in analyte units, or class ids for PLS-DA."""
    X = _as_matrix(X)
    if X.shape[1] != fp.n_features:
        raise ParameterError(
            f"predict: model expects {fp.n_features} features, got {X.shape[1]}"
        )
    kind = fp.spec.kind
    if kind == "pls":
        yhat = fp.state["y_mean"] + (X - fp.state["x_mean"]) @ fp.state["coef"]
    elif kind == "ridge":
        yhat = fp.state["intercept"] + X @ fp.state["coef"]
    elif kind == "plsda":
        scores = plsda_scores(fp, X)
        return fp.state["classes"][np.argmax(scores, axis=1)]
    else:
        raise ParameterError(f"unknown predictor kind {kind!r}")
    if not np.isfinite(yhat).all():
        raise DegenerateInputError("non-finite predictions")
    return yhat
