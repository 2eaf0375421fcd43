"""Spectral preprocessing operators and fit/apply pipelines.

Every stateful operator is split into a fit phase that sees calibration
rows only (plus calibration targets for OSC) and a deterministic apply
phase, so that no test information can leak into model selection. The
operators cover baseline correction (ASLS), smoothing and derivatives
(Savitzky-Golay, Gaussian), scatter correction (SNV, EMSC), signal
representation (Haar, area normalisation, OSC, PCA) and feature scaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.ndimage import correlate1d

from . import _kernels
from .errors import DegenerateInputError, ParameterError, PipelineError

_SQRT2 = math.sqrt(2.0)

# parameter schema: (name, type) pairs per step kind; defaults where a bare
# token form exists
_SCHEMA: dict[str, tuple[tuple[str, type], ...]] = {
    "none": (),
    "asls": (("lam", float), ("p", float), ("iters", int)),
    "savgol": (("window", int), ("polyorder", int), ("deriv", int)),
    "gaussian": (("sigma", float),),
    "snv": (),
    "emsc": (("degree", int),),
    "haar": (),
    "area_norm": (),
    "osc": (("n_components", int),),
    "pca": (("ratio", float),),
    "standard_scale": (),
    "minmax_scale": (),
}

_DEFAULTS: dict[str, tuple] = {
    "asls": (1e5, 1e-3, 10),
    "gaussian": (2.0,),
    "emsc": (2,),
    "osc": (1,),
}

_CATEGORY = {
    "asls": "baseline",
    "savgol": "baseline",
    "gaussian": "baseline",
    "snv": "scatter",
    "emsc": "scatter",
    "haar": "repr",
    "area_norm": "repr",
    "osc": "repr",
    "pca": "repr",
    "standard_scale": "scale",
    "minmax_scale": "scale",
}


@dataclass(frozen=True)
class StepSpec:
    """One preprocessing step: a kind plus its numeric parameters."""

    kind: str
    params: tuple = ()

    def __post_init__(self):
        schema = _SCHEMA.get(self.kind)
        if schema is None:
            raise ParameterError(f"unknown step kind {self.kind!r}")
        params = self.params
        if len(params) != len(schema):
            if not params and self.kind in _DEFAULTS:
                params = _DEFAULTS[self.kind]
            else:
                raise ParameterError(
                    f"{self.kind} takes {len(schema)} parameters, got {len(params)}"
                )
        coerced = []
        for value, (name, typ) in zip(params, schema):
            if typ is int:
                if int(value) != value:
                    raise ParameterError(f"{self.kind}: {name} must be an integer")
                coerced.append(int(value))
            else:
                coerced.append(float(value))
        object.__setattr__(self, "params", tuple(coerced))
        self._validate()

    def _validate(self):
        k, p = self.kind, self.params
        if k == "savgol":
            window, polyorder, deriv = p
            if window % 2 != 1:
                raise ParameterError("savgol: window must be odd")
            if not window > polyorder >= deriv >= 0:
                raise ParameterError("savgol: need window > polyorder >= deriv >= 0")
        elif k == "asls":
            lam, asym, iters = p
            if lam <= 0 or not 0 < asym < 1 or iters < 1:
                raise ParameterError("asls: need lam > 0, 0 < p < 1, iters >= 1")
        elif k == "gaussian":
            if p[0] <= 0:
                raise ParameterError("gaussian: sigma must be > 0")
        elif k == "emsc":
            if p[0] < 0:
                raise ParameterError("emsc: degree must be >= 0")
        elif k == "osc":
            if p[0] < 1:
                raise ParameterError("osc: n_components must be >= 1")
        elif k == "pca":
            if not 0 < p[0] <= 1:
                raise ParameterError("pca: ratio must be in (0, 1]")

    @property
    def category(self) -> str | None:
        return _CATEGORY.get(self.kind)

    def __str__(self):
        if not self.params or self.params == _DEFAULTS.get(self.kind):
            return self.kind
        args = ",".join(str(v) if isinstance(v, int) else repr(v) for v in self.params)
        return f"{self.kind}({args})"


@dataclass(frozen=True)
class PipelineSpec:
    """Ordered preprocessing steps; at most one step per family."""

    steps: tuple[StepSpec, ...] = ()

    def __post_init__(self):
        steps = tuple(s for s in self.steps if s.kind != "none")
        seen: set[str] = set()
        for s in steps:
            cat = s.category
            if cat in seen:
                raise ParameterError(f"pipeline has more than one {cat} step")
            seen.add(cat)
        object.__setattr__(self, "steps", steps)

    def __str__(self):
        if not self.steps:
            return "none"
        return ">".join(str(s) for s in self.steps)


def parse_step(token: str) -> StepSpec:
    token = token.strip()
    if "(" in token:
        if not token.endswith(")"):
            raise ParameterError(f"malformed step {token!r}")
        name, _, rest = token.partition("(")
        args = rest[:-1]
        schema = _SCHEMA.get(name)
        if schema is None:
            raise ParameterError(f"unknown step kind {name!r}")
        raw = [a for a in args.split(",") if a.strip() != ""]
        vals = []
        for a, (pname, typ) in zip(raw, schema):
            try:
                vals.append(typ(a.strip()))
            except ValueError as exc:
                raise ParameterError(f"{name}: bad value for {pname}: {a!r}") from exc
        if len(raw) != len(schema):
            raise ParameterError(f"{name} takes {len(schema)} parameters, got {len(raw)}")
        return StepSpec(name, tuple(vals))
    return StepSpec(token)


def parse_pipeline(text: str) -> PipelineSpec:
    """Parse the compact text form, e.g. ``savgol(15,2,1)>snv>pca(0.25)``."""
    text = text.strip()
    if text in ("", "none"):
        return PipelineSpec(())
    return PipelineSpec(tuple(parse_step(t) for t in text.split(">")))


def format_pipeline(spec: PipelineSpec) -> str:
    return str(spec)


# ---------------------------------------------------------------------------
# stateless vector/matrix operators


def _check_finite(X, label):
    if not np.isfinite(X).all():
        raise DegenerateInputError(f"{label} produced non-finite values")
    return X


def snv(x):
    """Standard Normal Variate: per-spectrum centering to zero mean and
    unit sample (n-1) standard deviation."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        raise ParameterError("snv: need at least 2 points")
    sd = x.std(ddof=1)
    if not sd > 0:
        raise DegenerateInputError("snv: constant spectrum (zero variance)")
    return (x - x.mean()) / sd


def _snv_rows(X):
    sd = X.std(axis=1, ddof=1, keepdims=True)
    bad = np.flatnonzero(~(sd[:, 0] > 0))
    if bad.size:
        raise DegenerateInputError(f"snv: constant spectrum at row {bad[0]}")
    return (X - X.mean(axis=1, keepdims=True)) / sd


def area_norm(x):
    """Scale a spectrum so its absolute sum equals 1."""
    x = np.asarray(x, dtype=np.float64)
    total = np.abs(x).sum()
    if not total > 0:
        raise DegenerateInputError("area_norm: all-zero spectrum")
    return x / total


def _area_norm_rows(X):
    totals = np.abs(X).sum(axis=1, keepdims=True)
    bad = np.flatnonzero(~(totals[:, 0] > 0))
    if bad.size:
        raise DegenerateInputError(f"area_norm: all-zero spectrum at row {bad[0]}")
    return X / totals


def savgol_coefficients(window: int, polyorder: int, deriv: int) -> np.ndarray:
    """Convolution kernel of the Savitzky-Golay filter at unit spacing.

    Row ``deriv`` of the pseudo-inverse of the local Vandermonde matrix,
    scaled by deriv!, evaluates the fitted polynomial's derivative at the
    window centre.
    """
    StepSpec("savgol", (window, polyorder, deriv))
    half = window // 2
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    design = np.vander(offsets, polyorder + 1, increasing=True)
    pinv = np.linalg.pinv(design)
    return math.factorial(deriv) * pinv[deriv]


def _row_filter(X, kernel):
    # correlate1d 'mirror' == np.pad 'reflect' (edge value not repeated)
    half = (kernel.size - 1) // 2
    p = X.shape[1]
    if kernel.size > 2 * p - 1:
        raise ParameterError(
            f"filter window {kernel.size} too wide for {p} features (reflect padding impossible)"
        )
    return correlate1d(X, kernel, axis=1, mode="mirror", origin=0)


def savgol(X, window: int, polyorder: int, deriv: int):
    """Savitzky-Golay smoothing/derivative filter applied to each row."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return _row_filter(X, savgol_coefficients(window, polyorder, deriv))


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(4.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (offsets / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(X, sigma: float):
    """Convolve each row with a truncated, normalised Gaussian kernel."""
    if sigma <= 0:
        raise ParameterError("gaussian: sigma must be > 0")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return _row_filter(X, gaussian_kernel(sigma))


def asls_baseline(X, lam: float = 1e5, p: float = 1e-3, iters: int = 10):
    """Asymmetric least squares baseline removal (Whittaker-style penalty).

    Solves (W + lam * D2'D2) z = W x per row, reweighting points above the
    baseline with ``p`` and below with ``1 - p`` for ``iters`` rounds, and
    returns the corrected spectra ``x - z``.
    """
    StepSpec("asls", (lam, p, iters))
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] < 5:
        raise ParameterError("asls: need at least 5 features")
    return X - _kernels.asls_baselines(X, lam, p, iters)


def next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def haar_transform(X):
    """Full orthonormal Haar decomposition of each row.

    Rows are edge-replicated to the next power of two; the output holds the
    single scaling coefficient first, then detail coefficients from coarse
    to fine. Energy is preserved (Parseval).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    p = X.shape[1]
    if p < 2:
        raise ParameterError("haar: need at least 2 features")
    padded = next_pow2(p)
    out = np.pad(X, ((0, 0), (0, padded - p)), mode="edge")
    length = padded
    while length > 1:
        a = (out[:, 0:length:2] + out[:, 1:length:2]) / _SQRT2
        d = (out[:, 0:length:2] - out[:, 1:length:2]) / _SQRT2
        half = length // 2
        out[:, :half] = a
        out[:, half:length] = d
        length = half
    return out


def haar_inverse(C):
    """Inverse of :func:`haar_transform`; returns the padded signal."""
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    out = C.copy()
    length = 2
    while length <= out.shape[1]:
        half = length // 2
        a = out[:, :half].copy()
        d = out[:, half:length].copy()
        out[:, 0:length:2] = (a + d) / _SQRT2
        out[:, 1:length:2] = (a - d) / _SQRT2
        length *= 2
    return out


# ---------------------------------------------------------------------------
# stateful operators


@dataclass(frozen=True)
class FittedStep:
    """A step spec plus whatever state its fit phase derived from the
    calibration rows."""

    spec: StepSpec
    state: dict[str, Any] = field(default_factory=dict)


def emsc_fit(X_cal, degree: int = 2) -> FittedStep:
    reference = np.asarray(X_cal, dtype=np.float64).mean(axis=0)
    return FittedStep(StepSpec("emsc", (degree,)), {"reference": reference})


def emsc_apply(step: FittedStep, X):
    """Extended multiplicative signal correction against the calibration
    mean spectrum plus a channel-index polynomial of the fitted degree."""
    m = step.state["reference"]
    (degree,) = step.spec.params
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    p = X.shape[1]
    if p != m.size:
        raise ParameterError("emsc: feature count differs from fit")
    t = np.linspace(-1.0, 1.0, p)
    cols = [np.ones(p), m] + [t**k for k in range(1, degree + 1)]
    design = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(design, X.T, rcond=None)
    b = coef[1]
    if np.any(np.abs(b) < 1e-12):
        bad = int(np.argmin(np.abs(b)))
        raise DegenerateInputError(f"emsc: degenerate multiplicative fit at row {bad}")
    baseline = coef[0][:, None]
    if degree > 0:
        baseline = baseline + (design[:, 2:] @ coef[2:]).T
    return (X - baseline) / b[:, None]


def osc_fit(X_cal, y_cal, n_components: int = 1, tol: float = 1e-8, max_iter: int = 100) -> FittedStep:
    """Orthogonal signal correction: iteratively extracts score directions
    orthogonal to the calibration target and removes them."""
    X = np.asarray(X_cal, dtype=np.float64)
    y = np.asarray(y_cal, dtype=np.float64).ravel()
    if X.shape[0] != y.size:
        raise ParameterError("osc: X and y length mismatch")
    x_mean = X.mean(axis=0)
    Xc = X - x_mean
    yc = y - y.mean()
    yty = float(yc @ yc)
    if not yty > 1e-12 * y.size:
        raise DegenerateInputError("osc: constant target (no orthogonal complement)")
    weights, loadings, converged = [], [], []
    for _ in range(n_components):
        u, s, vt = np.linalg.svd(Xc, full_matrices=False)
        if not s[0] > 0:
            raise DegenerateInputError("osc: no variance left to correct")
        keep = s > s[0] * 1e-12
        uk, sk, vk = u[:, keep], s[keep], vt[keep]

        def reweight(t_orth):
            # least-squares weights (w = pinv(Xc) t_orth) keep the rescored
            # t inside col(Xc): alternating projections with the y-orthogonal
            # complement drive corr(t, y) to zero
            w = vk.T @ ((uk.T @ t_orth) / sk)
            norm = np.linalg.norm(w)
            if not norm > 0:
                raise DegenerateInputError("osc: zero weight vector")
            return w / norm

        t = u[:, 0] * s[0]
        ok = False
        w = None
        for _ in range(max_iter):
            t_orth = t - yc * (yc @ t) / yty
            if not np.linalg.norm(t_orth) > 0:
                raise DegenerateInputError("osc: score fully explained by target")
            w = reweight(t_orth)
            t_new = Xc @ w
            if np.linalg.norm(t_new - t) <= tol * max(np.linalg.norm(t_new), 1e-300):
                t = t_new
                ok = True
                break
            t = t_new
        tt = float(t @ t)
        if not tt > 0:
            raise DegenerateInputError("osc: degenerate score")
        p_load = Xc.T @ t / tt
        Xc = Xc - np.outer(t, p_load)
        weights.append(w)
        loadings.append(p_load)
        converged.append(ok)
    return FittedStep(
        StepSpec("osc", (n_components,)),
        {
            "x_mean": x_mean,
            "weights": np.column_stack(weights),
            "loadings": np.column_stack(loadings),
            "converged": tuple(converged),
        },
    )


def osc_apply(step: FittedStep, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    x_mean = step.state["x_mean"]
    if X.shape[1] != x_mean.size:
        raise ParameterError("osc: feature count differs from fit")
    Xc = X - x_mean
    W = step.state["weights"]
    P = step.state["loadings"]
    for a in range(W.shape[1]):
        t = Xc @ W[:, a]
        Xc = Xc - np.outer(t, P[:, a])
    return Xc + x_mean


def pca_fit(X_cal, ratio: float) -> FittedStep:
    """PCA scores retaining ``ratio`` of the original feature count
    (floor, clamped to [1, min(n_cal - 1, p)])."""
    StepSpec("pca", (ratio,))
    X = np.asarray(X_cal, dtype=np.float64)
    n, p = X.shape
    k = max(1, min(int(math.floor(ratio * p)), n - 1, p))
    x_mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - x_mean, full_matrices=False)
    comps = vt[:k]
    # deterministic sign: largest-magnitude loading is positive
    signs = np.sign(comps[np.arange(k), np.argmax(np.abs(comps), axis=1)])
    signs[signs == 0] = 1.0
    comps = comps * signs[:, None]
    return FittedStep(StepSpec("pca", (ratio,)), {"x_mean": x_mean, "components": comps})


def pca_apply(step: FittedStep, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    x_mean = step.state["x_mean"]
    if X.shape[1] != x_mean.size:
        raise ParameterError("pca: feature count differs from fit")
    return (X - x_mean) @ step.state["components"].T


def fit_scaler(X_cal, kind: str) -> FittedStep:
    """Per-feature standard or min-max scaler; statistics from calibration
    rows only. Zero-variance / zero-range features map to 0."""
    X = np.asarray(X_cal, dtype=np.float64)
    if kind == "standard_scale":
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        dead = ~(scale > 0)
        scale = np.where(dead, 1.0, scale)
        return FittedStep(StepSpec(kind), {"offset": mean, "scale": scale, "dead": dead})
    if kind == "minmax_scale":
        lo = X.min(axis=0)
        rng = X.max(axis=0) - lo
        dead = ~(rng > 0)
        rng = np.where(dead, 1.0, rng)
        return FittedStep(StepSpec(kind), {"offset": lo, "scale": rng, "dead": dead})
    raise ParameterError(f"unknown scaler kind {kind!r}")


def apply_scaler(step: FittedStep, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != step.state["offset"].size:
        raise ParameterError("scaler: feature count differs from fit")
    out = (X - step.state["offset"]) / step.state["scale"]
    out[:, step.state["dead"]] = 0.0
    return out


# ---------------------------------------------------------------------------
# pipeline fit/apply


def fit_step(spec: StepSpec, X_cal, y_cal=None) -> tuple[FittedStep, np.ndarray]:
    """Fit one step on calibration rows; returns the fitted step and the
    transformed calibration matrix."""
    k = spec.kind
    if k == "none":
        return FittedStep(spec), np.asarray(X_cal, dtype=np.float64)
    if k == "emsc":
        fitted = emsc_fit(X_cal, *spec.params)
        return fitted, emsc_apply(fitted, X_cal)
    if k == "osc":
        if y_cal is None:
            raise ParameterError("osc requires calibration targets")
        fitted = osc_fit(X_cal, y_cal, *spec.params)
        return fitted, osc_apply(fitted, X_cal)
    if k == "pca":
        fitted = pca_fit(X_cal, *spec.params)
        return fitted, pca_apply(fitted, X_cal)
    if k in ("standard_scale", "minmax_scale"):
        fitted = fit_scaler(X_cal, k)
        return fitted, apply_scaler(fitted, X_cal)
    # stateless kinds
    fitted = FittedStep(spec)
    return fitted, apply_step(fitted, X_cal)


def apply_step(step: FittedStep, X) -> np.ndarray:
    k = step.spec.kind
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if k == "none":
        out = X
    elif k == "snv":
        out = _snv_rows(X)
    elif k == "area_norm":
        out = _area_norm_rows(X)
    elif k == "savgol":
        out = savgol(X, *step.spec.params)
    elif k == "gaussian":
        out = gaussian_smooth(X, *step.spec.params)
    elif k == "asls":
        out = asls_baseline(X, *step.spec.params)
    elif k == "haar":
        out = haar_transform(X)
    elif k == "emsc":
        out = emsc_apply(step, X)
    elif k == "osc":
        out = osc_apply(step, X)
    elif k == "pca":
        out = pca_apply(step, X)
    elif k in ("standard_scale", "minmax_scale"):
        out = apply_scaler(step, X)
    else:  # pragma: no cover - schema guards this
        raise ParameterError(f"unknown step kind {k!r}")
    return _check_finite(out, k)


@dataclass(frozen=True)
class FittedPipeline:
    spec: PipelineSpec
    steps: tuple[FittedStep, ...]
    n_features_in: int
    n_features_out: int
    warnings: tuple[str, ...] = ()


def fit_pipeline(spec: PipelineSpec, X_cal, y_cal=None) -> FittedPipeline:
    """Fit each step in order on the calibration matrix; y-aware steps see
    calibration targets only."""
    X = np.atleast_2d(np.asarray(X_cal, dtype=np.float64))
    n_in = X.shape[1]
    fitted: list[FittedStep] = []
    warnings: list[str] = []
    for i, step_spec in enumerate(spec.steps):
        try:
            fs, X = fit_step(step_spec, X, y_cal)
        except Exception as exc:
            raise PipelineError(f"step {i} ({step_spec}): {exc}", step_index=i) from exc
        if step_spec.kind == "osc" and not all(fs.state["converged"]):
            warnings.append(f"step {i} (osc): not converged, last iterate used")
        fitted.append(fs)
    return FittedPipeline(spec, tuple(fitted), n_in, X.shape[1], tuple(warnings))


def apply_pipeline(fp: FittedPipeline, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != fp.n_features_in:
        raise ParameterError(
            f"pipeline expects {fp.n_features_in} features, got {X.shape[1]}"
        )
    for i, fs in enumerate(fp.steps):
        try:
            X = apply_step(fs, X)
        except Exception as exc:
            raise PipelineError(f"step {i} ({fs.spec}): {exc}", step_index=i) from exc
    return X
