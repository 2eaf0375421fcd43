"""Two-phase preprocessing search with joint hyperparameter optimisation.

For every candidate pipeline, the pipeline is fitted per cross-validation
fold on that fold's training part only, the model's hyperparameters are
tuned on the fold scores (exhaustive component counts for PLS/PLS-DA, a
seeded TPE sampler for Ridge, fixed settings for bridged models), and the
pipeline's score is the best mean validation score. The three best
Phase-1 pipelines are expanded with Phase-2 options; all-``none``
expansions reuse the cached Phase-1 scores. The winner is refitted on the
full calibration set and evaluated exactly once on the test rows, which
are reachable only through an access-audited holder.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from . import models, spaces
from .errors import SearchError
from .metrics import balanced_accuracy, rmse
from .preproc import FittedPipeline, PipelineSpec, apply_pipeline, fit_pipeline
from .sampling import fold_indices, spxy_kfold

REGRESSION = "regression"
CLASSIFICATION = "classification"

RIDGE_ALPHA_BOUNDS = (1e-6, 1e6)


# ---------------------------------------------------------------------------
# TPE sampler


@dataclass(frozen=True)
class TPEConfig:
    n_startup: int = 10
    gamma: float = 0.25
    n_candidates: int = 24
    fallback_bandwidth: float = 0.5  # log10 units


def _van_der_corput(i: int) -> float:
    x, f = 0.0, 0.5
    while i:
        x += f * (i & 1)
        i >>= 1
        f *= 0.5
    return x


def _silverman_bandwidth(v: np.ndarray, fallback: float) -> float:
    if v.size < 2:
        return fallback
    sd = float(v.std(ddof=1))
    iqr = float(np.percentile(v, 75) - np.percentile(v, 25))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    bw = 0.9 * spread * v.size ** (-0.2)
    if not math.isfinite(bw) or bw <= 0:
        return fallback
    return bw


def _log_kde(x: np.ndarray, centers: np.ndarray, bw: float) -> np.ndarray:
    z = (x[:, None] - centers[None, :]) / bw
    dens = np.exp(-0.5 * z**2).mean(axis=1) / (bw * math.sqrt(2.0 * math.pi))
    return np.log(np.maximum(dens, 1e-300))


def tpe_suggest(
    history: list[tuple[float, float]],
    bounds: tuple[float, float] = RIDGE_ALPHA_BOUNDS,
    seed: int = 0,
    trial_index: int = 0,
    config: TPEConfig = TPEConfig(),
) -> float:
    """Suggest the next value of a positive hyperparameter searched in
    log10 space.

    ``history`` holds (value, score) pairs with lower scores better. The
    first ``n_startup`` trials are low-discrepancy draws over the log
    bounds, independent of the scores; afterwards the history is split at
    the gamma quantile into good/bad sets, Gaussian kernel densities l and
    g are fitted in log space (Silverman bandwidths with a 0.5 log-unit
    degenerate fallback), and the best of ``n_candidates`` draws from l
    under the l/g ratio is returned. Deterministic given (history, seed,
    trial_index).
    """
    lo_v, hi_v = bounds
    if not (hi_v > lo_v > 0):
        raise SearchError("tpe: bounds must satisfy 0 < lo < hi")
    lo, hi = math.log10(lo_v), math.log10(hi_v)
    if trial_index < config.n_startup or not history:
        offset = float(np.random.default_rng(seed).random())
        u = (_van_der_corput(trial_index + 1) + offset) % 1.0
        return 10.0 ** (lo + (hi - lo) * u)
    logs = np.array([math.log10(v) for v, _ in history])
    scores = np.array([s for _, s in history])
    n_good = max(1, math.ceil(config.gamma * len(history)))
    order = np.argsort(scores, kind="stable")
    good = logs[order[:n_good]]
    bad = logs[order[n_good:]]
    if bad.size == 0:
        bad = logs
    bw_l = _silverman_bandwidth(good, config.fallback_bandwidth)
    bw_g = _silverman_bandwidth(bad, config.fallback_bandwidth)
    rng = np.random.default_rng([seed, trial_index])
    picks = rng.integers(0, good.size, config.n_candidates)
    cands = good[picks] + bw_l * rng.standard_normal(config.n_candidates)
    cands = np.clip(cands, lo, hi)
    gain = _log_kde(cands, good, bw_l) - _log_kde(cands, bad, bw_g)
    return 10.0 ** float(cands[int(np.argmax(gain))])


# ---------------------------------------------------------------------------
# trial records


@dataclass(frozen=True)
class TrialRecord:
    pipeline: PipelineSpec
    phase: int
    hyperparams: dict[str, Any]
    fold_scores: tuple[float, ...]
    mean_score: float | None  # positive orientation (RMSECV / ACC-CV)
    objective: float | None  # internal lower-is-better value
    status: str = "ok"
    error: str | None = None
    cached: bool = False
    walltime: float = 0.0


@dataclass(frozen=True)
class SearchOutcome:
    dataset: str
    model: str
    task: str
    pipeline: PipelineSpec
    hyperparams: dict[str, Any]
    cv_score: float
    test_score: float
    predictions: np.ndarray
    y_test: np.ndarray
    trials: tuple[TrialRecord, ...]
    counts: spaces.SearchCounts
    test_evaluations: int
    warnings: tuple[str, ...] = ()


class AuditedTestSet:
    """The only path to the test rows; every access is logged."""

    def __init__(self, X_test, y_test):
        self._X = np.asarray(X_test, dtype=np.float64)
        self._y = np.asarray(y_test)
        self.accesses = 0
        self.log: list[str] = []

    def take(self, context: str):
        self.accesses += 1
        self.log.append(context)
        return self._X, self._y


def _stable_seed(*parts) -> int:
    digest = hashlib.sha256("".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _score(task: str, y_true, y_pred) -> float:
    if task == REGRESSION:
        return rmse(y_true, y_pred)
    return balanced_accuracy(y_true, y_pred)


def _objective(task: str, score: float) -> float:
    return score if task == REGRESSION else -score


ExternalRunner = Callable[[str, np.ndarray, np.ndarray, np.ndarray, dict], np.ndarray]


class SearchSession:
    """Runs the full two-phase search for one (dataset, model) pair."""

    def __init__(
        self,
        X_cal,
        y_cal,
        task: str,
        model_kind: str,
        folds: int = 3,
        seed: int = 0,
        external_runner: ExternalRunner | None = None,
        space: spaces.SearchSpace | None = None,
        dataset_name: str = "dataset",
    ):
        self.X = np.asarray(X_cal, dtype=np.float64)
        self.y = np.asarray(y_cal)
        self.task = task
        self.model_kind = model_kind
        self.k = folds
        self.seed = seed
        self.dataset_name = dataset_name
        self.external_runner = external_runner
        self.space = space or spaces.search_space(spaces.MODEL_FAMILY[model_kind])
        fold_y = self.y if task == REGRESSION else None
        self.folds = fold_indices(spxy_kfold(self.X, fold_y, folds), folds)
        self.trials: list[TrialRecord] = []
        self._cache: dict[str, list[TrialRecord]] = {}
        self.executed_pipelines = 0

    # -- pipeline evaluation ------------------------------------------------

    def _fit_fold_data(self, pipe: PipelineSpec):
        data = []
        for tr, va in self.folds:
            fp = fit_pipeline(pipe, self.X[tr], self.y[tr])
            data.append(
                (
                    apply_pipeline(fp, self.X[tr]),
                    self.y[tr],
                    apply_pipeline(fp, self.X[va]),
                    self.y[va],
                )
            )
        return data

    def evaluate_pipeline(self, pipe: PipelineSpec, phase: int) -> TrialRecord | None:
        """Evaluate one pipeline; appends every hyperparameter trial to the
        log and returns the pipeline's best trial (None if it failed)."""
        key = str(pipe)
        if key in self._cache:
            cached = [
                replace(t, phase=phase, cached=True, walltime=0.0)
                for t in self._cache[key]
            ]
            self.trials.extend(cached)
            ok = [t for t in cached if t.status == "ok"]
            return min(ok, key=lambda t: t.objective) if ok else None
        start = time.perf_counter()
        try:
            fold_data = self._fit_fold_data(pipe)
        except Exception as exc:
            failed = TrialRecord(
                pipe, phase, {}, (), None, None,
                status="failed", error=f"{type(exc).__name__}: {exc}",
                walltime=time.perf_counter() - start,
            )
            self.trials.append(failed)
            self._cache[key] = [failed]
            return None
        self.executed_pipelines += 1
        if self.model_kind in ("pls", "plsda"):
            produced = self._tune_pls(pipe, phase, fold_data)
        elif self.model_kind == "ridge":
            produced = self._tune_ridge(pipe, phase, fold_data)
        else:
            produced = self._run_external_cv(pipe, phase, fold_data)
        self._cache[key] = produced
        self.trials.extend(produced)
        ok = [t for t in produced if t.status == "ok"]
        return min(ok, key=lambda t: t.objective) if ok else None

    def _tune_pls(self, pipe, phase, fold_data) -> list[TrialRecord]:
        start = time.perf_counter()
        cap = min(
            models.MAX_COMPONENTS,
            min(d[0].shape[0] - 1 for d in fold_data),
            min(d[0].shape[1] for d in fold_data),
        )
        if cap < 1:
            return [TrialRecord(pipe, phase, {}, (), None, None, status="failed",
                                error="no usable component range")]
        per_fold = []
        try:
            for Xtr, ytr, Xva, yva in fold_data:
                if self.model_kind == "pls":
                    fp = models.pls_fit(Xtr, ytr, cap)
                    preds = models.pls_component_predictions(fp, Xva)
                    scores = [
                        _score(self.task, yva, preds[:, a])
                        for a in range(fp.state["n_components_used"])
                    ]
                else:
                    scores = []
                    for a in range(1, cap + 1):
                        fp = models.plsda_fit(Xtr, ytr, a)
                        scores.append(_score(self.task, yva, models.predict(fp, Xva)))
                per_fold.append(scores)
        except Exception as exc:
            return [TrialRecord(pipe, phase, {}, (), None, None, status="failed",
                                error=f"{type(exc).__name__}: {exc}",
                                walltime=time.perf_counter() - start)]
        usable = min(len(s) for s in per_fold)
        elapsed = time.perf_counter() - start
        out = []
        for a in range(usable):
            fold_scores = tuple(s[a] for s in per_fold)
            mean = float(np.mean(fold_scores))
            out.append(
                TrialRecord(
                    pipe, phase, {"n_components": a + 1}, fold_scores, mean,
                    _objective(self.task, mean), walltime=elapsed / usable,
                )
            )
        return out

    def _tune_ridge(self, pipe, phase, fold_data) -> list[TrialRecord]:
        tpe_seed = _stable_seed(self.seed, self.dataset_name, self.model_kind, str(pipe))
        history: list[tuple[float, float]] = []
        out: list[TrialRecord] = []
        for i in range(spaces.hyper_trials("ridge")):
            alpha = tpe_suggest(history, RIDGE_ALPHA_BOUNDS, tpe_seed, i)
            start = time.perf_counter()
            try:
                fold_scores = tuple(
                    _score(self.task, yva, models.predict(models.ridge_fit(Xtr, ytr, alpha), Xva))
                    for Xtr, ytr, Xva, yva in fold_data
                )
            except Exception as exc:
                out.append(TrialRecord(pipe, phase, {"alpha": alpha}, (), None, None,
                                       status="failed", error=f"{type(exc).__name__}: {exc}",
                                       walltime=time.perf_counter() - start))
                continue
            mean = float(np.mean(fold_scores))
            obj = _objective(self.task, mean)
            history.append((alpha, obj))
            out.append(TrialRecord(pipe, phase, {"alpha": alpha}, fold_scores, mean, obj,
                                   walltime=time.perf_counter() - start))
        return out

    def _run_external_cv(self, pipe, phase, fold_data) -> list[TrialRecord]:
        if self.external_runner is None:
            return [TrialRecord(pipe, phase, {}, (), None, None, status="failed",
                                error=f"no adapter available for {self.model_kind}")]
        params = dict(spaces.EXTERNAL_FIXED.get(self.model_kind, {"cv": {}})["cv"])
        start = time.perf_counter()
        try:
            fold_scores = tuple(
                _score(self.task, yva, self.external_runner(self.task, Xtr, ytr, Xva, params))
                for Xtr, ytr, Xva, yva in fold_data
            )
        except Exception as exc:
            return [TrialRecord(pipe, phase, dict(params), (), None, None, status="failed",
                                error=f"{type(exc).__name__}: {exc}",
                                walltime=time.perf_counter() - start)]
        mean = float(np.mean(fold_scores))
        return [TrialRecord(pipe, phase, dict(params), fold_scores, mean,
                            _objective(self.task, mean),
                            walltime=time.perf_counter() - start)]

    # -- phases ---------------------------------------------------------------

    def run(self) -> TrialRecord:
        """Execute Phase 1 and Phase 2; returns the winning trial."""
        phase1 = spaces.enumerate_phase1(self.space)
        best1: list[tuple[float, int, TrialRecord]] = []
        for i, pipe in enumerate(phase1):
            best = self.evaluate_pipeline(pipe, 1)
            if best is not None:
                best1.append((best.objective, i, best))
        if not best1:
            raise SearchError("all Phase-1 pipelines failed")
        best1.sort(key=lambda t: (t[0], t[1]))
        top = [t[2].pipeline for t in best1[: self.space.top_k]]
        phase2 = spaces.expand_phase2(top, self.space)
        winners: list[tuple[float, int, TrialRecord]] = []
        for i, pipe in enumerate(phase2):
            best = self.evaluate_pipeline(pipe, 2)
            if best is not None:
                winners.append((best.objective, i, best))
        if not winners:
            raise SearchError("all Phase-2 pipelines failed")
        winners.sort(key=lambda t: (t[0], t[1]))
        return winners[0][2]

    def counts(self) -> spaces.SearchCounts:
        expected = spaces.expected_counts(self.model_kind, self.k)
        return replace(
            expected,
            executed_pipelines=self.executed_pipelines,
            executed_pipeline_folds=self.executed_pipelines * self.k,
        )

    # -- final refit ------------------------------------------------------------

    def finalize(self, best: TrialRecord, test: AuditedTestSet) -> SearchOutcome:
        """Refit the winning pipeline and model on the full calibration set
        and evaluate once on the held-out test rows."""
        fp = fit_pipeline(best.pipeline, self.X, self.y)
        X_cal_t = apply_pipeline(fp, self.X)
        predictor, final_params = self._fit_final(best, X_cal_t)
        X_test, y_test = test.take(f"finalize:{self.dataset_name}:{self.model_kind}")
        X_test_t = apply_pipeline(fp, X_test)
        if predictor is not None:
            preds = models.predict(predictor, X_test_t)
        else:
            preds = self.external_runner(self.task, X_cal_t, self.y, X_test_t, final_params)
            preds = np.asarray(preds)
        test_score = _score(self.task, y_test, preds)
        return SearchOutcome(
            dataset=self.dataset_name,
            model=self.model_kind,
            task=self.task,
            pipeline=best.pipeline,
            hyperparams=final_params,
            cv_score=best.mean_score,
            test_score=test_score,
            predictions=preds,
            y_test=np.asarray(y_test),
            trials=tuple(self.trials),
            counts=self.counts(),
            test_evaluations=test.accesses,
            warnings=fp.warnings,
        )

    def _fit_final(self, best: TrialRecord, X_cal_t):
        if self.model_kind == "pls":
            a = min(best.hyperparams["n_components"], X_cal_t.shape[0] - 1, X_cal_t.shape[1])
            return models.pls_fit(X_cal_t, self.y, a), {"n_components": a}
        if self.model_kind == "plsda":
            a = min(best.hyperparams["n_components"], X_cal_t.shape[0] - 1, X_cal_t.shape[1])
            return models.plsda_fit(X_cal_t, self.y, a), {"n_components": a}
        if self.model_kind == "ridge":
            alpha = best.hyperparams["alpha"]
            return models.ridge_fit(X_cal_t, self.y, alpha), {"alpha": alpha}
        params = dict(spaces.EXTERNAL_FIXED.get(self.model_kind, {"final": {}})["final"])
        if self.external_runner is None:
            raise SearchError(f"no adapter available for {self.model_kind}")
        return None, params


def run_search(
    X_cal,
    y_cal,
    X_test,
    y_test,
    task: str,
    model_kind: str,
    folds: int = 3,
    seed: int = 0,
    external_runner: ExternalRunner | None = None,
    dataset_name: str = "dataset",
) -> SearchOutcome:
    """Convenience wrapper: full two-phase search plus final evaluation."""
    session = SearchSession(
        X_cal, y_cal, task, model_kind, folds=folds, seed=seed,
        external_runner=external_runner, dataset_name=dataset_name,
    )
    best = session.run()
    return session.finalize(best, AuditedTestSet(X_test, y_test))
