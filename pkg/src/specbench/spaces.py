"""Preprocessing search spaces for the two model families.

Phase 1 is the Cartesian product of baseline/derivative choices with
scatter-correction choices; Phase 2 expands only the retained top
pipelines with representation (and, for linear models, scaling) options.
Enumeration order is fixed: baseline-major, ``none`` first, matching the
published search-space tables so that the pipeline/fit count identities
can be checked exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ParameterError
from .preproc import PipelineSpec, StepSpec

LINEAR = "linear"
TABULAR = "tabular"

_NONE = StepSpec("none")

_SAVGOLS = (
    StepSpec("savgol", (11, 2, 1)),
    StepSpec("savgol", (15, 2, 1)),
    StepSpec("savgol", (21, 2, 1)),
    StepSpec("savgol", (15, 3, 2)),
    StepSpec("savgol", (21, 3, 2)),
)

_SCATTER = (_NONE, StepSpec("snv"), StepSpec("emsc"))


@dataclass(frozen=True)
class SearchSpace:
    family: str
    phase1_baseline: tuple[StepSpec, ...]
    phase1_scatter: tuple[StepSpec, ...]
    phase2_repr: tuple[StepSpec, ...]
    phase2_scale: tuple[StepSpec, ...] = ()
    top_k: int = 3


def search_space(family: str) -> SearchSpace:
    if family == TABULAR:
        return SearchSpace(
            family=TABULAR,
            phase1_baseline=(_NONE, StepSpec("asls")) + _SAVGOLS,
            phase1_scatter=_SCATTER,
            phase2_repr=(_NONE, StepSpec("pca", (0.25,)), StepSpec("osc")),
        )
    if family == LINEAR:
        return SearchSpace(
            family=LINEAR,
            phase1_baseline=(_NONE, StepSpec("asls")) + _SAVGOLS + (StepSpec("gaussian"),),
            phase1_scatter=_SCATTER,
            phase2_repr=(_NONE, StepSpec("haar"), StepSpec("area_norm"), StepSpec("osc")),
            phase2_scale=(_NONE, StepSpec("standard_scale"), StepSpec("minmax_scale")),
        )
    raise ParameterError(f"unknown search-space family {family!r}")


def enumerate_phase1(space: SearchSpace) -> list[PipelineSpec]:
    return [
        PipelineSpec((b, s))
        for b in space.phase1_baseline
        for s in space.phase1_scatter
    ]


def expand_phase2(top: list[PipelineSpec], space: SearchSpace) -> list[PipelineSpec]:
    """Phase-2 candidates for the retained pipelines, duplicates included
    (the all-``none`` expansion reproduces each retained pipeline; its CV
    score is reused from the Phase-1 cache rather than recomputed)."""
    if not top:
        raise ParameterError("no retained pipelines to expand")
    if len(top) > space.top_k:
        raise ParameterError(f"got {len(top)} retained pipelines, top_k={space.top_k}")
    scales = space.phase2_scale or (_NONE,)
    return [
        PipelineSpec(t.steps + (r, sc))
        for t in top
        for r in space.phase2_repr
        for sc in scales
    ]


# model registry -------------------------------------------------------------

MODEL_FAMILY = {
    "pls": LINEAR,
    "plsda": LINEAR,
    "ridge": LINEAR,
    "tabpfn": TABULAR,
    "catboost": TABULAR,
    "cnn": TABULAR,
}

# fixed settings for bridged models: lighter ensembles during CV, full
# ensembles for the final refit on the whole calibration set
EXTERNAL_FIXED = {
    "tabpfn": {"cv": {"n_estimators": 1}, "final": {"n_estimators": 16}},
    "catboost": {"cv": {"n_estimators": 200}, "final": {"n_estimators": 500}},
    "cnn": {"cv": {}, "final": {}},
}

HYPER_TRIALS = {"pls": 30, "plsda": 30, "ridge": 30}  # external models: 1


def hyper_trials(model_kind: str) -> int:
    return HYPER_TRIALS.get(model_kind, 1)


@dataclass(frozen=True)
class SearchCounts:
    """Search-size arithmetic, reported both ways: logical pipeline-fold
    fit counts (cache hits included, as in the published totals) and the
    fits actually executed (Phase-2 duplicates served from cache)."""

    phase1_pipelines: int
    phase2_candidates: int
    total_pipelines: int
    hyper_trials: int
    folds: int
    pipeline_fold_fits: int
    executed_pipelines: int = 0
    executed_pipeline_folds: int = 0


def expected_counts(model_kind: str, folds: int = 3) -> SearchCounts:
    space = search_space(MODEL_FAMILY[model_kind])
    p1 = len(space.phase1_baseline) * len(space.phase1_scatter)
    p2 = space.top_k * len(space.phase2_repr) * max(1, len(space.phase2_scale))
    trials = hyper_trials(model_kind)
    return SearchCounts(
        phase1_pipelines=p1,
        phase2_candidates=p2,
        total_pipelines=p1 + p2,
        hyper_trials=trials,
        folds=folds,
        pipeline_fold_fits=(p1 + p2) * trials * folds,
    )
