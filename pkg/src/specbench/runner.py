"""Benchmark orchestration: runs every (dataset, model) cell from a
manifest, with resumable per-cell artifacts and deterministic outputs.

Each cell runs the full two-phase search with a seed derived stably from
(run seed, dataset, model), so results are byte-identical whatever the
worker count or completion order. Artifacts are written atomically
(temp file + rename); completed cells are skipped when resuming.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import os
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from . import bridge, report as report_mod
from .dataset import (
    BenchmarkManifest,
    Dataset,
    load_dataset,
    resolve_split,
    REGRESSION,
    BUILTIN_MODELS,
)
from .errors import ConfigError, SpecbenchError
from .metrics import detect_spectral_outliers, extrapolation_indices, subset_rmsep
from .search import AuditedTestSet, SearchSession, _stable_seed

DEFAULT_WORKERS = 18  # benchmark-wide concurrency cap


def _atomic_write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def cell_path(out_dir: Path, dataset: str, model: str) -> Path:
    return out_dir / "cells" / f"{dataset}__{model}.json"


@dataclass
class RunResult:
    out_dir: Path
    n_cells: int
    n_failed: int
    n_skipped: int


def _dataset_context(ds: Dataset) -> dict[str, Any]:
    train_idx, test_idx = resolve_split(ds)
    if not train_idx or not test_idx:
        raise ConfigError(f"{ds.name}: split resolved to an empty side")
    X_cal = ds.X.values[train_idx]
    X_test = ds.X.values[test_idx]
    y_cal = ds.y.values[train_idx]
    y_test = ds.y.values[test_idx]
    try:
        outliers = detect_spectral_outliers(X_cal, X_test)
        outlier_idx = list(outliers.outlier_indices)
        outlier_note = None
    except SpecbenchError as exc:
        outlier_idx = []
        outlier_note = str(exc)
    extra_idx = (
        extrapolation_indices(y_cal, y_test) if ds.task == REGRESSION else []
    )
    return {
        "dataset": ds,
        "X_cal": X_cal,
        "y_cal": y_cal,
        "X_test": X_test,
        "y_test": y_test,
        "outlier_idx": outlier_idx,
        "outlier_note": outlier_note,
        "extra_idx": extra_idx,
    }


def _run_cell(ctx: dict[str, Any], model: str, manifest: BenchmarkManifest) -> dict[str, Any]:
    ds: Dataset = ctx["dataset"]
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    t0 = time.perf_counter()
    record: dict[str, Any] = {
        "dataset": ds.name,
        "database": ds.database,
        "model": model,
        "task": ds.task,
        "n_train": int(len(ctx["y_cal"])),
        "n_test": int(len(ctx["y_test"])),
        "n_features": int(ds.X.n_features),
        "started_at": started,
    }
    client = None
    try:
        external_runner = None
        if model not in BUILTIN_MODELS:
            command = manifest.external_commands.get(model)
            if not command:
                record.update(status="unavailable",
                              error=f"no adapter command configured for {model!r}")
                record["finished_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
                return record
            client = bridge.spawn_external(model, command, run_id=f"{ds.name}:{model}")
            external_runner = bridge.make_external_runner(client)
        session = SearchSession(
            ctx["X_cal"], ctx["y_cal"], ds.task, model,
            folds=manifest.folds,
            seed=_stable_seed(manifest.seed, ds.name, model),
            external_runner=external_runner,
            dataset_name=ds.name,
        )
        best = session.run()
        outcome = session.finalize(best, AuditedTestSet(ctx["X_test"], ctx["y_test"]))
        preds = outcome.predictions
        record.update(
            status="ok",
            pipeline=str(outcome.pipeline),
            hyperparams=outcome.hyperparams,
            cv_score=outcome.cv_score,
            test_score=outcome.test_score,
            predictions=[float(v) for v in preds],
            y_test=[float(v) for v in outcome.y_test],
            test_evaluations=outcome.test_evaluations,
            counts=vars(outcome.counts) | {},
            warnings=list(outcome.warnings),
            outlier_metric=subset_rmsep(ctx["y_test"], preds, ctx["outlier_idx"])
            if ds.task == REGRESSION else None,
            n_outliers=len(ctx["outlier_idx"]),
            outlier_note=ctx["outlier_note"],
            extrapolation_metric=subset_rmsep(ctx["y_test"], preds, ctx["extra_idx"])
            if ds.task == REGRESSION else None,
            n_extrapolation=len(ctx["extra_idx"]),
            trials=[_trial_dict(t) for t in outcome.trials],
        )
    except SpecbenchError as exc:
        record.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    finally:
        if client is not None:
            client.shutdown()
    record["walltime_s"] = time.perf_counter() - t0
    record["finished_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    return record


def _trial_dict(t) -> dict[str, Any]:
    return {
        "pipeline": str(t.pipeline),
        "phase": t.phase,
        "hyperparams": t.hyperparams,
        "fold_scores": list(t.fold_scores),
        "mean_score": t.mean_score,
        "status": t.status,
        "error": t.error,
        "cached": t.cached,
        "walltime_s": t.walltime,
    }


def run_benchmark(
    manifest: BenchmarkManifest,
    out_dir,
    workers: int | None = None,
    models: list[str] | None = None,
    datasets: list[str] | None = None,
    resume: bool = False,
    manifest_path=None,
    log=print,
) -> RunResult:
    out_dir = Path(out_dir)
    (out_dir / "cells").mkdir(parents=True, exist_ok=True)

    wanted_models = tuple(models) if models else manifest.models
    for m in wanted_models:
        if m not in manifest.models:
            raise ConfigError(f"model {m!r} not listed in the manifest")
    entries = [
        e for e in manifest.datasets
        if datasets is None or e.name in datasets
    ]
    if not entries:
        raise ConfigError("no datasets selected")
    loaded = {e.name: load_dataset(e) for e in entries}
    names = sorted(loaded)
    if workers is None:
        workers = manifest.workers or DEFAULT_WORKERS
    workers = max(1, int(workers))

    contexts = {name: _dataset_context(loaded[name]) for name in names}
    cells = [(name, model) for name in names for model in sorted(wanted_models)]

    n_skipped = 0
    todo = []
    for name, model in cells:
        path = cell_path(out_dir, name, model)
        if resume and path.exists():
            n_skipped += 1
            log(f"[cell] {name} {model} resumed (cached)")
            continue
        todo.append((name, model))

    def compute(cell):
        name, model = cell
        rec = _run_cell(contexts[name], model, manifest)
        _atomic_write(cell_path(out_dir, name, model), json.dumps(rec, indent=1))
        log(f"[cell] {name} {model} status={rec['status']}"
            + (f" test_score={rec.get('test_score'):.6g}" if rec.get("test_score") is not None else ""))
        return rec

    if todo:
        with ThreadPoolExecutor(max_workers=min(workers, len(todo))) as pool:
            list(pool.map(compute, todo))

    records = [json.loads(cell_path(out_dir, n, m).read_text()) for n, m in cells]
    n_failed = sum(1 for r in records if r["status"] != "ok")

    _write_results_csv(out_dir, records)
    _write_trials_csv(out_dir, records)
    _write_robustness_csv(out_dir, records)
    meta = {
        "seed": manifest.seed,
        "folds": manifest.folds,
        "models": list(wanted_models),
        "datasets": names,
        "kernels": _kernel_impl(),
    }
    _atomic_write(out_dir / "run_meta.json", json.dumps(meta, indent=1, sort_keys=True))
    if manifest_path is not None:
        shutil.copy(manifest_path, out_dir / ("manifest" + Path(manifest_path).suffix))
    report_mod.generate_reports(out_dir, log=log)
    return RunResult(out_dir, len(cells), n_failed, n_skipped)


def _kernel_impl() -> str:
    from . import _kernels

    return _kernels.IMPLEMENTATION


def _reference_model(task: str) -> str:
    return "pls" if task == REGRESSION else "plsda"


def _write_results_csv(out_dir: Path, records: list[dict]):
    by_dataset: dict[str, dict[str, dict]] = {}
    for r in records:
        by_dataset.setdefault(r["dataset"], {})[r["model"]] = r
    rows = []
    header = [
        "dataset", "database", "model", "task", "status", "pipeline",
        "hyperparams", "cv_score", "test_score", "relative_vs_reference",
        "n_train", "n_test", "n_features", "error",
    ]
    for r in sorted(records, key=lambda r: (r["dataset"], r["model"])):
        rel = report_mod.relative_to_reference(r, by_dataset[r["dataset"]])
        rows.append([
            r["dataset"], r["database"], r["model"], r["task"], r["status"],
            r.get("pipeline", ""),
            json.dumps(r.get("hyperparams", {}), sort_keys=True) if r.get("hyperparams") else "",
            _fmt(r.get("cv_score")), _fmt(r.get("test_score")), _fmt(rel),
            r["n_train"], r["n_test"], r["n_features"], r.get("error") or "",
        ])
    _write_csv(out_dir / "results.csv", header, rows)


def _write_trials_csv(out_dir: Path, records: list[dict]):
    header = [
        "dataset", "model", "phase", "pipeline", "hyperparams",
        "fold_scores", "mean_score", "status", "cached", "walltime_s",
    ]
    rows = []
    for r in sorted(records, key=lambda r: (r["dataset"], r["model"])):
        for t in r.get("trials", []):
            rows.append([
                r["dataset"], r["model"], t["phase"], t["pipeline"],
                json.dumps(t["hyperparams"], sort_keys=True),
                ";".join(repr(float(s)) for s in t["fold_scores"]),
                _fmt(t["mean_score"]), t["status"], int(t["cached"]),
                _fmt(t["walltime_s"]),
            ])
    _write_csv(out_dir / "trials.csv", header, rows)


def _write_robustness_csv(out_dir: Path, records: list[dict]):
    by_dataset: dict[str, dict[str, dict]] = {}
    for r in records:
        by_dataset.setdefault(r["dataset"], {})[r["model"]] = r
    header = [
        "dataset", "model", "n_out", "pct_out", "rmsep_out", "irmsep_out",
        "n_extra", "rmsep_extra",
    ]
    rows = []
    for r in sorted(records, key=lambda r: (r["dataset"], r["model"])):
        if r["status"] != "ok" or r["task"] != REGRESSION:
            continue
        ref = by_dataset[r["dataset"]].get(_reference_model(r["task"]))
        irmsep_out = None
        if (
            ref is not None and ref.get("status") == "ok"
            and ref.get("outlier_metric") and r.get("outlier_metric") is not None
        ):
            irmsep_out = 100.0 * (ref["outlier_metric"] - r["outlier_metric"]) / ref["outlier_metric"]
        n_test = r["n_test"]
        rows.append([
            r["dataset"], r["model"], r.get("n_outliers", 0),
            _fmt(100.0 * r.get("n_outliers", 0) / n_test if n_test else None),
            _fmt(r.get("outlier_metric")), _fmt(irmsep_out),
            r.get("n_extrapolation", 0), _fmt(r.get("extrapolation_metric")),
        ])
    _write_csv(out_dir / "robustness.csv", header, rows)


def _write_csv(path: Path, header: list[str], rows: list[list]):
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    os.replace(tmp, path)
