"""Core data model: spectral datasets, manifests, CSV ingestion, splits.

The only ingestion format is CSV: one header row (feature names or
wavelengths), one sample per row, a designated target column. Values must
be finite; missing or non-numeric cells are rejected with their
coordinates rather than imputed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import sampling
from .errors import ConfigError, DataValidationError

REGRESSION = "regression"
CLASSIFICATION = "classification"

BUILTIN_MODELS = ("pls", "plsda", "ridge")
EXTERNAL_MODELS = ("tabpfn", "catboost", "cnn")


@dataclass(frozen=True)
class SpectraMatrix:
    """Row-major absorbance matrix with optional wavelength axis."""

    values: np.ndarray
    wavelengths: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DataValidationError("spectra must be a non-empty 2-d matrix")
        if not np.isfinite(values).all():
            row, col = np.argwhere(~np.isfinite(values))[0]
            raise DataValidationError(
                f"non-finite absorbance at row {row}, column {col}",
                row=int(row),
                column=int(col),
            )
        object.__setattr__(self, "values", values)
        if self.wavelengths is not None:
            wl = np.asarray(self.wavelengths, dtype=np.float64)
            if wl.shape != (values.shape[1],):
                raise DataValidationError("wavelength count differs from feature count")
            if not np.all(np.diff(wl) > 0):
                raise DataValidationError("wavelengths must be strictly increasing")
            object.__setattr__(self, "wavelengths", wl)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class TargetVector:
    """Regression values or dense classification label ids."""

    kind: str
    values: np.ndarray
    label_names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in (REGRESSION, CLASSIFICATION):
            raise DataValidationError(f"unknown task kind {self.kind!r}")
        if self.kind == REGRESSION:
            vals = np.asarray(self.values, dtype=np.float64)
            if not np.isfinite(vals).all():
                row = int(np.flatnonzero(~np.isfinite(vals))[0])
                raise DataValidationError(f"non-finite target at row {row}", row=row)
        else:
            vals = np.asarray(self.values, dtype=np.int64)
            if self.label_names is not None:
                c = len(self.label_names)
                if vals.size and (vals.min() < 0 or vals.max() >= c):
                    raise DataValidationError("label ids outside [0, C)")
        object.__setattr__(self, "values", vals)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SplitSpec:
    method: str  # predefined | spxy | spxy_stratified
    test_fraction: float | None = None
    train_indices: tuple[int, ...] | None = None
    test_indices: tuple[int, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.method == "predefined":
            if not self.train_indices or not self.test_indices:
                raise DataValidationError("predefined split needs indices on both sides")
            tr, te = set(self.train_indices), set(self.test_indices)
            if tr & te:
                raise DataValidationError("train/test indices overlap")
        elif self.method in ("spxy", "spxy_stratified"):
            if self.test_fraction is None or not 0 < self.test_fraction < 1:
                raise DataValidationError("computed split needs test_fraction in (0,1)")
        else:
            raise DataValidationError(f"unknown split method {self.method!r}")


@dataclass(frozen=True)
class Dataset:
    name: str
    database: str
    task: str
    X: SpectraMatrix
    y: TargetVector
    split: SplitSpec

    def __post_init__(self):
        if not self.database:
            raise DataValidationError("database identifier must be nonempty")
        if self.X.n_samples != self.y.n_samples:
            raise DataValidationError(
                f"{self.X.n_samples} spectra but {self.y.n_samples} targets"
            )
        if self.task != self.y.kind:
            raise DataValidationError("dataset task and target kind disagree")


def resolve_split(dataset: Dataset) -> tuple[list[int], list[int]]:
    """Materialise the train/test index lists for a dataset.

    Predefined indices are returned verbatim; SPXY variants are computed
    deterministically from the data (the stored seed only feeds the
    stratified interface).
    """
    split = dataset.split
    n = dataset.X.n_samples
    if split.method == "predefined":
        both = list(split.train_indices) + list(split.test_indices)
        if both and (min(both) < 0 or max(both) >= n):
            raise DataValidationError("split indices out of range")
        return list(split.train_indices), list(split.test_indices)
    if split.method == "spxy":
        y = dataset.y.values if dataset.task == REGRESSION else None
        return sampling.spxy_split(dataset.X.values, y, split.test_fraction)
    if split.method == "spxy_stratified":
        if dataset.task != CLASSIFICATION:
            raise DataValidationError("stratified split needs a classification target")
        return sampling.stratified_split(
            dataset.X.values, dataset.y.values, split.test_fraction, split.seed
        )
    raise DataValidationError(f"unknown split method {split.method!r}")


# ---------------------------------------------------------------------------
# CSV ingestion


def _parse_cell(text: str, row: int, col: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DataValidationError(
            f"non-numeric cell at row {row}, column {col}: {text!r}", row=row, column=col
        ) from None
    if not math.isfinite(v):
        raise DataValidationError(
            f"non-finite value at row {row}, column {col}", row=row, column=col
        )
    return v


def read_csv_dataset(path, target_column: str, task: str):
    """Parse the dataset CSV contract.

    Returns (feature_names, X values, raw target strings). Rows and columns
    in error messages are zero-based data coordinates (header excluded).
    """
    path = Path(path)
    if not path.exists():
        raise DataValidationError(f"missing file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise DataValidationError(f"{path}: empty file")
        if target_column not in header:
            raise DataValidationError(f"{path}: target column {target_column!r} not found")
        t_idx = header.index(target_column)
        feature_names = [h for i, h in enumerate(header) if i != t_idx]
        rows, targets = [], []
        for r, rec in enumerate(reader):
            if len(rec) != len(header):
                raise DataValidationError(f"{path}: row {r} has {len(rec)} cells, expected {len(header)}", row=r)
            targets.append(rec[t_idx])
            vals = []
            c_out = 0
            for c, cell in enumerate(rec):
                if c == t_idx:
                    continue
                vals.append(_parse_cell(cell, r, c_out))
                c_out += 1
            rows.append(vals)
    if not rows:
        raise DataValidationError(f"{path}: no data rows")
    X = np.array(rows, dtype=np.float64)
    if task == REGRESSION:
        y = np.array([_parse_cell(t, r, -1) for r, t in enumerate(targets)])
        return feature_names, X, y, None
    # classification: dense ids in first-occurrence order
    names: list[str] = []
    ids = []
    lookup: dict[str, int] = {}
    for t in targets:
        if t not in lookup:
            lookup[t] = len(names)
            names.append(t)
        ids.append(lookup[t])
    return feature_names, X, np.array(ids, dtype=np.int64), tuple(names)


def wavelengths_from_names(names) -> np.ndarray | None:
    try:
        wl = np.array([float(n) for n in names], dtype=np.float64)
    except ValueError:
        return None
    if wl.size and np.all(np.diff(wl) > 0):
        return wl
    return None


def write_csv_dataset(dataset: Dataset, path, target_column: str = "target"):
    """Write a dataset back to the CSV contract; float cells use the
    shortest decimal text that round-trips the double exactly."""
    path = Path(path)
    X = dataset.X
    if X.wavelengths is not None:
        names = [repr(float(w)) for w in X.wavelengths]
    else:
        names = [f"f{i}" for i in range(X.n_features)]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(names + [target_column])
        for i in range(X.n_samples):
            row = [repr(float(v)) for v in X.values[i]]
            if dataset.task == REGRESSION:
                row.append(repr(float(dataset.y.values[i])))
            else:
                row.append(dataset.y.label_names[int(dataset.y.values[i])])
            writer.writerow(row)


# ---------------------------------------------------------------------------
# manifests


@dataclass(frozen=True)
class DatasetEntry:
    name: str
    path: str
    target_column: str
    task: str
    database: str
    split: dict[str, Any]


@dataclass(frozen=True)
class BenchmarkManifest:
    datasets: tuple[DatasetEntry, ...]
    models: tuple[str, ...]
    folds: int = 3
    workers: int = 18
    seed: int = 0
    external_commands: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if not self.datasets:
            raise ConfigError("no datasets")
        known = set(BUILTIN_MODELS) | set(EXTERNAL_MODELS)
        for m in self.models:
            if m not in known:
                raise ConfigError(f"unknown model {m!r}; registered: {sorted(known)}")


def _read_index_file(path) -> tuple[int, ...]:
    lines = Path(path).read_text(encoding="utf-8").split()
    return tuple(int(v) for v in lines)


def load_manifest(path) -> BenchmarkManifest:
    """Load a manifest from YAML or JSON (selected by file extension)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"manifest not found: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix in (".yaml", ".yml"):
        import yaml

        raw = yaml.safe_load(text)
    else:
        raw = json.loads(text)
    if not isinstance(raw, dict):
        raise ConfigError("manifest must be a mapping")
    entries = []
    for d in raw.get("datasets", []):
        try:
            entry = DatasetEntry(
                name=d["name"],
                path=str((path.parent / d["path"]).resolve()),
                target_column=d["target"],
                task=d.get("task", REGRESSION),
                database=d.get("database", d["name"]),
                split=dict(d["split"]),
            )
        except KeyError as exc:
            raise ConfigError(f"dataset entry missing field {exc}") from exc
        if not Path(entry.path).exists():
            raise ConfigError(f"dataset file not found: {entry.path}")
        entries.append(entry)
    manifest = BenchmarkManifest(
        datasets=tuple(entries),
        models=tuple(raw.get("models", [])),
        folds=int(raw.get("folds", 3)),
        workers=int(raw.get("workers", 18)),
        seed=int(raw.get("seed", 0)),
        external_commands={
            k: list(v) for k, v in (raw.get("external_models") or {}).items()
        },
    )
    return manifest


def load_dataset(entry: DatasetEntry) -> Dataset:
    """Load and validate one manifest dataset entry."""
    names, X, y, label_names = read_csv_dataset(entry.path, entry.target_column, entry.task)
    wl = wavelengths_from_names(names)
    split_cfg = dict(entry.split)
    method = split_cfg.pop("method", None)
    if method is None:
        raise ConfigError(f"{entry.name}: split.method is required (predefined|spxy|spxy_stratified)")
    base = Path(entry.path).parent
    if method == "predefined":
        if "train_file" in split_cfg:
            split_cfg["train_indices"] = _read_index_file(base / split_cfg.pop("train_file"))
        if "test_file" in split_cfg:
            split_cfg["test_indices"] = _read_index_file(base / split_cfg.pop("test_file"))
        if "train" in split_cfg:
            split_cfg["train_indices"] = tuple(split_cfg.pop("train"))
        if "test" in split_cfg:
            split_cfg["test_indices"] = tuple(split_cfg.pop("test"))
    split = SplitSpec(method=method, **split_cfg)
    return Dataset(
        name=entry.name,
        database=entry.database,
        task=entry.task,
        X=SpectraMatrix(X, wl),
        y=TargetVector(entry.task, y, label_names),
        split=split,
    )


def summarize_benchmark(manifest: BenchmarkManifest) -> dict[str, Any]:
    """Counts and per-task medians of n and p across the manifest."""
    if not manifest.datasets:
        raise ConfigError("no datasets")
    datasets = [load_dataset(e) for e in manifest.datasets]
    names = [d.name for d in datasets]
    if len(set(names)) != len(names):
        raise DataValidationError("dataset names must be unique within a run")
    summary: dict[str, Any] = {
        "datasets": len(datasets),
        "databases": len({d.database for d in datasets}),
        "by_task": {},
    }
    for task in (REGRESSION, CLASSIFICATION):
        sizes = [d.X.n_samples for d in datasets if d.task == task]
        dims = [d.X.n_features for d in datasets if d.task == task]
        if sizes:
            summary["by_task"][task] = {
                "datasets": len(sizes),
                "median_n": float(np.median(sizes)),
                "median_p": float(np.median(dims)),
            }
    return summary
