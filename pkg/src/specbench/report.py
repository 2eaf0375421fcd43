"""Derived report artifacts: relative-improvement tables, rank statistics,
win/loss summaries, cumulative-improvement curves, and a minimal
critical-difference diagram in SVG.

The 10x IQR extreme filter is display-only: flagged datasets are dropped
from the plot/cumulative data files but always kept in results.csv and the
rank statistics.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from . import stats
from .errors import ConfigError, ParameterError
from .metrics import irmsep, relative_acc_gain

REGRESSION = "regression"
CLASSIFICATION = "classification"

IQR_FACTOR = 10.0


def reference_model(task: str) -> str:
    return "pls" if task == REGRESSION else "plsda"


def relative_to_reference(record: dict, dataset_records: dict[str, dict],
                          reference: str | None = None) -> float | None:
    """iRMSEP (regression) or relative accuracy gain (classification) of a
    cell versus the reference model on the same dataset."""
    if record.get("status") != "ok" or record.get("test_score") is None:
        return None
    ref_name = reference or reference_model(record["task"])
    ref = dataset_records.get(ref_name)
    if ref is None or ref.get("status") != "ok" or ref.get("test_score") in (None, 0):
        return None
    if record["task"] == REGRESSION:
        if not ref["test_score"] > 0:
            return None
        return irmsep(ref["test_score"], record["test_score"])
    if not ref["test_score"] > 0:
        return None
    return relative_acc_gain(ref["test_score"], record["test_score"])


def load_cells(out_dir) -> list[dict]:
    cell_dir = Path(out_dir) / "cells"
    if not cell_dir.is_dir():
        raise ConfigError(f"no cells directory under {out_dir}")
    return [
        json.loads(p.read_text())
        for p in sorted(cell_dir.glob("*.json"))
    ]


def _iqr_excluded_datasets(values_by_dataset: dict[str, list[float]]) -> set[str]:
    pooled = [v for vals in values_by_dataset.values() for v in vals]
    if len(pooled) < 4:
        return set()
    q1, q3 = np.percentile(pooled, [25, 75])
    iqr = q3 - q1
    lo, hi = q1 - IQR_FACTOR * iqr, q3 + IQR_FACTOR * iqr
    return {
        name for name, vals in values_by_dataset.items()
        if any(v < lo or v > hi for v in vals)
    }


def generate_reports(out_dir, reference: str | None = None, log=print):
    """Compute every derived artifact from the per-cell records."""
    out_dir = Path(out_dir)
    cells = load_cells(out_dir)
    if not cells:
        raise ConfigError("no completed cells to report on")
    ok = [c for c in cells if c["status"] == "ok" and c.get("test_score") is not None]
    by_task: dict[str, list[dict]] = {}
    for c in ok:
        by_task.setdefault(c["task"], []).append(c)

    rank_rows = []
    winloss_rows = []
    friedman_doc = {}
    groups_doc = {}
    plot_rows = []
    cumulative_rows = []
    for task, records in sorted(by_task.items()):
        ref_name = reference or reference_model(task)
        by_dataset: dict[str, dict[str, dict]] = {}
        for r in records:
            by_dataset.setdefault(r["dataset"], {})[r["model"]] = r
        if not any(ref_name in models for models in by_dataset.values()):
            raise ConfigError(f"missing reference model rows for {ref_name!r} ({task})")

        # relative values vs reference, per dataset x model (reference excluded)
        rel: dict[str, dict[str, float]] = {}
        for ds_name, models_map in sorted(by_dataset.items()):
            for model, r in sorted(models_map.items()):
                if model == ref_name:
                    continue
                v = relative_to_reference(r, models_map, ref_name)
                if v is not None:
                    rel.setdefault(ds_name, {})[model] = v
        excluded = _iqr_excluded_datasets(
            {ds: list(m.values()) for ds, m in rel.items()}
        )
        for ds_name, models_map in sorted(rel.items()):
            if ds_name in excluded:
                continue
            for model, v in sorted(models_map.items()):
                plot_rows.append([task, model, ds_name, repr(v)])

        # cumulative curves over three dataset-size axes
        meta = {r["dataset"]: r for r in records}
        axes = {
            "samples": lambda r: r["n_train"] + r["n_test"],
            "features": lambda r: r["n_features"],
            "cells": lambda r: (r["n_train"] + r["n_test"]) * r["n_features"],
        }
        models_in_rel = sorted({m for v in rel.values() for m in v})
        for axis, key in axes.items():
            ordered = sorted(
                (ds for ds in rel if ds not in excluded),
                key=lambda ds: (key(meta[ds]), ds),
            )
            for model in models_in_rel:
                total = 0.0
                idx = 0
                for ds in ordered:
                    if model not in rel[ds]:
                        continue
                    total += rel[ds][model]
                    cumulative_rows.append([
                        task, axis, model, idx, ds, key(meta[ds]),
                        repr(rel[ds][model]), repr(total),
                    ])
                    idx += 1

        # rank statistics at the database level
        score_records = [
            (r["database"], r["dataset"], r["model"], r["test_score"]) for r in records
        ]
        orientation = stats.LOWER if task == REGRESSION else stats.HIGHER
        try:
            table = stats.aggregate_scores(score_records, orientation)
            result = stats.friedman_test(table)
        except ParameterError as exc:
            log(f"[report] {task}: rank statistics skipped ({exc})")
            table = result = None
        if table is not None:
            for model, avg in zip(table.models, table.avg_ranks):
                rank_rows.append([task, model, repr(float(avg)), result.n_databases])
            friedman_doc[task] = {
                "statistic": result.statistic,
                "df": result.df,
                "p_value": result.p_value,
                "cd": result.cd,
                "alpha": result.alpha,
                "n_databases": result.n_databases,
                "models": list(table.models),
                "avg_ranks": [float(v) for v in table.avg_ranks],
                "significant": result.significant.tolist(),
            }
            diagram = stats.cd_diagram_data(table, result.cd)
            groups_doc[task] = diagram
            svg_name = "cd_diagram.svg" if task == REGRESSION or REGRESSION not in by_task \
                else "cd_diagram_classification.svg"
            _atomic(out_dir / svg_name, render_cd_diagram(diagram))
            models_list = sorted(table.models)
            for i, a in enumerate(models_list):
                for b in models_list[i + 1:]:
                    w, t, l, wr, nlr = stats.win_loss(score_records, a, b, orientation)
                    winloss_rows.append([task, a, b, w, t, l, repr(wr), repr(nlr)])

    _write_csv(out_dir / "ranks.csv", ["task", "model", "avg_rank", "n_databases"], rank_rows)
    _write_csv(
        out_dir / "winloss.csv",
        ["task", "model_a", "model_b", "wins", "ties", "losses", "win_rate", "non_loss_rate"],
        winloss_rows,
    )
    _write_csv(out_dir / "plot_points.csv", ["task", "model", "dataset", "value"], plot_rows)
    _write_csv(
        out_dir / "cumulative.csv",
        ["task", "axis", "model", "order_index", "dataset", "x_value", "value", "cumulative"],
        cumulative_rows,
    )
    _atomic(out_dir / "friedman.json", json.dumps(friedman_doc, indent=1, sort_keys=True))
    _atomic(out_dir / "cd_groups.json", json.dumps(groups_doc, indent=1, sort_keys=True))


def render_cd_diagram(data: dict, width: int = 720) -> str:
    """Minimal critical-difference diagram: rank axis, model labels at
    their average ranks, the CD ruler, and non-significance connectors."""
    models = data["models"]
    ranks = data["ranks"]
    cd = data["cd"]
    k = len(models)
    margin = 60.0
    axis_y = 70.0
    span = max(ranks[-1] - ranks[0], 1e-9) if k > 1 else 1.0
    lo = ranks[0]

    def x_of(rank):
        return margin + (rank - lo) / span * (width - 2 * margin)

    label_step = 22.0
    height = axis_y + 40.0 + label_step * k
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height:.0f}" font-family="sans-serif" font-size="12">',
        f'<line x1="{margin}" y1="{axis_y}" x2="{width - margin}" y2="{axis_y}" stroke="black"/>',
    ]
    # rank ticks at integers covering the spread
    for tick in range(int(np.floor(lo)), int(np.ceil(ranks[-1])) + 1):
        if lo <= tick <= ranks[-1] or k == 1:
            tx = x_of(tick)
            parts.append(f'<line x1="{tx:.1f}" y1="{axis_y - 5}" x2="{tx:.1f}" y2="{axis_y}" stroke="black"/>')
            parts.append(f'<text x="{tx:.1f}" y="{axis_y - 10}" text-anchor="middle">{tick}</text>')
    # CD ruler
    cd_x0 = margin
    cd_x1 = margin + cd / span * (width - 2 * margin)
    parts.append(f'<line x1="{cd_x0:.1f}" y1="20" x2="{min(cd_x1, width - 10):.1f}" y2="20" stroke="black" stroke-width="3"/>')
    parts.append(f'<text x="{cd_x0:.1f}" y="14">CD = {cd:.3f}</text>')
    # model leaders and labels
    for i, (name, rank) in enumerate(zip(models, ranks)):
        mx = x_of(rank)
        ly = axis_y + 30 + label_step * i
        parts.append(f'<line x1="{mx:.1f}" y1="{axis_y}" x2="{mx:.1f}" y2="{ly - 4:.1f}" stroke="gray"/>')
        parts.append(f'<text x="{mx:.1f}" y="{ly:.1f}" text-anchor="middle">{escape(name)} ({rank:.3f})</text>')
    # non-significance connectors just under the axis
    for gi, (a, b) in enumerate(data.get("groups", [])):
        gy = axis_y + 6 + 5 * gi
        parts.append(
            f'<line x1="{x_of(ranks[a]):.1f}" y1="{gy:.1f}" x2="{x_of(ranks[b]):.1f}" '
            f'y2="{gy:.1f}" stroke="black" stroke-width="4"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def _write_csv(path: Path, header, rows):
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    os.replace(tmp, path)


def _atomic(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
