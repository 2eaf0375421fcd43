"""Database-level rank aggregation, Friedman/Nemenyi tests, win/loss tables.

Comparisons run at the database level: dataset scores are averaged within
each database so that databases contributing many datasets do not dominate
the rank statistics. The chi-square survival and F quantile functions the
tests need are implemented here from the incomplete gamma/beta functions
(no external stats dependency).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

LOWER = "lower"  # lower score is better (RMSEP)
HIGHER = "higher"  # higher score is better (ACCP)

# Studentized-range critical values at infinite df divided by sqrt(2),
# alpha = 0.05, for k = 2..20 compared models.
_Q05 = {
    2: 1.960, 3: 2.343, 4: 2.569, 5: 2.728, 6: 2.850, 7: 2.949, 8: 3.031,
    9: 3.102, 10: 3.164, 11: 3.219, 12: 3.268, 13: 3.313, 14: 3.354,
    15: 3.391, 16: 3.426, 17: 3.458, 18: 3.489, 19: 3.517, 20: 3.544,
}


# ---------------------------------------------------------------------------
# special functions


def _gamma_series(a: float, x: float, tol: float = 1e-14, max_iter: int = 500) -> float:
    # regularized lower incomplete gamma by power series
    term = 1.0 / a
    total = term
    for n in range(1, max_iter):
        term *= x / (a + n)
        total += term
        if abs(term) < abs(total) * tol:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))

def _gamma_contfrac(a: float, x: float, tol: float = 1e-14, max_iter: int = 500) -> float:
    # regularized upper incomplete gamma by Lentz continued fraction
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, max_iter):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def chi2_survival(x: float, df: int) -> float:
    """P(X > x) for a chi-square variable with ``df`` degrees of freedom."""
    if x < 0 or df < 1:
        raise ParameterError("need x >= 0 and df >= 1")
    if x == 0:
        return 1.0
    a = 0.5 * df
    half = 0.5 * x
    if half < a + 1.0:
        return 1.0 - _gamma_series(a, half)
    return _gamma_contfrac(a, half)


def _betacf(a: float, b: float, x: float, tol: float = 1e-14, max_iter: int = 500) -> float:
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            break
    return h


def _betainc(a: float, b: float, x: float) -> float:
    # regularized incomplete beta I_x(a, b)
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    front = math.exp(
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_cdf(x: float, d1: int, d2: int) -> float:
    if x <= 0:
        return 0.0
    return _betainc(0.5 * d1, 0.5 * d2, d1 * x / (d1 * x + d2))


def f_quantile(p: float, d1: int, d2: int, tol: float = 1e-10, max_iter: int = 200) -> float:
    """Upper-p quantile of the F(d1, d2) distribution by bisection on the
    incomplete-beta CDF."""
    if not 0 < p < 1:
        raise ParameterError("p must be in (0, 1)")
    if d1 < 1 or d2 < 1:
        raise ParameterError("degrees of freedom must be >= 1")
    lo, hi = 0.0, 1.0
    while f_cdf(hi, d1, d2) < p:
        hi *= 2.0
        if hi > 1e12:
            raise ParameterError("f_quantile: no bracket found")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if f_cdf(mid, d1, d2) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol * max(1.0, lo):
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# ranking


def rank_average_ties(values, *, lower_is_better: bool = True) -> np.ndarray:
    """Rank 1 = best; equal values share the average of their positions."""
    v = np.asarray(values, dtype=np.float64)
    key = v if lower_is_better else -v
    order = np.argsort(key, kind="stable")
    ranks = np.empty(v.size, dtype=np.float64)
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and key[order[j + 1]] == key[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


@dataclass(frozen=True)
class RankTable:
    databases: tuple[str, ...]
    models: tuple[str, ...]
    scores: np.ndarray  # (B, k) aggregated scores
    ranks: np.ndarray  # (B, k) average-tie ranks, 1 = best
    avg_ranks: np.ndarray  # (k,)
    orientation: str


def aggregate_scores(records, orientation: str) -> RankTable:
    """Build the database-level rank table from dataset-level scores.

    ``records`` holds (database, dataset, model, score) tuples. Analysis is
    restricted to datasets scored by every compared model, and databases
    that retain at least one such dataset.
    """
    if orientation not in (LOWER, HIGHER):
        raise ParameterError(f"orientation must be {LOWER!r} or {HIGHER!r}")
    by_dataset: dict[tuple[str, str], dict[str, float]] = {}
    for database, dataset_name, model, score in records:
        by_dataset.setdefault((database, dataset_name), {})[model] = float(score)
    models = tuple(sorted({m for scores in by_dataset.values() for m in scores}))
    if len(models) < 2:
        raise ParameterError("need at least 2 models")
    complete = {
        key: scores
        for key, scores in by_dataset.items()
        if all(m in scores and math.isfinite(scores[m]) for m in models)
    }
    databases = tuple(sorted({db for db, _ in complete}))
    if len(databases) < 2:
        raise ParameterError("need at least 2 databases with complete results")
    scores = np.empty((len(databases), len(models)))
    for bi, db in enumerate(databases):
        rows = [complete[key] for key in complete if key[0] == db]
        for mi, m in enumerate(models):
            scores[bi, mi] = float(np.mean([r[m] for r in rows]))
    ranks = np.vstack(
        [rank_average_ties(row, lower_is_better=(orientation == LOWER)) for row in scores]
    )
    return RankTable(databases, models, scores, ranks, ranks.mean(axis=0), orientation)


@dataclass(frozen=True)
class FriedmanResult:
    statistic: float
    df: int
    p_value: float
    cd: float
    alpha: float
    significant: np.ndarray  # (k, k) bool, |R_i - R_j| > CD
    n_databases: int


def friedman_statistic(ranks: np.ndarray) -> float:
    B, k = ranks.shape
    R = ranks.mean(axis=0)
    return 12.0 * B / (k * (k + 1)) * float(np.sum((R - (k + 1) / 2.0) ** 2))


def friedman_test(table: RankTable, alpha: float = 0.05, exact: bool = False) -> FriedmanResult:
    """Friedman chi-square test plus the Nemenyi critical distance and the
    pairwise significance matrix at ``alpha``."""
    B, k = table.ranks.shape
    if B < 2 or k < 2:
        raise ParameterError("need at least 2 databases and 2 models")
    stat = friedman_statistic(table.ranks)
    if exact:
        p = _exact_friedman_p(table.ranks)
    else:
        p = chi2_survival(stat, k - 1)
    cd = nemenyi_cd(k, B, alpha)
    return FriedmanResult(
        stat, k - 1, p, cd, alpha, pairwise_significance(table, cd), B
    )


def _exact_friedman_p(ranks: np.ndarray, cap: int = 2_000_000) -> float:
    """Permutation p-value over within-database rank reshuffles (small B)."""
    B, k = ranks.shape
    total = math.factorial(k) ** B
    if B > 8 or total > cap:
        raise ParameterError("exact test limited to small tables (B <= 8)")
    observed = friedman_statistic(ranks)
    perms = list(itertools.permutations(range(k)))
    count = 0
    for combo in itertools.product(perms, repeat=B):
        permuted = np.vstack([ranks[b, list(combo[b])] for b in range(B)])
        if friedman_statistic(permuted) >= observed - 1e-12:
            count += 1
    return count / total


def nemenyi_cd(k: int, n_databases: int, alpha: float = 0.05) -> float:
    """Critical distance between average ranks for the Nemenyi test."""
    if alpha != 0.05:
        raise ParameterError("only alpha = 0.05 is tabulated")
    if k not in _Q05:
        raise ParameterError(f"k={k} outside the tabulated range 2..20")
    if n_databases < 2:
        raise ParameterError("need at least 2 databases")
    return _Q05[k] * math.sqrt(k * (k + 1) / (6.0 * n_databases))


def pairwise_significance(table: RankTable, cd: float) -> np.ndarray:
    R = table.avg_ranks
    diff = np.abs(R[:, None] - R[None, :])
    sig = diff > cd
    np.fill_diagonal(sig, False)
    return sig


def cd_diagram_data(table: RankTable, cd: float) -> dict:
    """Plot-ready critical-difference data: models ordered by average rank
    plus maximal groups of mutually non-significant models."""
    order = np.argsort(table.avg_ranks, kind="stable")
    models = [table.models[i] for i in order]
    ranks = [float(table.avg_ranks[i]) for i in order]
    groups = []
    k = len(models)
    for i in range(k):
        j = i
        while j + 1 < k and ranks[j + 1] - ranks[i] <= cd:
            j += 1
        if j > i:
            groups.append((i, j))
    # drop groups contained in an earlier, longer one
    maximal = [g for g in groups if not any(o != g and o[0] <= g[0] and g[1] <= o[1] for o in groups)]
    return {"models": models, "ranks": ranks, "cd": cd, "groups": maximal}


def win_loss(records, model_a: str, model_b: str, orientation: str):
    """Database-level pairwise comparison.

    Scores are aggregated per database over the datasets both models
    completed; equality after rounding to 6 decimals counts as a tie. The
    win rate excludes ties from its denominator, the non-loss rate counts
    them as successes.
    """
    if orientation not in (LOWER, HIGHER):
        raise ParameterError(f"orientation must be {LOWER!r} or {HIGHER!r}")
    per_db: dict[str, dict[str, list[float]]] = {}
    by_dataset: dict[tuple[str, str], dict[str, float]] = {}
    for database, dataset_name, model, score in records:
        if model in (model_a, model_b):
            by_dataset.setdefault((database, dataset_name), {})[model] = float(score)
    for (database, _), scores in by_dataset.items():
        if model_a in scores and model_b in scores:
            bucket = per_db.setdefault(database, {model_a: [], model_b: []})
            bucket[model_a].append(scores[model_a])
            bucket[model_b].append(scores[model_b])
    if not per_db:
        raise ParameterError(f"no common databases for {model_a} and {model_b}")
    wins = ties = losses = 0
    for bucket in per_db.values():
        a = round(float(np.mean(bucket[model_a])), 6)
        b = round(float(np.mean(bucket[model_b])), 6)
        if a == b:
            ties += 1
        elif (a < b) == (orientation == LOWER):
            wins += 1
        else:
            losses += 1
    total = wins + ties + losses
    decided = wins + losses
    win_rate = wins / decided if decided else 0.0
    non_loss_rate = (wins + ties) / total
    return wins, ties, losses, win_rate, non_loss_rate
