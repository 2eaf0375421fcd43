"""Rank statistics, Friedman/Nemenyi, win/loss, special functions."""

import math

import numpy as np
import pytest

from specbench.errors import ParameterError
from specbench.stats import (
    HIGHER,
    LOWER,
    aggregate_scores,
    cd_diagram_data,
    chi2_survival,
    f_cdf,
    f_quantile,
    friedman_statistic,
    friedman_test,
    nemenyi_cd,
    rank_average_ties,
    win_loss,
)

rng = np.random.default_rng(404)


# ---------------------------------------------------------------------------
# special functions


def test_chi2_survival_closed_forms():
    assert abs(chi2_survival(8.0, 2) - math.exp(-4.0)) < 1e-12
    assert chi2_survival(0.0, 5) == 1.0
    # df=2: survival is exp(-x/2)
    for x in (0.5, 1.0, 3.0, 10.0):
        assert abs(chi2_survival(x, 2) - math.exp(-x / 2)) < 1e-12
    # df=4 closed form: (1 + x/2) exp(-x/2)
    for x in (0.5, 2.0, 7.0):
        assert abs(chi2_survival(x, 4) - (1 + x / 2) * math.exp(-x / 2)) < 1e-12


def test_f_quantile_textbook_value():
    assert abs(f_quantile(0.95, 2, 10) - 4.1028) < 1e-3


def test_f_quantile_monte_carlo_crosscheck():
    draws = np.random.default_rng(1).f(2, 10, size=1_000_000)
    mc = float(np.quantile(draws, 0.95))
    assert abs(f_quantile(0.95, 2, 10) - mc) < 0.01


def test_f_cdf_quantile_inverse():
    for p in (0.5, 0.9, 0.99):
        for d1, d2 in ((3, 7), (1, 20), (10, 10)):
            assert abs(f_cdf(f_quantile(p, d1, d2), d1, d2) - p) < 1e-9


def test_chi2_f_large_d2_consistency():
    # df * F(df, d2 -> inf) tends to chi-square(df)
    df = 5
    q = f_quantile(0.95, df, 1_000_000)
    from_chi2 = 1.0 - chi2_survival(df * q, df)
    assert abs(from_chi2 - 0.95) < 1e-3


def test_special_function_domains():
    with pytest.raises(ParameterError):
        chi2_survival(-1.0, 2)
    with pytest.raises(ParameterError):
        f_quantile(1.5, 2, 3)


# ---------------------------------------------------------------------------
# ranking and Friedman


def _records(scores: np.ndarray, models=None, databases=None):
    B, k = scores.shape
    models = models or [f"m{j}" for j in range(k)]
    databases = databases or [f"db{b}" for b in range(B)]
    out = []
    for b in range(B):
        for j in range(k):
            out.append((databases[b], f"{databases[b]}_ds", models[j], scores[b, j]))
    return out


def test_rank_average_ties():
    np.testing.assert_array_equal(
        rank_average_ties([1.0, 2.0], lower_is_better=True), [1.0, 2.0]
    )
    np.testing.assert_array_equal(
        rank_average_ties([1.0, 1.0, 2.0], lower_is_better=True), [1.5, 1.5, 3.0]
    )
    np.testing.assert_array_equal(
        rank_average_ties([0.3, 0.9, 0.9], lower_is_better=False), [3.0, 1.5, 1.5]
    )


def test_aggregate_means_within_database():
    records = [
        ("dbA", "ds1", "m0", 2.0), ("dbA", "ds2", "m0", 4.0),
        ("dbA", "ds1", "m1", 1.0), ("dbA", "ds2", "m1", 1.0),
        ("dbB", "ds3", "m0", 1.0), ("dbB", "ds3", "m1", 5.0),
    ]
    table = aggregate_scores(records, LOWER)
    assert table.scores[list(table.databases).index("dbA"), list(table.models).index("m0")] == 3.0
    np.testing.assert_array_equal(
        table.ranks[list(table.databases).index("dbA")], [2.0, 1.0]
    )


def test_incomplete_datasets_dropped():
    records = [
        ("dbA", "ds1", "m0", 2.0), ("dbA", "ds1", "m1", 1.0),
        ("dbA", "ds2", "m0", 9.0),  # m1 missing: dropped
        ("dbB", "ds3", "m0", 1.0), ("dbB", "ds3", "m1", 5.0),
    ]
    table = aggregate_scores(records, LOWER)
    assert table.scores[list(table.databases).index("dbA"), 0] == 2.0


def test_friedman_fixture_chi2_8():
    scores = np.tile([1.0, 2.0, 3.0], (4, 1))
    table = aggregate_scores(_records(scores), LOWER)
    result = friedman_test(table)
    assert abs(result.statistic - 8.0) < 1e-12
    assert abs(result.p_value - math.exp(-4.0)) < 1e-9
    assert result.df == 2


def test_friedman_all_tied():
    scores = np.ones((4, 3))
    table = aggregate_scores(_records(scores), LOWER)
    result = friedman_test(table)
    assert result.statistic == 0.0
    assert abs(result.p_value - 1.0) < 1e-12


def test_friedman_column_permutation_invariant():
    scores = rng.normal(size=(5, 4))
    t1 = aggregate_scores(_records(scores), LOWER)
    perm = [2, 0, 3, 1]
    t2 = aggregate_scores(_records(scores[:, perm]), LOWER)
    assert abs(friedman_statistic(t1.ranks) - friedman_statistic(t2.ranks)) < 1e-12


def brute_force_friedman(ranks):
    B, k = ranks.shape
    R = ranks.mean(axis=0)
    total = 0.0
    for j in range(k):
        total += (R[j] - (k + 1) / 2.0) ** 2
    return 12.0 * B / (k * (k + 1)) * total


def test_friedman_brute_force_equivalence():
    for _ in range(20):
        scores = rng.normal(size=(6, 8))
        table = aggregate_scores(_records(scores), LOWER)
        assert abs(friedman_statistic(table.ranks) - brute_force_friedman(table.ranks)) < 1e-12


def test_rank_invariance_under_monotone_transform():
    scores = rng.normal(size=(6, 5))
    t1 = aggregate_scores(_records(scores), LOWER)
    # strictly increasing transform applied to all scores
    t2 = aggregate_scores(_records(np.exp(scores) + scores), LOWER)
    np.testing.assert_array_equal(t1.ranks, t2.ranks)
    r1 = friedman_test(t1)
    r2 = friedman_test(t2)
    assert r1.statistic == r2.statistic
    np.testing.assert_array_equal(r1.significant, r2.significant)


def test_nemenyi_cd_values():
    assert abs(nemenyi_cd(2, 6) - 1.960 * math.sqrt(6 / 36)) < 1e-12
    assert abs(nemenyi_cd(2, 6) - 0.800) < 1e-3
    assert abs(nemenyi_cd(5, 10) - 2.728 * math.sqrt(30 / 60)) < 1e-12
    assert abs(nemenyi_cd(5, 10) - 1.929) < 1e-3


def test_nemenyi_cd_decreasing_in_B():
    values = [nemenyi_cd(4, b) for b in range(2, 40)]
    assert all(values[i + 1] < values[i] for i in range(len(values) - 1))


def test_nemenyi_cd_domain():
    with pytest.raises(ParameterError):
        nemenyi_cd(25, 10)
    with pytest.raises(ParameterError):
        nemenyi_cd(4, 1)


def test_pairwise_significance_matrix():
    scores = np.array([[1.0, 10.0], [1.0, 11.0], [1.0, 12.0],
                       [1.0, 13.0], [1.0, 14.0], [1.0, 15.0]])
    table = aggregate_scores(_records(scores), LOWER)
    result = friedman_test(table)
    # ranks: 1 vs 2 everywhere -> diff 1.0; CD(k=2,B=6)=0.8 -> significant
    assert result.significant[0, 1] and result.significant[1, 0]
    assert not result.significant[0, 0]


def test_cd_diagram_groups():
    scores = rng.normal(size=(4, 3)) * 0.01  # tight: nothing significant
    table = aggregate_scores(_records(scores), LOWER)
    data = cd_diagram_data(table, cd=10.0)
    assert data["groups"] == [(0, 2)]
    assert len(data["models"]) == 3


# ---------------------------------------------------------------------------
# win/loss


def _winloss_records(n_win, n_tie, n_loss):
    records = []
    db = 0
    for _ in range(n_win):
        records += [(f"db{db}", f"ds{db}", "A", 1.0), (f"db{db}", f"ds{db}", "B", 2.0)]
        db += 1
    for _ in range(n_tie):
        records += [(f"db{db}", f"ds{db}", "A", 1.5), (f"db{db}", f"ds{db}", "B", 1.5)]
        db += 1
    for _ in range(n_loss):
        records += [(f"db{db}", f"ds{db}", "A", 3.0), (f"db{db}", f"ds{db}", "B", 1.0)]
        db += 1
    return records


def test_win_loss_table3_rows():
    w, t, l, wr, nlr = win_loss(_winloss_records(18, 1, 4), "A", "B", LOWER)
    assert (w, t, l) == (18, 1, 4)
    assert round(wr, 3) == 0.818 and round(nlr, 3) == 0.826
    w, t, l, wr, nlr = win_loss(_winloss_records(22, 1, 2), "A", "B", LOWER)
    assert round(wr, 3) == 0.917 and round(nlr, 3) == 0.920


def test_win_loss_all_ties():
    w, t, l, wr, nlr = win_loss(_winloss_records(0, 5, 0), "A", "B", LOWER)
    assert (w, t, l) == (0, 5, 0)
    assert wr == 0.0 and nlr == 1.0


def test_win_loss_higher_orientation():
    records = [("db0", "ds0", "A", 0.9), ("db0", "ds0", "B", 0.5)]
    records += [("db1", "ds1", "A", 0.3), ("db1", "ds1", "B", 0.4)]
    w, t, l, wr, nlr = win_loss(records, "A", "B", HIGHER)
    assert (w, t, l) == (1, 0, 1)


def test_win_loss_rounding_tie():
    records = [("db0", "ds0", "A", 1.0000001), ("db0", "ds0", "B", 1.0000002),
               ("db1", "ds1", "A", 1.0), ("db1", "ds1", "B", 2.0)]
    w, t, l, *_ = win_loss(records, "A", "B", LOWER)
    assert t == 1 and w == 1  # 7th decimal rounds away


def test_exact_friedman_small_table():
    scores = np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])
    table = aggregate_scores(_records(scores), LOWER)
    result = friedman_test(table, exact=True)
    # all 3 rows identical ordering: p = (1/6)^2 ... per permutation symmetry
    assert 0.0 < result.p_value <= 0.05
