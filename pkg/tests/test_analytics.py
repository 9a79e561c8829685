import csv
import math
import random
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aiusershare.analytics import (
    average_ranks, event_delta, loglinear_fit, rank_economies, series_gaps, spearman,
    spearman_permutation_pvalue,
)
from aiusershare.model import AnalysisError, Period, SeriesPoint

TOP30 = Path(__file__).parent / "data" / "top30.csv"


def oracle_ranks(xs):
    # rank of each value = mean of the 1-based positions holding equal values
    s = sorted(xs)
    return [sum(i + 1 for i, v in enumerate(s) if v == x) / s.count(x) for x in xs]


def oracle_spearman(x, y):
    rx, ry = oracle_ranks(x), oracle_ranks(y)
    mx, my = sum(rx) / len(rx), sum(ry) / len(ry)
    num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    den = math.sqrt(sum((a - mx) ** 2 for a in rx) * sum((b - my) ** 2 for b in ry))
    return num / den


def top30():
    with open(TOP30) as f:
        return [(r["economy"], float(r["ai_user_share"])) for r in csv.DictReader(line for line in f if not line.startswith("#"))]


def test_rank_top30():
    rows = rank_economies(top30(), tie_break="input")
    assert [r.economy for r in rows] == [e for e, _ in top30()]
    assert (rows[0].economy, rows[0].percent) == ("ARE", "59.4%")
    assert (rows[1].economy, rows[1].percent) == ("SGP", "58.6%")
    assert (rows[29].rank, rows[29].economy, rows[29].value) == (30, "CRI", 0.251)


def test_rank_tie_break_and_edges():
    rows = rank_economies([("ZMB", 0.3), ("AGO", 0.3), ("USA", 0.5)])
    assert [r.economy for r in rows] == ["USA", "AGO", "ZMB"]
    assert [r.rank for r in rows] == [1, 2, 3]
    assert rank_economies([]) == []
    assert len(rank_economies(top30(), top_k=5)) == 5
    with pytest.raises(AnalysisError, match="duplicate"):
        rank_economies([("AAA", 0.1), ("AAA", 0.2)])


@given(st.lists(st.floats(0, 1), min_size=0, max_size=40))
def test_rank_is_permutation(values):
    pairs = [(f"E{i:03d}", v) for i, v in enumerate(values)]
    rows = rank_economies(pairs)
    assert sorted(r.economy for r in rows) == sorted(e for e, _ in pairs)
    assert all(a.value >= b.value for a, b in zip(rows, rows[1:]))


def test_average_ranks():
    assert list(average_ranks([10, 20, 20, 30])) == [1.0, 2.5, 2.5, 4.0]


def test_spearman_examples():
    assert spearman([1, 2, 3], [10, 20, 30]) == (1.0, 0.0)
    assert spearman([1, 2, 3], [30, 20, 10])[0] == -1.0
    with pytest.raises(AnalysisError, match="zero rank variance"):
        spearman([1, 1, 1, 1], [1, 2, 3, 4])
    with pytest.raises(AnalysisError):
        spearman([1, 2], [1, 2])
    with pytest.raises(AnalysisError):
        spearman([1, 2, float("nan")], [1, 2, 3])


def test_spearman_twelve_points_one_tie():
    x = [3.1, 1.2, 5.5, 2.2, 9.0, 4.4, 4.4, 7.7, 0.3, 6.6, 8.8, 1.9]
    y = [2.0, 1.0, 6.0, 3.5, 8.0, 3.0, 5.0, 9.5, 0.1, 4.0, 7.0, 2.5]
    assert abs(spearman(x, y)[0] - oracle_spearman(x, y)) < 1e-12


def test_spearman_pvalue_matches_t_distribution():
    from scipy import stats
    rng = random.Random(5)
    x = [rng.random() for _ in range(40)]
    y = [a + rng.gauss(0, 0.5) for a in x]
    rho, p = spearman(x, y)
    ref = stats.spearmanr(x, y)
    assert rho == pytest.approx(ref.statistic, abs=1e-12)
    assert p == pytest.approx(ref.pvalue, rel=1e-9)


@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=4, max_size=25))
def test_spearman_symmetry_and_rank_invariance(pairs):
    x = [a for a, _ in pairs]
    y = [b for _, b in pairs]
    if len(set(x)) < 2 or len(set(y)) < 2:
        return
    r = spearman(x, y)[0]
    assert abs(r - spearman(y, x)[0]) < 1e-12
    assert abs(r - spearman([math.exp(v) for v in x], [v ** 3 for v in y])[0]) < 1e-12
    assert abs(r - oracle_spearman(x, y)) < 1e-12


def test_permutation_pvalue():
    rng = random.Random(2)
    x = list(range(10))
    y = [v + rng.gauss(0, 2) for v in x]
    p = spearman_permutation_pvalue(x, y, n_resamples=20_000)
    assert 0 < p < 1
    assert p == spearman_permutation_pvalue(x, y, n_resamples=20_000)
    assert spearman_permutation_pvalue(x, x, n_resamples=2_000) < 0.01


def test_loglinear_exact_fit():
    gdp = [1000, 3000, 10000, 40000, 90000]
    share = [0.05 * math.log(g) - 0.2 for g in gdp]
    f = loglinear_fit(gdp, share)
    assert f.slope == pytest.approx(0.05, abs=1e-12)
    assert f.intercept == pytest.approx(-0.2, abs=1e-12)
    assert f.r_squared == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(AnalysisError, match="n ≥ 3"):
        loglinear_fit([1000, 2000], [0.1, 0.2])


def test_loglinear_normal_equations_oracle():
    rng = np.random.default_rng(8)
    gdp = np.exp(rng.uniform(6, 11, 20))
    share = 0.04 * np.log(gdp) - 0.15 + rng.normal(0, 0.02, 20)
    f = loglinear_fit(list(gdp), list(share))
    X = np.column_stack([np.ones(20), np.log(gdp)])
    b = np.linalg.solve(X.T @ X, X.T @ share)
    assert abs(f.intercept - b[0]) < 1e-10 and abs(f.slope - b[1]) < 1e-10
    r = np.asarray(f.residuals)
    assert abs(r.sum()) < 1e-10 and abs(r @ np.log(gdp)) < 1e-10


def test_loglinear_drops_nonpositive_gdp():
    f = loglinear_fit([1000, -5, 2000, 0, 4000], [0.1, 0.5, 0.2, 0.5, 0.3])
    assert f.dropped == (1, 3) and f.n == 3


def series(values, start=Period(2024, 8)):
    return [SeriesPoint("CHN", start.shift(i), v) for i, v in enumerate(values)]


def test_event_delta_examples():
    s = series([0.08] * 5 + [0.20] * 6)
    d = event_delta(s, Period(2025, 1))
    assert d.pre_mean == pytest.approx(0.08) and d.post_mean == pytest.approx(0.20)
    assert d.rel_change == pytest.approx(1.5)
    assert event_delta(series([0.3] * 8), Period(2024, 12)).rel_change == 0
    z = event_delta(series([0.0] * 3 + [0.1] * 3), Period(2024, 11))
    assert z.rel_change is None and z.abs_change == pytest.approx(0.1)
    with pytest.raises(AnalysisError, match="2025-04"):
        event_delta(series([0.1] * 8), Period(2025, 2))


@given(st.floats(-1, 1))
def test_event_delta_shift_equivariant(c):
    base = [0.05, 0.07, 0.08, 0.15, 0.2, 0.22]
    a = event_delta(series(base), Period(2024, 11))
    b = event_delta(series([v + c for v in base]), Period(2024, 11))
    assert b.pre_mean == pytest.approx(a.pre_mean + c, abs=1e-12)
    assert b.abs_change == pytest.approx(a.abs_change, abs=1e-12)


def test_series_gaps():
    s = series([1, 2, 3, 4])
    assert series_gaps([s[0], s[3]]) == [Period(2024, 9), Period(2024, 10)]
    assert series_gaps(s) == []
