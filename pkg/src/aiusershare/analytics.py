"""Rankings, rank correlation, log-linear trends and event windows."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .model import AnalysisError, Period, SeriesPoint, ShareEstimate


@dataclass(frozen=True)
class RankingRow:
    rank: int
    economy: str
    value: float

    @property
    def percent(self) -> str:
        return f"{self.value * 100:.1f}%"


def rank_economies(estimates: Sequence[ShareEstimate] | Sequence[tuple[str, float]],
                   top_k: int | None = None, tie_break: str = "economy") -> list[RankingRow]:
    """Rank by descending share.

    Ties go to the smaller economy id, or keep input order with
    ``tie_break="input"`` (useful when the input is already an ordering of
    rounded values).
    """
    pairs = [(e.economy, e.ai_user_share) if isinstance(e, ShareEstimate) else (e[0], float(e[1]))
             for e in estimates]
    seen = set()
    for econ, _ in pairs:
        if econ in seen:
            raise AnalysisError(f"duplicate economy {econ} in ranking input")
        seen.add(econ)
    if tie_break == "economy":
        ordered = sorted(pairs, key=lambda p: (-p[1], p[0]))
    elif tie_break == "input":
        ordered = sorted(pairs, key=lambda p: -p[1])
    else:
        raise ValueError(f"unknown tie_break {tie_break!r}")
    if top_k is not None:
        ordered = ordered[:top_k]
    return [RankingRow(i + 1, econ, v) for i, (econ, v) in enumerate(ordered)]


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks, ties sharing the mean of the positions they span."""
    x = np.asarray(values, dtype=float)
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    ranks = np.empty(len(x), dtype=float)
    i = 0
    n = len(x)
    while i < n:
        j = i
        while j + 1 < n and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    da = a - a.mean()
    db = b - b.mean()
    saa = float(np.dot(da, da))
    sbb = float(np.dot(db, db))
    if saa == 0.0 or sbb == 0.0:
        raise AnalysisError("zero rank variance")
    r = float(np.dot(da, db)) / math.sqrt(saa * sbb)
    return min(max(r, -1.0), 1.0)


def _check_pair(x: Sequence[float], y: Sequence[float]) -> None:
    if len(x) != len(y):
        raise AnalysisError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 3:
        raise AnalysisError(f"need at least 3 observations, got {len(x)}")
    if any(v is None or not math.isfinite(v) for v in list(x) + list(y)):
        raise AnalysisError("absent or non-finite value in correlation input")


def spearman(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Spearman's rho on average ranks and its two-sided p-value.

    The p-value uses the t approximation with ``n - 2`` degrees of freedom.
    """
    _check_pair(x, y)
    rho = _pearson(average_ranks(x), average_ranks(y))
    n = len(x)
    if abs(rho) == 1.0:
        return rho, 0.0
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return rho, float(2.0 * stats.t.sf(abs(t), n - 2))


def spearman_permutation_pvalue(x: Sequence[float], y: Sequence[float], n_resamples: int = 1_000_000,
                                seed: int = 0, batch: int = 20_000) -> float:
    """Two-sided permutation p-value for rho, for small samples.

    Counts shuffles of ``y`` whose |rho| reaches the observed one; the
    observed arrangement is included in the count.
    """
    _check_pair(x, y)
    rx = average_ranks(x)
    ry = average_ranks(y)
    rho = _pearson(rx, ry)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    denom = math.sqrt(float(np.dot(dx, dx)) * float(np.dot(dy, dy)))
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    tol = 1e-12
    while done < n_resamples:
        m = min(batch, n_resamples - done)
        perm = rng.permuted(np.tile(dy, (m, 1)), axis=1)
        r = perm @ dx / denom
        hits += int(np.count_nonzero(np.abs(r) >= abs(rho) - tol))
        done += m
    return (hits + 1) / (n_resamples + 1)


@dataclass(frozen=True)
class TrendFit:
    slope: float
    intercept: float
    r_squared: float
    n: int
    residuals: tuple[float, ...] = ()
    dropped: tuple[int, ...] = ()

    def predict(self, gdp: float) -> float:
        return self.intercept + self.slope * math.log(gdp)


def loglinear_fit(gdp_per_capita: Sequence[float], share: Sequence[float]) -> TrendFit:
    """Least-squares fit of ``share = intercept + slope * ln(gdp)``.

    Rows with non-positive GDP are dropped and their indices reported in
    ``dropped``; residuals follow the kept rows in input order.
    """
    if len(gdp_per_capita) != len(share):
        raise AnalysisError(f"length mismatch: {len(gdp_per_capita)} vs {len(share)}")
    keep = [i for i, g in enumerate(gdp_per_capita) if g is not None and g > 0 and share[i] is not None]
    dropped = tuple(i for i in range(len(share)) if i not in set(keep))
    if len(keep) < 3:
        raise AnalysisError(f"log-linear fit needs n ≥ 3 usable points, got {len(keep)}")
    x = np.log(np.asarray([gdp_per_capita[i] for i in keep], dtype=float))
    y = np.asarray([share[i] for i in keep], dtype=float)
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    sxx = float(np.dot(dx, dx))
    if sxx == 0.0:
        raise AnalysisError("all GDP values identical; slope undefined")
    slope = float(np.dot(dx, dy)) / sxx
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    syy = float(np.dot(dy, dy))
    r2 = 1.0 - float(np.dot(resid, resid)) / syy if syy > 0 else 1.0
    return TrendFit(slope, intercept, r2, len(keep), tuple(float(r) for r in resid), dropped)


@dataclass(frozen=True)
class EventDelta:
    pre_mean: float
    post_mean: float
    abs_change: float
    rel_change: float | None


def event_delta(series: Sequence[SeriesPoint], event: Period, pre_months: int = 3,
                post_months: int = 3) -> EventDelta:
    """Mean level before ``event`` versus from ``event`` onward.

    ``rel_change`` is ``None`` when the pre-event mean is zero.
    """
    if pre_months < 1 or post_months < 1:
        raise AnalysisError("pre_months and post_months must be ≥ 1")
    values = {p.period: p.value for p in series}
    pre = [event.shift(-k) for k in range(pre_months, 0, -1)]
    post = [event.shift(k) for k in range(post_months)]
    missing = [p for p in pre + post if p not in values]
    if missing:
        raise AnalysisError("incomplete event window, missing " + ", ".join(str(p) for p in missing))
    pre_mean = math.fsum(values[p] for p in pre) / pre_months
    post_mean = math.fsum(values[p] for p in post) / post_months
    rel = post_mean / pre_mean - 1.0 if pre_mean != 0 else None
    return EventDelta(pre_mean, post_mean, post_mean - pre_mean, rel)


def series_gaps(series: Sequence[SeriesPoint]) -> list[Period]:
    """Months missing between the first and last point of one economy's series."""
    if not series:
        return []
    have = {p.period for p in series}
    lo, hi = min(have), max(have)
    return [Period.from_index(i) for i in range(lo.index, hi.index + 1) if Period.from_index(i) not in have]
