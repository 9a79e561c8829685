"""Eligibility, regional grouping, summaries and rolling series."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterable

from .model import (
    AggregationError,
    ConfigError,
    EconomySnapshot,
    Imputation,
    Period,
    ReferenceRecord,
    RegionDef,
    SeriesPoint,
    ShareEstimate,
    TelemetryAggregate,
)


@dataclass(frozen=True)
class EligibilityConfig:
    min_total_pop: int = 2_000_000
    min_active_users: int = 5_000

    def __post_init__(self) -> None:
        if not self.min_total_pop > 0 or not self.min_active_users > 0:
            raise ConfigError("eligibility thresholds must be strictly positive")


class Verdict(str, enum.Enum):
    ELIGIBLE = "eligible"
    GROUP_TO_REGION = "group_to_region"
    EXCLUDED = "excluded"


@dataclass(frozen=True)
class EligibilityDecision:
    economy: str
    verdict: Verdict
    reason: str
    region: str | None = None


def classify(s: EconomySnapshot, regions: Iterable[RegionDef],
             cfg: EligibilityConfig = EligibilityConfig()) -> EligibilityDecision:
    reasons = []
    if s.reference.total_pop < cfg.min_total_pop:
        reasons.append(f"population below {cfg.min_total_pop:,}")
    if s.telemetry.active_users < cfg.min_active_users:
        reasons.append(f"insufficient traffic ({s.telemetry.active_users:,} active users < {cfg.min_active_users:,})")
    if not reasons:
        return EligibilityDecision(s.economy, Verdict.ELIGIBLE, "meets thresholds")
    reason = "; ".join(reasons)
    for r in regions:
        if s.economy in r.members:
            return EligibilityDecision(s.economy, Verdict.GROUP_TO_REGION, reason, r.region)
    return EligibilityDecision(s.economy, Verdict.EXCLUDED, reason + "; no region")


def _weighted(values: list[float | None], weights: list[float]) -> float | None:
    pairs = [(v, w) for v, w in zip(values, weights) if v is not None]
    total = math.fsum(w for _, w in pairs)
    if not pairs:
        return None
    if total <= 0:
        return math.fsum(v for v, _ in pairs) / len(pairs)
    return math.fsum(v * w for v, w in pairs) / total


def aggregate_region(members: list[EconomySnapshot], region: RegionDef) -> EconomySnapshot:
    """Pool member snapshots into one snapshot carrying the region id.

    Counts are summed. Opt-in is weighted by active users, Windows share by
    devices, and every other rate (including GDP per capita) by working-age
    population.
    """
    if not members:
        raise AggregationError(f"region {region.region}: no member snapshots")
    periods = {s.period for s in members}
    if len(periods) != 1:
        raise AggregationError(f"region {region.region}: mixed periods {sorted(str(p) for p in periods)}")
    outsiders = [s.economy for s in members if s.economy not in region.members]
    if outsiders:
        raise AggregationError(f"region {region.region}: {outsiders} are not members")
    members = sorted(members, key=lambda s: s.economy)
    (period,) = periods
    t = [s.telemetry for s in members]
    r = [s.reference for s in members]
    active = [x.active_users for x in t]
    mad = [x.mad for x in t]
    wap = [x.working_age_pop for x in r]

    if len(members) == 1:
        s = members[0]
        return EconomySnapshot(replace(s.telemetry, economy=region.region),
                               replace(s.reference, economy=region.region))

    opt_in = _weighted([x.opt_in_rate for x in t], active)
    # weighted by estimated total devices (mad / share): keeps the pooled device count additive
    est_devices = math.fsum(m / x.windows_market_share for m, x in zip(mad, r))
    win_share = sum(mad) / est_devices if est_devices > 0 else _weighted([x.windows_market_share for x in r], wap)
    tel = TelemetryAggregate(
        region.region, period,
        active_users=sum(active),
        ai_users=sum(x.ai_users for x in t),
        opt_in_rate=min(max(opt_in, 0.0), 1.0),
        mad=sum(mad),
    )
    ref = ReferenceRecord(
        region.region, period,
        windows_market_share=win_share,
        mobile_desktop_ratio=_weighted([x.mobile_desktop_ratio for x in r], wap),
        working_age_pop=sum(wap),
        total_pop=sum(x.total_pop for x in r),
        internet_penetration=_weighted([x.internet_penetration for x in r], wap),
        gdp_per_capita=_weighted([x.gdp_per_capita for x in r], wap),
    )
    return EconomySnapshot(tel, ref)


def impute_members(regional: ShareEstimate, members: list[EconomySnapshot] | list[str],
                   populations: dict[str, int] | None = None,
                   eligible: Iterable[str] = ()) -> list[ShareEstimate]:
    """Give each member the regional share, scaled by its own working-age population.

    ``members`` is either snapshots or bare economy ids (then ``populations``
    supplies working-age counts). Raises on an economy that already has a
    direct estimate.
    """
    eligible = set(eligible)
    out = []
    for m in members:
        if isinstance(m, EconomySnapshot):
            econ, wap = m.economy, m.reference.working_age_pop
            net, gdp = m.reference.internet_penetration, m.reference.gdp_per_capita
        else:
            econ = m
            if populations is None or econ not in populations:
                raise AggregationError(f"no working-age population for member {econ}")
            wap, net, gdp = populations[econ], None, None
        if econ in eligible:
            raise AggregationError(f"double assignment: {econ} is eligible and region-imputed")
        share = regional.ai_user_share
        connected = None
        clamped = False
        if net is not None and net > 0:
            connected = share / net
            if connected > 1.0:
                connected, clamped = 1.0, True
        out.append(replace(
            regional,
            economy=econ,
            working_age_pop=wap,
            ai_users_abs=round(share * wap),
            internet_penetration=net,
            connected_share=connected,
            connected_clamped=clamped,
            gdp_per_capita=gdp,
            imputation=Imputation.REGION_IMPUTED,
            region=regional.economy,
        ))
    return out


def _dedupe_for_summary(estimates: list[ShareEstimate]) -> list[ShareEstimate]:
    seen = set()
    for e in estimates:
        if e.economy in seen:
            raise AggregationError(f"duplicate economy {e.economy} in summary input")
        seen.add(e.economy)
    periods = {e.period for e in estimates}
    if len(periods) > 1:
        raise AggregationError(f"mixed periods in summary input: {sorted(str(p) for p in periods)}")
    return [e for e in estimates
            if not (e.imputation is Imputation.REGION_IMPUTED and e.region in seen)]


def global_summary(estimates: list[ShareEstimate]) -> tuple[float, int]:
    """Population-weighted share and total users.

    Region-imputed members are skipped when their region's own row is present.
    """
    if not estimates:
        raise AggregationError("global summary needs at least one estimate")
    rows = sorted(_dedupe_for_summary(estimates), key=lambda e: e.economy)
    pop = math.fsum(e.working_age_pop for e in rows)
    if pop <= 0:
        raise AggregationError("zero total working-age population")
    share = math.fsum(e.ai_user_share * e.working_age_pop for e in rows) / pop
    return share, sum(e.ai_users_abs for e in rows)


@dataclass(frozen=True)
class RegionalSummary:
    region: str
    name: str
    ai_user_share: float
    working_age_pop: int
    ai_users_abs: int
    members: tuple[str, ...]


def regional_summary(estimates: list[ShareEstimate], region: RegionDef) -> RegionalSummary:
    """Roll member estimates up to one population-weighted regional row."""
    rows = sorted((e for e in estimates if e.economy in region.members), key=lambda e: e.economy)
    if not rows:
        raise AggregationError(f"region {region.region}: no member estimates")
    share, users = global_summary(rows)
    return RegionalSummary(region.region, region.name, share, sum(e.working_age_pop for e in rows),
                           users, tuple(e.economy for e in rows))


def rollup_estimate(summary: RegionalSummary, period: Period) -> ShareEstimate:
    """Express a regional rollup as a ShareEstimate row so it can be summarized again."""
    s = summary.ai_user_share
    return ShareEstimate(
        economy=summary.region, period=period, gamma_raw=float("nan"), gamma_adjusted=float("nan"),
        device_ratio=float("nan"), device_scaling=float("nan"), scaling_clamped=False,
        desktop_share=float("nan"), mobile_ratio=float("nan"), mobile_factor=float("nan"),
        mobile_capped=False, mobile_share=float("nan"), ai_user_share=s, naive_product=float("nan"),
        working_age_pop=summary.working_age_pop, ai_users_abs=summary.ai_users_abs,
    )


def rolling_average(series: list[SeriesPoint], window: int = 3) -> list[SeriesPoint]:
    """Trailing mean over ``window`` consecutive months; partial windows are dropped."""
    if window < 1:
        raise ConfigError(f"window must be ≥ 1, got {window}")
    if not series:
        return []
    economies = {p.economy for p in series}
    if len(economies) != 1:
        raise AggregationError(f"rolling_average expects one economy, got {sorted(economies)}")
    by_period = {}
    for p in series:
        if p.period in by_period:
            raise AggregationError(f"duplicate point for {p.economy} {p.period}")
        by_period[p.period] = p.value
    out = []
    for per in sorted(by_period):
        span = [per.shift(-k) for k in range(window)]
        if all(q in by_period for q in span):
            out.append(SeriesPoint(series[0].economy, per, math.fsum(by_period[q] for q in span) / window))
    return out


@dataclass(frozen=True)
class ConnectedRow:
    economy: str
    ai_user_share: float
    connected_share: float
    internet_penetration: float
    clamped: bool


@dataclass
class ConnectedView:
    rows: list[ConnectedRow]
    notes: list[str] = field(default_factory=list)


def connected_population_view(estimates: list[ShareEstimate], internet: dict[str, float] | None = None,
                              k: int = 15) -> ConnectedView:
    """The ``k`` direct estimates with the lowest internet penetration.

    ``internet`` overrides the penetration carried on each estimate.
    """
    notes = []
    candidates = []
    for e in sorted(estimates, key=lambda e: e.economy):
        if e.imputation is not Imputation.DIRECT:
            continue
        net = internet.get(e.economy) if internet is not None else e.internet_penetration
        if net is None or net <= 0:
            notes.append(f"{e.economy}: internet penetration absent, skipped")
            continue
        candidates.append((net, e))
    candidates.sort(key=lambda x: (x[0], x[1].economy))
    rows = []
    for net, e in candidates[:k]:
        v = e.ai_user_share / net
        clamped = v > 1.0
        if clamped:
            notes.append(f"{e.economy}: connected share {v:.4f} clamped to 1")
        rows.append(ConnectedRow(e.economy, e.ai_user_share, min(v, 1.0), net, clamped))
    return ConnectedView(rows, notes)


def pool_snapshots(snapshots: dict[Period, list[EconomySnapshot]], periods: list[Period]) -> list[EconomySnapshot]:
    """Average each economy's snapshots over ``periods`` into one row per economy.

    Counts are monthly means (rounded); rates are means weighted like
    :func:`aggregate_region`. The pooled row carries the last period.
    """
    if not periods:
        raise AggregationError("pooling needs at least one period")
    label = max(periods)
    by_econ: dict[str, list[EconomySnapshot]] = {}
    for p in sorted(periods):
        for s in snapshots.get(p, []):
            by_econ.setdefault(s.economy, []).append(s)
    out = []
    for econ in sorted(by_econ):
        rows = by_econ[econ]
        k = len(rows)
        t = [s.telemetry for s in rows]
        r = [s.reference for s in rows]
        active = [x.active_users for x in t]
        mad_mean = round(sum(x.mad for x in t) / k)
        total_active = sum(active)
        active_mean = round(total_active / k)
        ai_mean = round(active_mean * sum(x.ai_users for x in t) / total_active) if total_active else 0
        wap = [x.working_age_pop for x in r]
        tel = TelemetryAggregate(
            econ, label,
            active_users=active_mean,
            ai_users=min(ai_mean, active_mean),
            opt_in_rate=min(max(_weighted([x.opt_in_rate for x in t], active), 0.0), 1.0),
            mad=max(mad_mean, active_mean),
        )
        ref = ReferenceRecord(
            econ, label,
            windows_market_share=math.fsum(x.windows_market_share for x in r) / k,
            mobile_desktop_ratio=math.fsum(x.mobile_desktop_ratio for x in r) / k,
            working_age_pop=round(sum(wap) / k),
            total_pop=max(round(sum(x.total_pop for x in r) / k), round(sum(wap) / k)),
            internet_penetration=_weighted([x.internet_penetration for x in r], [1.0] * k),
            gdp_per_capita=_weighted([x.gdp_per_capita for x in r], [1.0] * k),
        )
        out.append(EconomySnapshot(tel, ref))
    return out
