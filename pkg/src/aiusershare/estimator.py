"""Per-economy AI User Share formulas.

The chain for one economy is::

    gamma        = ai_users / active_users
    gamma_adj    = opt-in blend of gamma toward the global share
    scaling      = device ratio normalized between the cross-section
                   minimum and its 90th percentile, mapped to [0.1, 1.0]
    desktop      = gamma_adj * scaling
    mobile       = desktop * mobile factor (regional-capped traffic ratio)
    ai_user_share = desktop + mobile - desktop * mobile
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable, Mapping

from .model import (
    ConfigError,
    EconomySnapshot,
    EstimationError,
    GlobalContext,
    Imputation,
    RegionDef,
    ShareEstimate,
    TelemetryAggregate,
    region_of,
)

MIN_CROSS_SECTION = 10


@dataclass(frozen=True)
class EstimatorConfig:
    scaling_floor: float = 0.1
    scaling_span: float = 0.9
    percentile_cap: float = 0.90
    mobile_cap_multiplier: float = 1.8
    clamp_shares: bool = True
    global_average: str = "pooled"  # or "unweighted"
    percentile_method: str = "linear"  # or "nearest"

    def __post_init__(self) -> None:
        if not self.scaling_floor > 0:
            raise ConfigError(f"scaling_floor must be > 0, got {self.scaling_floor}")
        if not self.scaling_span > 0:
            raise ConfigError(f"scaling_span must be > 0, got {self.scaling_span}")
        if self.scaling_floor + self.scaling_span > 1.0 + 1e-12:
            raise ConfigError(
                f"scaling_floor + scaling_span ≤ 1.0 violated: "
                f"{self.scaling_floor} + {self.scaling_span} = {self.scaling_floor + self.scaling_span}"
            )
        if not 0.5 < self.percentile_cap <= 1.0:
            raise ConfigError(f"percentile_cap must lie in (0.5, 1.0], got {self.percentile_cap}")
        if not self.mobile_cap_multiplier > 0:
            raise ConfigError(f"mobile_cap_multiplier must be > 0, got {self.mobile_cap_multiplier}")
        if self.global_average not in ("pooled", "unweighted"):
            raise ConfigError(f"global_average must be 'pooled' or 'unweighted', got {self.global_average!r}")
        if self.percentile_method not in ("linear", "nearest"):
            raise ConfigError(f"percentile_method must be 'linear' or 'nearest', got {self.percentile_method!r}")


def raw_usage_share(t: TelemetryAggregate) -> float:
    if t.active_users <= 0:
        raise EstimationError(f"{t.economy} {t.period}: no qualifying users (active_users = 0)")
    return t.ai_users / t.active_users


def adjust_opt_in(alpha: float, gamma: float, ctx: GlobalContext) -> float:
    """Blend ``gamma`` toward the global share when opt-in is at or below average.

    The weight on the country's own share is ``alpha / alpha_bar``. At
    ``alpha == alpha_bar`` both branches give ``gamma``.
    """
    alpha_bar, gamma_bar = ctx.alpha_bar, ctx.gamma_bar
    if alpha_bar <= 0:
        raise ConfigError("degenerate context: global opt-in rate alpha_bar = 0")
    if alpha > alpha_bar:
        return gamma
    w = alpha / alpha_bar
    blended = gamma_bar * ((alpha_bar - alpha) / alpha_bar) + gamma * w
    # the two weights sum to 1 only up to rounding; keep the result between its endpoints
    lo, hi = min(gamma, gamma_bar), max(gamma, gamma_bar)
    return min(max(blended, lo), hi)


def device_ratio(s: EconomySnapshot) -> float:
    """PC and tablet devices per working-age person."""
    share = s.reference.windows_market_share
    pop = s.reference.working_age_pop
    if not share > 0:
        raise EstimationError(f"{s.economy} {s.period}: windows_market_share must be > 0, got {share}")
    if not pop > 0:
        raise EstimationError(f"{s.economy} {s.period}: working_age_pop must be > 0, got {pop}")
    return (s.telemetry.mad / share) / pop


def percentile(values: Iterable[float], q: float, method: str = "linear") -> float:
    """Percentile at fraction ``q`` of ``values``.

    ``linear`` interpolates between the closest ranks (position
    ``q * (n - 1)`` in the sorted list); ``nearest`` is the nearest-rank
    definition ``sorted[ceil(q * n) - 1]``.
    """
    xs = sorted(values)
    if not xs:
        raise EstimationError("percentile of an empty set")
    n = len(xs)
    if method == "nearest":
        return xs[max(0, math.ceil(q * n) - 1)]
    h = q * (n - 1)
    lo = math.floor(h)
    hi = min(lo + 1, n - 1)
    return xs[lo] + (h - lo) * (xs[hi] - xs[lo])


def ratio_context(ratios: Mapping[str, float], cfg: EstimatorConfig = EstimatorConfig()) -> tuple[float, float]:
    """Return ``(ratio_min, ratio_p90)`` over a cross-section of device ratios."""
    if len(ratios) < MIN_CROSS_SECTION:
        raise EstimationError(
            f"insufficient cross-section for normalization: {len(ratios)} economies, need ≥ {MIN_CROSS_SECTION}"
        )
    values = [ratios[k] for k in sorted(ratios)]
    rmin = min(values)
    rp = percentile(values, cfg.percentile_cap, cfg.percentile_method)
    if not rp > rmin:
        raise EstimationError(f"degenerate ratio distribution: percentile {rp} ≤ minimum {rmin}")
    return rmin, rp


def device_scaling_raw(ratio: float, ctx: GlobalContext, cfg: EstimatorConfig = EstimatorConfig()) -> float:
    """Unclamped normalization; exceeds 1 above the percentile anchor."""
    return (ratio - ctx.ratio_min) / (ctx.ratio_p90 - ctx.ratio_min) * cfg.scaling_span + cfg.scaling_floor


def device_scaling(ratio: float, ctx: GlobalContext, cfg: EstimatorConfig = EstimatorConfig()) -> float:
    raw = device_scaling_raw(ratio, ctx, cfg)
    return min(max(raw, cfg.scaling_floor), 1.0)


def mobile_factor(ratio: float, region_avg: float, cfg: EstimatorConfig = EstimatorConfig()) -> float:
    """Mobile-to-desktop ratio, replaced by the regional average when it is an outlier."""
    if ratio > cfg.mobile_cap_multiplier * region_avg:
        return region_avg
    return ratio


def union_share(d: float, m: float) -> float:
    """``d + m - d*m`` rounded once from the exact value.

    Exact rational evaluation keeps the result within half an ulp of
    ``1 - (1-d)(1-m)`` for every pair of doubles.
    """
    fd, fm = Fraction(d), Fraction(m)
    return float(fd + fm - fd * fm)


def combine_shares(desktop_share: float, factor: float,
                   cfg: EstimatorConfig = EstimatorConfig()) -> tuple[float, float]:
    """Return ``(mobile_share, ai_user_share)`` under independent platforms."""
    if not 0.0 <= desktop_share <= 1.0:
        raise EstimationError(f"desktop_share out of [0,1]: {desktop_share}")
    m = desktop_share * factor
    if cfg.clamp_shares:
        m = min(max(m, 0.0), 1.0)
    total = union_share(desktop_share, m)
    if cfg.clamp_shares:
        total = min(max(total, 0.0), 1.0)
    return m, total


def global_context(
    snapshots: list[EconomySnapshot],
    regions: list[RegionDef] = (),
    cfg: EstimatorConfig = EstimatorConfig(),
    mobile_snapshots: list[EconomySnapshot] | None = None,
) -> GlobalContext:
    """Cross-section quantities over ``snapshots`` (the eligible economies).

    Regional mobile averages are unweighted means over every member present in
    ``mobile_snapshots`` (defaults to ``snapshots``); economies in no region
    use the mean over ``snapshots``. Reductions run in economy order.
    """
    snaps = sorted(snapshots, key=lambda s: s.economy)
    if not snaps:
        raise EstimationError("empty cross-section")
    active = [s.telemetry.active_users for s in snaps]
    if cfg.global_average == "pooled":
        total_active = sum(active)
        if total_active <= 0:
            raise EstimationError("no qualifying users in the cross-section")
        gamma_bar = sum(s.telemetry.ai_users for s in snaps) / total_active
        alpha_bar = math.fsum(s.telemetry.opt_in_rate * s.telemetry.active_users for s in snaps) / total_active
    else:
        usable = [s for s in snaps if s.telemetry.active_users > 0]
        gamma_bar = math.fsum(raw_usage_share(s.telemetry) for s in usable) / len(usable)
        alpha_bar = math.fsum(s.telemetry.opt_in_rate for s in snaps) / len(snaps)
    rmin, rp = ratio_context({s.economy: device_ratio(s) for s in snaps}, cfg)

    mob = sorted(mobile_snapshots if mobile_snapshots is not None else snaps, key=lambda s: s.economy)
    members = region_of(list(regions))
    by_region: dict[str, list[float]] = {}
    for s in mob:
        rid = members.get(s.economy)
        if rid is not None:
            by_region.setdefault(rid, []).append(s.reference.mobile_desktop_ratio)
    regional = {rid: math.fsum(v) / len(v) for rid, v in sorted(by_region.items())}
    global_mob = math.fsum(s.reference.mobile_desktop_ratio for s in snaps) / len(snaps)
    return GlobalContext(
        alpha_bar=min(max(alpha_bar, 0.0), 1.0),
        gamma_bar=min(max(gamma_bar, 0.0), 1.0),
        ratio_min=rmin,
        ratio_p90=rp,
        regional_mobile_avg=regional,
        member_region=members,
        global_mobile_avg=global_mob,
    )


def estimate(s: EconomySnapshot, ctx: GlobalContext, cfg: EstimatorConfig = EstimatorConfig()) -> ShareEstimate:
    """Run the whole per-economy chain and keep every intermediate."""
    try:
        gamma = raw_usage_share(s.telemetry)
        gamma_adj = adjust_opt_in(s.telemetry.opt_in_rate, gamma, ctx)
        ratio = device_ratio(s)
        raw_scaling = device_scaling_raw(ratio, ctx, cfg)
        scaling = min(max(raw_scaling, cfg.scaling_floor), 1.0)
        desktop = gamma_adj * scaling
        if cfg.clamp_shares:
            desktop = min(max(desktop, 0.0), 1.0)
        mob_ratio = s.reference.mobile_desktop_ratio
        factor = mobile_factor(mob_ratio, ctx.mobile_average_for(s.economy), cfg)
        mobile, total = combine_shares(desktop, factor, cfg)
    except (EstimationError, ConfigError) as exc:
        raise type(exc)(f"{s.economy} {s.period}: {exc}") from exc

    wap = s.reference.working_age_pop
    net = s.reference.internet_penetration
    connected, clamped = connected_share(total, net)
    return ShareEstimate(
        economy=s.economy,
        period=s.period,
        gamma_raw=gamma,
        gamma_adjusted=gamma_adj,
        device_ratio=ratio,
        device_scaling=scaling,
        scaling_clamped=scaling != raw_scaling,
        desktop_share=desktop,
        mobile_ratio=mob_ratio,
        mobile_factor=factor,
        mobile_capped=factor != mob_ratio,
        mobile_share=mobile,
        ai_user_share=total,
        naive_product=gamma_adj * scaling * factor,
        working_age_pop=wap,
        ai_users_abs=round(total * wap),
        internet_penetration=net,
        connected_share=connected,
        connected_clamped=clamped,
        gdp_per_capita=s.reference.gdp_per_capita,
        imputation=Imputation.DIRECT,
    )


def connected_share(share: float, internet_penetration: float | None) -> tuple[float | None, bool]:
    """Share among the connected population, clamped to 1; ``(None, False)`` if unknown."""
    if internet_penetration is None or internet_penetration <= 0:
        return None, False
    v = share / internet_penetration
    if v > 1.0:
        return 1.0, True
    return v, False


def with_population(est: ShareEstimate, working_age_pop: int) -> ShareEstimate:
    return replace(est, working_age_pop=working_age_pop,
                   ai_users_abs=round(est.ai_user_share * working_age_pop))
