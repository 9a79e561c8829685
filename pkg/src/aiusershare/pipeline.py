"""One-period orchestration: eligibility -> context -> estimates -> imputation."""
from __future__ import annotations

from dataclasses import dataclass, field

from .aggregate import (
    EligibilityConfig,
    EligibilityDecision,
    Verdict,
    aggregate_region,
    classify,
    global_summary,
    impute_members,
    pool_snapshots,
)
from .estimator import EstimatorConfig, estimate, global_context
from .model import EconomySnapshot, GlobalContext, Period, RegionDef, ShareEstimate


@dataclass
class PeriodResult:
    period: Period
    context: GlobalContext
    estimates: list[ShareEstimate]
    decisions: list[EligibilityDecision]
    notes: list[str] = field(default_factory=list)

    def summary(self) -> tuple[float, int]:
        return global_summary(self.estimates)


def run_period(
    snapshots: list[EconomySnapshot],
    regions: list[RegionDef] = (),
    estimator_cfg: EstimatorConfig = EstimatorConfig(),
    eligibility_cfg: EligibilityConfig = EligibilityConfig(),
) -> PeriodResult:
    """Estimate every economy of one period.

    Eligible economies get direct estimates. Sub-threshold members of a region
    are pooled into a regional row, which must itself pass the thresholds;
    its share is then imputed back to the members. The cross-section context
    uses eligible economies only.
    """
    snaps = sorted(snapshots, key=lambda s: s.economy)
    period = snaps[0].period if snaps else None
    decisions = [classify(s, regions, eligibility_cfg) for s in snaps]
    eligible = [s for s, d in zip(snaps, decisions) if d.verdict is Verdict.ELIGIBLE]
    grouped: dict[str, list[EconomySnapshot]] = {}
    for s, d in zip(snaps, decisions):
        if d.verdict is Verdict.GROUP_TO_REGION:
            grouped.setdefault(d.region, []).append(s)

    ctx = global_context(eligible, regions, estimator_cfg, mobile_snapshots=snaps)
    estimates = [estimate(s, ctx, estimator_cfg) for s in eligible]
    notes = []
    by_id = {r.region: r for r in regions}
    eligible_ids = [s.economy for s in eligible]
    for rid in sorted(grouped):
        members = grouped[rid]
        agg = aggregate_region(members, by_id[rid])
        verdict = classify(agg, [], eligibility_cfg)
        if verdict.verdict is not Verdict.ELIGIBLE:
            notes.append(f"region {rid} excluded: {verdict.reason}")
            decisions = [
                EligibilityDecision(d.economy, Verdict.EXCLUDED, f"{d.reason}; region {rid} below thresholds", rid)
                if d.region == rid and d.verdict is Verdict.GROUP_TO_REGION else d
                for d in decisions
            ]
            continue
        regional = estimate(agg, ctx, estimator_cfg)
        estimates.append(regional)
        estimates.extend(impute_members(regional, members, eligible=eligible_ids))
    estimates.sort(key=lambda e: e.economy)
    return PeriodResult(period, ctx, estimates, decisions, notes)


def run(
    snapshots: dict[Period, list[EconomySnapshot]],
    regions: list[RegionDef] = (),
    estimator_cfg: EstimatorConfig = EstimatorConfig(),
    eligibility_cfg: EligibilityConfig = EligibilityConfig(),
    mode: str = "latest",
    periods: list[Period] | None = None,
) -> list[PeriodResult]:
    """Run all requested periods (``latest``) or one pooled cross-section (``pooled``)."""
    periods = sorted(periods if periods is not None else snapshots)
    periods = [p for p in periods if snapshots.get(p)]
    if mode == "pooled":
        return [run_period(pool_snapshots(snapshots, periods), regions, estimator_cfg, eligibility_cfg)]
    if mode != "latest":
        raise ValueError(f"unknown mode {mode!r}")
    return [run_period(snapshots[p], regions, estimator_cfg, eligibility_cfg) for p in periods]
