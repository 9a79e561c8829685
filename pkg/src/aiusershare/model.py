"""Shared value types, identifiers and invariant checks.

Every type here is a frozen dataclass, so instances can be shared freely
between threads. Fractions are floats in [0, 1]; counts are Python ints.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from typing import Any, Iterator

_ECONOMY_RE = re.compile(r"^(?:R-)?[A-Z]{3}$")
_PERIOD_RE = re.compile(r"^(\d{4})-(\d{2})$")

REGION_PREFIX = "R-"


class AIUserShareError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(AIUserShareError):
    """Invalid configuration value or broken config invariant."""


class IngestError(AIUserShareError):
    """Fatal input problem: missing file, bad header, empty join."""


class EstimationError(AIUserShareError):
    """A per-economy or cross-section formula could not be evaluated."""


class AggregationError(AIUserShareError):
    """Inconsistent grouping: mixed periods, double assignment, duplicates."""


class AnalysisError(AIUserShareError):
    """Statistical analysis precondition failed."""


def parse_economy_id(code: str) -> str:
    """Validate an ISO 3166-1 alpha-3 code or an ``R-`` region code."""
    if not isinstance(code, str) or not _ECONOMY_RE.match(code):
        raise ValueError(f"invalid economy id {code!r}: expected 3 uppercase letters or 'R-' + 3 letters")
    return code


def format_economy_id(code: str) -> str:
    return parse_economy_id(code)


def is_region_id(code: str) -> bool:
    return code.startswith(REGION_PREFIX)


@dataclass(frozen=True, order=True)
class Period:
    """A calendar month."""

    year: int
    month: int

    def __post_init__(self) -> None:
        if not 1 <= self.month <= 12:
            raise ValueError(f"month out of range: {self.month}")

    @classmethod
    def parse(cls, text: str) -> "Period":
        m = _PERIOD_RE.match(text.strip())
        if not m:
            raise ValueError(f"invalid period {text!r}: expected YYYY-MM")
        return cls(int(m.group(1)), int(m.group(2)))

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"

    @property
    def index(self) -> int:
        return self.year * 12 + (self.month - 1)

    @classmethod
    def from_index(cls, index: int) -> "Period":
        return cls(index // 12, index % 12 + 1)

    def shift(self, months: int) -> "Period":
        return Period.from_index(self.index + months)

    def succ(self) -> "Period":
        return self.shift(1)

    def pred(self) -> "Period":
        return self.shift(-1)


def period_range(start: Period, end: Period) -> list[Period]:
    """Inclusive list of months from ``start`` to ``end``."""
    return [Period.from_index(i) for i in range(start.index, end.index + 1)]


def parse_period_range(text: str) -> tuple[Period, Period]:
    """Parse ``YYYY-MM..YYYY-MM`` or a single ``YYYY-MM``."""
    if ".." in text:
        a, b = text.split("..", 1)
        start, end = Period.parse(a), Period.parse(b)
    else:
        start = end = Period.parse(text)
    if end < start:
        raise ValueError(f"empty period range {text!r}")
    return start, end


@dataclass(frozen=True)
class TelemetryAggregate:
    economy: str
    period: Period
    active_users: int
    ai_users: int
    opt_in_rate: float
    mad: int


@dataclass(frozen=True)
class ReferenceRecord:
    economy: str
    period: Period
    windows_market_share: float
    mobile_desktop_ratio: float
    working_age_pop: int
    total_pop: int
    internet_penetration: float | None = None
    gdp_per_capita: float | None = None


@dataclass(frozen=True)
class RegionDef:
    region: str
    name: str
    members: tuple[str, ...]

    def __post_init__(self) -> None:
        if not is_region_id(self.region):
            raise ValueError(f"region id must start with {REGION_PREFIX!r}: {self.region!r}")
        parse_economy_id(self.region)
        if len(set(self.members)) != len(self.members):
            raise ValueError(f"region {self.region} lists a member twice")
        if len(self.members) < 2:
            raise ValueError(f"region {self.region} needs at least 2 members")


def validate_regions(regions: list[RegionDef]) -> None:
    """Raise ``ValueError`` when two regions share a member or an id."""
    seen: dict[str, str] = {}
    ids = set()
    for r in regions:
        if r.region in ids:
            raise ValueError(f"duplicate region id {r.region}")
        ids.add(r.region)
        for m in r.members:
            if m in seen:
                raise ValueError(f"{m} is a member of both {seen[m]} and {r.region}")
            seen[m] = r.region


def region_of(regions: list[RegionDef]) -> dict[str, str]:
    """Map member economy -> region id."""
    return {m: r.region for r in regions for m in r.members}


@dataclass(frozen=True)
class EconomySnapshot:
    telemetry: TelemetryAggregate
    reference: ReferenceRecord

    @property
    def economy(self) -> str:
        return self.telemetry.economy

    @property
    def period(self) -> Period:
        return self.telemetry.period


@dataclass(frozen=True)
class GlobalContext:
    """Cross-section quantities shared by every per-economy estimate in a period.

    ``member_region`` maps economies to the region used for their mobile
    average; economies outside every region use ``global_mobile_avg``.
    """

    alpha_bar: float
    gamma_bar: float
    ratio_min: float
    ratio_p90: float
    regional_mobile_avg: dict[str, float] = field(default_factory=dict)
    member_region: dict[str, str] = field(default_factory=dict)
    global_mobile_avg: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha_bar <= 1.0:
            raise ValueError(f"alpha_bar out of [0,1]: {self.alpha_bar}")
        if not 0.0 <= self.gamma_bar <= 1.0:
            raise ValueError(f"gamma_bar out of [0,1]: {self.gamma_bar}")
        if not self.ratio_p90 > self.ratio_min:
            raise ValueError("ratio_p90 must exceed ratio_min")

    def mobile_average_for(self, economy: str) -> float:
        if is_region_id(economy) and economy in self.regional_mobile_avg:
            return self.regional_mobile_avg[economy]
        region = self.member_region.get(economy)
        if region is not None and region in self.regional_mobile_avg:
            return self.regional_mobile_avg[region]
        return self.global_mobile_avg


class Imputation(str, enum.Enum):
    DIRECT = "direct"
    REGION_IMPUTED = "region_imputed"


@dataclass(frozen=True)
class ShareEstimate:
    """The full indicator bundle for one economy (or region) and period.

    All intermediate quantities are kept so a published number can be
    traced back to its inputs.
    """

    economy: str
    period: Period
    gamma_raw: float
    gamma_adjusted: float
    device_ratio: float
    device_scaling: float
    scaling_clamped: bool
    desktop_share: float
    mobile_ratio: float
    mobile_factor: float
    mobile_capped: bool
    mobile_share: float
    ai_user_share: float
    naive_product: float
    working_age_pop: int
    ai_users_abs: int
    internet_penetration: float | None = None
    connected_share: float | None = None
    connected_clamped: bool = False
    gdp_per_capita: float | None = None
    imputation: Imputation = Imputation.DIRECT
    region: str | None = None

    def as_row(self) -> dict[str, Any]:
        return {
            "economy": self.economy,
            "period": str(self.period),
            "gamma_raw": self.gamma_raw,
            "gamma_adjusted": self.gamma_adjusted,
            "device_ratio": self.device_ratio,
            "device_scaling": self.device_scaling,
            "scaling_clamped": self.scaling_clamped,
            "desktop_share": self.desktop_share,
            "mobile_ratio": self.mobile_ratio,
            "mobile_factor": self.mobile_factor,
            "mobile_capped": self.mobile_capped,
            "mobile_share": self.mobile_share,
            "ai_user_share": self.ai_user_share,
            "naive_product": self.naive_product,
            "working_age_pop": self.working_age_pop,
            "ai_users_abs": self.ai_users_abs,
            "internet_penetration": self.internet_penetration,
            "connected_share": self.connected_share,
            "connected_clamped": self.connected_clamped,
            "gdp_per_capita": self.gdp_per_capita,
            "imputation": self.imputation.value,
            "region": self.region,
        }


ESTIMATE_COLUMNS = list(ShareEstimate.__dataclass_fields__)


@dataclass(frozen=True)
class SeriesPoint:
    economy: str
    period: Period
    value: float


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str
    observed: Any

    def __str__(self) -> str:
        return f"{self.field}: {self.rule} (observed {self.observed!r})"


def _is_real(x: Any) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _check_id(out: list[Violation], name: str, value: Any) -> None:
    try:
        parse_economy_id(value)
    except (ValueError, TypeError):
        out.append(Violation(name, "valid economy id", value))


def validate_snapshot(snapshot: EconomySnapshot) -> list[Violation]:
    """Return every broken invariant of ``snapshot``; an empty list means valid.

    Never raises, whatever the field contents are.
    """
    out: list[Violation] = []
    t = getattr(snapshot, "telemetry", None)
    r = getattr(snapshot, "reference", None)
    if t is None or r is None:
        return [Violation("snapshot", "has telemetry and reference", snapshot)]

    _check_id(out, "telemetry.economy", getattr(t, "economy", None))
    _check_id(out, "reference.economy", getattr(r, "economy", None))
    if getattr(t, "economy", None) != getattr(r, "economy", None):
        out.append(Violation("economy", "telemetry and reference agree on economy",
                             (getattr(t, "economy", None), getattr(r, "economy", None))))
    if getattr(t, "period", None) != getattr(r, "period", None):
        out.append(Violation("period", "telemetry and reference agree on period",
                             (getattr(t, "period", None), getattr(r, "period", None))))

    active = getattr(t, "active_users", None)
    ai = getattr(t, "ai_users", None)
    mad = getattr(t, "mad", None)
    alpha = getattr(t, "opt_in_rate", None)
    counts_ok = True
    for name, v in (("active_users", active), ("ai_users", ai), ("mad", mad)):
        if not _is_real(v) or v < 0:
            out.append(Violation(name, f"{name} ≥ 0", v))
            counts_ok = False
    if counts_ok:
        if ai > active:
            out.append(Violation("ai_users", "ai_users ≤ active_users", ai))
        if mad < active:
            out.append(Violation("mad", "mad ≥ active_users", mad))
    if not _is_real(alpha) or not 0.0 <= alpha <= 1.0:
        out.append(Violation("opt_in_rate", "0 ≤ opt_in_rate ≤ 1", alpha))

    share = getattr(r, "windows_market_share", None)
    if not _is_real(share) or not share > 0.0:
        out.append(Violation("windows_market_share", "windows_market_share > 0", share))
    elif share > 1.0:
        out.append(Violation("windows_market_share", "windows_market_share ≤ 1", share))
    mob = getattr(r, "mobile_desktop_ratio", None)
    if not _is_real(mob) or mob < 0.0:
        out.append(Violation("mobile_desktop_ratio", "mobile_desktop_ratio ≥ 0", mob))
    wap = getattr(r, "working_age_pop", None)
    tot = getattr(r, "total_pop", None)
    if not _is_real(wap) or not wap > 0:
        out.append(Violation("working_age_pop", "working_age_pop > 0", wap))
    if not _is_real(tot):
        out.append(Violation("total_pop", "total_pop is a count", tot))
    elif _is_real(wap) and tot < wap:
        out.append(Violation("total_pop", "total_pop ≥ working_age_pop", tot))
    net = getattr(r, "internet_penetration", None)
    if net is not None and (not _is_real(net) or not 0.0 <= net <= 1.0):
        out.append(Violation("internet_penetration", "0 ≤ internet_penetration ≤ 1", net))
    gdp = getattr(r, "gdp_per_capita", None)
    if gdp is not None and (not _is_real(gdp) or gdp < 0):
        out.append(Violation("gdp_per_capita", "gdp_per_capita ≥ 0", gdp))
    return out


def iter_fraction_fields(est: ShareEstimate) -> Iterator[tuple[str, float]]:
    for name in ("gamma_raw", "gamma_adjusted", "device_scaling", "desktop_share",
                 "mobile_share", "ai_user_share"):
        yield name, getattr(est, name)
    if est.connected_share is not None:
        yield "connected_share", est.connected_share
