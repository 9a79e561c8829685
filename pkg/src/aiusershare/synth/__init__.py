"""Synthetic individual-level populations with known AI-use ground truth.

A population is generated economy by economy from a counter-based random
stream keyed by ``(seed, economy, individual, stream)``, so results do not
depend on generation order or worker count. Aggregating it with
:func:`to_inputs` yields exactly the tables the real pipeline ingests, and
:func:`end_to_end_check` compares the pipeline's estimate against the
population's true share.

Model per individual in economy ``e``:

* desktop access with probability ``desktop_access_prob[e]``; among
  desktop owners a Microsoft user with ``microsoft_share_of_desktop``;
  among those opted in to telemetry with ``opt_in_prob``;
* uniform integer monthly minutes in ``[0, minutes_max]``;
* desktop AI use (desktop owners only) with ``ai_use_prob_desktop``;
* mobile access with ``mobile_ratio[e] * desktop_access_prob[e]``, so that
  mobile-to-desktop traffic equals ``mobile_ratio``; mobile AI use with
  ``ai_use_prob_mobile``.

The two AI-use decisions share a latent uniform with probability
``|cross_platform_correlation|`` (the comonotone or countermonotone copula),
otherwise they are independent; the latent correlation equals the knob.
"""
from __future__ import annotations

import json
import math
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterator, Sequence

import numpy as np

from ..aggregate import EligibilityConfig
from ..estimator import EstimatorConfig
from ..ingest import CONTEXT, MARKET, POPULATION, TELEMETRY, load_inputs, write_table
from ..model import ConfigError, Imputation, Period
from ..pipeline import run_period
from ._backend import BACKEND, kernels

__all__ = [
    "BACKEND",
    "Individual",
    "InputTables",
    "Population",
    "PopulationSpec",
    "SynthReport",
    "SynthRow",
    "economy_code",
    "end_to_end_check",
    "generate",
    "to_inputs",
    "true_share",
    "true_shares",
    "write_inputs",
]

HAS_DESKTOP, IS_MS, OPTED_IN, AI_DESKTOP, HAS_MOBILE, AI_MOBILE = 1, 2, 4, 8, 16, 32

_PER_ECONOMY = (
    "desktop_access_prob",
    "microsoft_share_of_desktop",
    "opt_in_prob",
    "ai_use_prob_desktop",
    "mobile_ratio",
    "ai_use_prob_mobile",
)


def economy_code(index: int) -> str:
    """Synthetic ISO-style code: XAA, XAB, ... (X codes are user-assigned)."""
    if not 0 <= index < 26 * 26:
        raise ValueError(f"economy index out of range: {index}")
    return "X" + chr(65 + index // 26) + chr(65 + index % 26)


@dataclass(frozen=True)
class PopulationSpec:
    economies: int
    individuals_per_economy: int
    seed: int
    desktop_access_prob: float | tuple[float, ...]
    microsoft_share_of_desktop: float | tuple[float, ...] = 0.8
    opt_in_prob: float | tuple[float, ...] = 1.0
    ai_use_prob_desktop: float | tuple[float, ...] = 0.25
    mobile_ratio: float | tuple[float, ...] = 0.8
    ai_use_prob_mobile: float | tuple[float, ...] = 0.25
    cross_platform_correlation: float = 0.0
    minutes_max: int = 3000
    minutes_threshold: int = 90
    represented_working_age_pop: int = 10_000_000
    total_to_working_age: float = 1.5
    period: str = "2025-01"

    def __post_init__(self) -> None:
        for name in _PER_ECONOMY:
            v = getattr(self, name)
            if isinstance(v, (list, tuple)):
                object.__setattr__(self, name, tuple(float(x) for x in v))
        if self.economies < 1:
            raise ConfigError("economies must be ≥ 1")
        if self.economies > 26 * 26:
            raise ConfigError("at most 676 synthetic economies")
        if self.individuals_per_economy < 1000:
            raise ConfigError(f"individuals_per_economy must be ≥ 1,000, got {self.individuals_per_economy}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        for name in _PER_ECONOMY:
            vals = self.values(name)
            bounded = name != "mobile_ratio"
            for i, v in enumerate(vals):
                if not math.isfinite(v) or v < 0 or (bounded and v > 1):
                    raise ConfigError(f"{name}[{i}] = {v} out of range")
        for i, (pd, r) in enumerate(zip(self.values("desktop_access_prob"), self.values("mobile_ratio"))):
            if pd * r > 1.0 + 1e-12:
                raise ConfigError(f"economy {i}: mobile_ratio × desktop_access_prob = {pd * r:.4f} exceeds 1")
        if not -1.0 <= self.cross_platform_correlation <= 1.0:
            raise ConfigError("cross_platform_correlation must lie in [-1, 1]")
        if self.minutes_max < 0 or self.minutes_threshold < 0:
            raise ConfigError("minutes_max and minutes_threshold must be ≥ 0")
        if self.represented_working_age_pop < self.individuals_per_economy:
            raise ConfigError("represented_working_age_pop must be ≥ individuals_per_economy")
        if self.total_to_working_age < 1.0:
            raise ConfigError("total_to_working_age must be ≥ 1")
        try:
            Period.parse(self.period)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def values(self, name: str) -> tuple[float, ...]:
        v = getattr(self, name)
        if isinstance(v, tuple):
            if len(v) != self.economies:
                raise ConfigError(f"{name} has {len(v)} values for {self.economies} economies")
            return v
        return (float(v),) * self.economies

    @property
    def weight(self) -> int:
        """Persons represented by one synthetic individual."""
        return max(1, self.represented_working_age_pop // self.individuals_per_economy)

    @classmethod
    def conforming(cls, economies: int = 20, individuals_per_economy: int = 50_000, seed: int = 20250101,
                   **overrides: Any) -> "PopulationSpec":
        """A spec meeting every estimator assumption.

        Desktop access spans 0.1 to 1.0 with the top tenth-plus at exactly
        1.0, so the cross-section minimum and 90th percentile of the device
        ratio land on the scaling anchors and the device scaling reproduces
        true access. Mobile ratios stay inside the regional cap, desktop and
        mobile AI propensities match, everybody opts in.
        """
        if economies < 10:
            raise ConfigError("conforming spec needs ≥ 10 economies")
        top = math.ceil(economies * 0.1) + 1
        ramp = economies - top
        access = [0.1 + 0.9 * i / ramp for i in range(ramp)] + [1.0] * top
        ratios = [0.6 + 0.4 * ((7 * i) % economies) / (economies - 1) for i in range(economies)]
        base = dict(
            economies=economies,
            individuals_per_economy=individuals_per_economy,
            seed=seed,
            desktop_access_prob=tuple(access),
            microsoft_share_of_desktop=0.8,
            opt_in_prob=1.0,
            ai_use_prob_desktop=0.25,
            mobile_ratio=tuple(ratios),
            ai_use_prob_mobile=0.25,
            cross_platform_correlation=0.0,
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        for name in _PER_ECONOMY:
            if isinstance(d[name], tuple):
                d[name] = list(d[name])
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PopulationSpec":
        if not isinstance(data, dict):
            raise ConfigError("population spec must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown population spec fields: {unknown}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"malformed population spec: {exc}") from None

    @classmethod
    def load(cls, path: str | Path) -> "PopulationSpec":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read population spec {path}: {exc}") from None
        return cls.from_dict(data)


@dataclass(frozen=True)
class Individual:
    economy: str
    has_desktop: bool
    is_ms_user: bool
    opted_in: bool
    minutes: int
    uses_ai_desktop: bool
    has_mobile: bool
    uses_ai_mobile: bool


@dataclass
class Population:
    """Struct-of-arrays storage; index or iterate to get :class:`Individual` views."""

    economies: list[str]
    economy_index: np.ndarray
    flags: np.ndarray
    minutes: np.ndarray

    def __len__(self) -> int:
        return len(self.flags)

    def _flag(self, bit: int) -> np.ndarray:
        return (self.flags & bit) != 0

    @property
    def has_desktop(self) -> np.ndarray:
        return self._flag(HAS_DESKTOP)

    @property
    def is_ms_user(self) -> np.ndarray:
        return self._flag(IS_MS)

    @property
    def opted_in(self) -> np.ndarray:
        return self._flag(OPTED_IN)

    @property
    def uses_ai_desktop(self) -> np.ndarray:
        return self._flag(AI_DESKTOP)

    @property
    def has_mobile(self) -> np.ndarray:
        return self._flag(HAS_MOBILE)

    @property
    def uses_ai_mobile(self) -> np.ndarray:
        return self._flag(AI_MOBILE)

    def __getitem__(self, i: int) -> Individual:
        f = int(self.flags[i])
        return Individual(
            economy=self.economies[int(self.economy_index[i])],
            has_desktop=bool(f & HAS_DESKTOP),
            is_ms_user=bool(f & IS_MS),
            opted_in=bool(f & OPTED_IN),
            minutes=int(self.minutes[i]),
            uses_ai_desktop=bool(f & AI_DESKTOP),
            has_mobile=bool(f & HAS_MOBILE),
            uses_ai_mobile=bool(f & AI_MOBILE),
        )

    def __iter__(self) -> Iterator[Individual]:
        for i in range(len(self)):
            yield self[i]

    def subset(self, economy: str) -> "Population":
        k = self.economies.index(economy)
        mask = self.economy_index == k
        return Population([economy], np.zeros(int(mask.sum()), dtype=np.int32), self.flags[mask], self.minutes[mask])

    @classmethod
    def from_individuals(cls, people: Sequence[Individual]) -> "Population":
        econs = sorted({p.economy for p in people})
        pos = {e: i for i, e in enumerate(econs)}
        flags = np.array([
            (HAS_DESKTOP if p.has_desktop else 0) | (IS_MS if p.is_ms_user else 0)
            | (OPTED_IN if p.opted_in else 0) | (AI_DESKTOP if p.uses_ai_desktop else 0)
            | (HAS_MOBILE if p.has_mobile else 0) | (AI_MOBILE if p.uses_ai_mobile else 0)
            for p in people
        ], dtype=np.uint8)
        return cls(econs, np.array([pos[p.economy] for p in people], dtype=np.int32), flags,
                   np.array([p.minutes for p in people], dtype=np.int32))


def _block(spec: PopulationSpec, e: int) -> tuple[np.ndarray, np.ndarray]:
    pd = spec.values("desktop_access_prob")[e]
    return kernels.generate_block(
        spec.seed, e, spec.individuals_per_economy,
        pd,
        spec.values("microsoft_share_of_desktop")[e],
        spec.values("opt_in_prob")[e],
        spec.minutes_max,
        spec.values("ai_use_prob_desktop")[e],
        min(1.0, spec.values("mobile_ratio")[e] * pd),
        spec.values("ai_use_prob_mobile")[e],
        spec.cross_platform_correlation,
    )


def generate(spec: PopulationSpec, workers: int = 1) -> Population:
    """Generate the population; output is identical for any ``workers``."""
    n = spec.individuals_per_economy
    econs = list(range(spec.economies))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            blocks = list(pool.map(lambda e: _block(spec, e), econs))
    else:
        blocks = [_block(spec, e) for e in econs]
    return Population(
        [economy_code(e) for e in econs],
        np.repeat(np.arange(spec.economies, dtype=np.int32), n),
        np.concatenate([b[0] for b in blocks]),
        np.concatenate([b[1] for b in blocks]),
    )


def true_share(pop: Population) -> float:
    """Fraction of individuals using AI on either platform."""
    if len(pop) == 0:
        raise ValueError("empty population")
    any_ai = (pop.flags & (AI_DESKTOP | AI_MOBILE)) != 0
    return float(np.count_nonzero(any_ai)) / len(pop)


def true_shares(pop: Population) -> dict[str, float]:
    any_ai = ((pop.flags & (AI_DESKTOP | AI_MOBILE)) != 0).astype(np.int64)
    k = len(pop.economies)
    users = np.bincount(pop.economy_index, weights=any_ai, minlength=k)
    sizes = np.bincount(pop.economy_index, minlength=k)
    return {e: float(users[i]) / float(sizes[i]) for i, e in enumerate(pop.economies) if sizes[i]}


@dataclass
class InputTables:
    telemetry: list[dict[str, Any]]
    market: list[dict[str, Any]]
    population: list[dict[str, Any]]
    context: list[dict[str, Any]]


def synthetic_gdp(access: float) -> float:
    """Monotone stand-in for GDP per capita so correlation commands have a column."""
    return round(1500.0 * 40.0 ** access, 2)


def to_inputs(pop: Population, spec: PopulationSpec) -> InputTables:
    """Aggregate a population into the four ingest tables.

    Active users are opted-in Microsoft users with at least
    ``spec.minutes_threshold`` minutes; every count is scaled by
    ``spec.weight`` persons per individual.
    """
    if len(pop) == 0:
        raise ValueError("empty population")
    k = len(pop.economies)
    idx = pop.economy_index
    w = spec.weight
    period = Period.parse(spec.period)

    def count(mask: np.ndarray) -> np.ndarray:
        return np.bincount(idx[mask], minlength=k).astype(np.int64)

    size = np.bincount(idx, minlength=k).astype(np.int64)
    has_d, ms, opt = pop.has_desktop, pop.is_ms_user, pop.opted_in
    active = opt & (pop.minutes >= spec.minutes_threshold)
    n_desk, n_ms, n_opt = count(has_d), count(ms), count(opt)
    n_active, n_ai = count(active), count(active & pop.uses_ai_desktop)
    n_mob = count(pop.has_mobile)
    n_online = count(has_d | pop.has_mobile)
    access = spec.values("desktop_access_prob")
    ms_prob = spec.values("microsoft_share_of_desktop")

    tables = InputTables([], [], [], [])
    for i, econ in enumerate(pop.economies):
        spec_i = spec_index(econ)
        win_share = n_ms[i] / n_desk[i] if n_ms[i] > 0 else (ms_prob[spec_i] or 1.0)
        tables.telemetry.append(dict(
            economy=econ, period=period,
            active_users=int(n_active[i]) * w, ai_users=int(n_ai[i]) * w,
            opt_in_rate=float(n_opt[i] / n_ms[i]) if n_ms[i] else 0.0,
            mad=int(n_ms[i]) * w,
        ))
        tables.market.append(dict(
            economy=econ, period=period,
            windows_market_share=float(win_share),
            mobile_desktop_ratio=float(n_mob[i] / n_desk[i]) if n_desk[i] else 0.0,
        ))
        wap = int(size[i]) * w
        tables.population.append(dict(
            economy=econ, period=period,
            working_age_pop=wap, total_pop=round(wap * spec.total_to_working_age),
        ))
        tables.context.append(dict(
            economy=econ, period=period,
            internet_penetration=float(n_online[i] / size[i]),
            gdp_per_capita=synthetic_gdp(access[spec_i]),
        ))
    return tables


def spec_index(code: str) -> int:
    return (ord(code[1]) - 65) * 26 + (ord(code[2]) - 65)


def write_inputs(tables: InputTables, directory: str | Path) -> Path:
    """Write the tables as ``telemetry.csv`` etc. in ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for schema, rows in ((TELEMETRY, tables.telemetry), (MARKET, tables.market),
                         (POPULATION, tables.population), (CONTEXT, tables.context)):
        write_table(d / f"{schema.name}.csv", schema, rows)
    return d


@dataclass(frozen=True)
class SynthRow:
    economy: str
    truth: float
    estimate: float | None
    error: float | None


@dataclass
class SynthReport:
    rows: list[SynthRow]
    tolerance_pp: float
    max_abs_error_pp: float
    passed: bool
    backend: str = BACKEND
    notes: list[str] = field(default_factory=list)

    @property
    def positive_errors(self) -> int:
        return sum(1 for r in self.rows if r.error is not None and r.error > 0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "tolerance_pp": self.tolerance_pp,
            "max_abs_error_pp": self.max_abs_error_pp,
            "positive_errors": self.positive_errors,
            "backend": self.backend,
            "notes": list(self.notes),
            "rows": [
                {"economy": r.economy, "truth": r.truth, "estimate": r.estimate, "error": r.error}
                for r in self.rows
            ],
        }


def end_to_end_check(
    spec: PopulationSpec,
    tolerance_pp: float,
    workdir: str | Path | None = None,
    estimator_cfg: EstimatorConfig = EstimatorConfig(),
    eligibility_cfg: EligibilityConfig = EligibilityConfig(),
    workers: int = 1,
) -> SynthReport:
    """Generate, aggregate, write, re-ingest and estimate; compare to the truth.

    Passes iff every economy got an estimate and the largest absolute error
    is at most ``tolerance_pp`` percentage points. Errors are signed
    ``estimate - truth`` fractions.
    """
    pop = generate(spec, workers=workers)
    truth = true_shares(pop)
    tables = to_inputs(pop, spec)
    with tempfile.TemporaryDirectory() as tmp:
        d = write_inputs(tables, workdir if workdir is not None else tmp)
        inputs = load_inputs(d)
    period = Period.parse(spec.period)
    result = run_period(inputs.snapshots[period], [], estimator_cfg, eligibility_cfg)
    est = {e.economy: e.ai_user_share for e in result.estimates if e.imputation is Imputation.DIRECT}
    rows = []
    notes = list(result.notes)
    for econ in pop.economies:
        if econ in est:
            rows.append(SynthRow(econ, truth[econ], est[econ], est[econ] - truth[econ]))
        else:
            rows.append(SynthRow(econ, truth[econ], None, None))
            notes.append(f"{econ}: no direct estimate")
    errs = [abs(r.error) for r in rows if r.error is not None]
    max_pp = 100.0 * max(errs) if errs else math.inf
    passed = len(errs) == len(rows) and max_pp <= tolerance_pp
    return SynthReport(rows, tolerance_pp, max_pp, passed, BACKEND, notes)
