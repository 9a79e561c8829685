"""CSV loading, schema validation and the telemetry/reference join.

Input files are UTF-8, comma separated, with a header row. Periods are
``YYYY-MM``; reference tables may also carry an annual ``YYYY`` period,
which is forward-filled to the twelve months of that year. Empty cells
mean "absent", never zero. Lines starting with ``#`` are comments.
"""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .model import (
    EconomySnapshot,
    IngestError,
    Period,
    ReferenceRecord,
    RegionDef,
    TelemetryAggregate,
    parse_economy_id,
    validate_regions,
    validate_snapshot,
)

_YEAR_RE = re.compile(r"^\d{4}$")

ECONOMY = "economy"
PERIOD = "period"
COUNT = "count"
POSITIVE_COUNT = "positive_count"
FRACTION = "fraction"
POSITIVE_FRACTION = "positive_fraction"
NONNEG = "nonneg"
POSITIVE = "positive"
TEXT = "text"
REGION = "region"


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    required: bool = True


@dataclass(frozen=True)
class RowCheck:
    rule: str
    test: Callable[[dict[str, Any]], bool]


@dataclass(frozen=True)
class TableSchema:
    name: str
    columns: tuple[Column, ...]
    key: tuple[str, ...]
    checks: tuple[RowCheck, ...] = ()
    annual_fill: bool = False

    def __post_init__(self) -> None:
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError(f"schema {self.name}: duplicate column names")
        by_name = {c.name: c for c in self.columns}
        for k in self.key:
            if k not in by_name or not by_name[k].required:
                raise ValueError(f"schema {self.name}: key column {k!r} must be a required column")

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]


TELEMETRY = TableSchema(
    "telemetry",
    (
        Column("economy", ECONOMY),
        Column("period", PERIOD),
        Column("active_users", COUNT),
        Column("ai_users", COUNT),
        Column("opt_in_rate", FRACTION),
        Column("mad", COUNT),
    ),
    key=("economy", "period"),
    checks=(
        RowCheck("ai_users ≤ active_users", lambda r: r["ai_users"] <= r["active_users"]),
        RowCheck("mad ≥ active_users", lambda r: r["mad"] >= r["active_users"]),
    ),
)

MARKET = TableSchema(
    "market",
    (
        Column("economy", ECONOMY),
        Column("period", PERIOD),
        Column("windows_market_share", POSITIVE_FRACTION),
        Column("mobile_desktop_ratio", NONNEG),
    ),
    key=("economy", "period"),
    annual_fill=True,
)

POPULATION = TableSchema(
    "population",
    (
        Column("economy", ECONOMY),
        Column("period", PERIOD),
        Column("working_age_pop", POSITIVE_COUNT),
        Column("total_pop", COUNT),
    ),
    key=("economy", "period"),
    checks=(RowCheck("total_pop ≥ working_age_pop", lambda r: r["total_pop"] >= r["working_age_pop"]),),
    annual_fill=True,
)

CONTEXT = TableSchema(
    "context",
    (
        Column("economy", ECONOMY),
        Column("period", PERIOD),
        Column("internet_penetration", FRACTION, required=False),
        Column("gdp_per_capita", POSITIVE, required=False),
    ),
    key=("economy", "period"),
    annual_fill=True,
)

REGIONS = TableSchema(
    "regions",
    (
        Column("region", REGION),
        Column("name", TEXT),
        Column("member", ECONOMY),
    ),
    key=("member",),
)

SCHEMAS = {s.name: s for s in (TELEMETRY, MARKET, POPULATION, CONTEXT, REGIONS)}


@dataclass(frozen=True)
class RowError:
    file: str
    line: int
    message: str

    def __str__(self) -> str:
        return f"{self.file}:{self.line}: {self.message}"


@dataclass
class IngestReport:
    rows_read: int = 0
    rows_accepted: int = 0
    errors: list[RowError] = field(default_factory=list)
    coverage: dict[Period, int] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    # (economy, period, reason) for telemetry rows dropped during the join
    excluded: list[tuple[str, str, str]] = field(default_factory=list)

    def merge(self, other: "IngestReport") -> None:
        self.rows_read += other.rows_read
        self.rows_accepted += other.rows_accepted
        self.errors.extend(other.errors)
        self.notes.extend(other.notes)
        self.excluded.extend(other.excluded)
        for p, n in other.coverage.items():
            self.coverage[p] = self.coverage.get(p, 0) + n

    def summary(self) -> dict[str, Any]:
        return {
            "rows_read": self.rows_read,
            "rows_accepted": self.rows_accepted,
            "errors": [str(e) for e in self.errors],
            "coverage": {str(p): n for p, n in sorted(self.coverage.items())},
            "notes": list(self.notes),
            "excluded": [list(x) for x in self.excluded],
        }


class _CellError(ValueError):
    pass


def _parse_int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        pass
    try:
        v = float(text)
    except ValueError:
        raise _CellError(f"expected integer, got {text!r}") from None
    if not math.isfinite(v) or v != int(v):
        raise _CellError(f"expected integer, got {text!r}")
    return int(v)


def _parse_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise _CellError(f"expected number, got {text!r}") from None
    if not math.isfinite(v):
        raise _CellError(f"expected finite number, got {text!r}")
    return v


def _convert(col: Column, text: str) -> Any:
    kind = col.kind
    if kind == ECONOMY:
        try:
            return parse_economy_id(text)
        except ValueError:
            raise _CellError(f"invalid economy id {text!r}") from None
    if kind == REGION:
        try:
            code = parse_economy_id(text)
        except ValueError:
            code = ""
        if not code.startswith("R-"):
            raise _CellError(f"invalid region id {text!r}")
        return code
    if kind == PERIOD:
        if _YEAR_RE.match(text):
            return int(text)
        try:
            return Period.parse(text)
        except ValueError:
            raise _CellError(f"invalid period {text!r}") from None
    if kind in (COUNT, POSITIVE_COUNT):
        v = _parse_int(text)
        if v < 0 or (kind == POSITIVE_COUNT and v == 0):
            bound = "> 0" if kind == POSITIVE_COUNT else "≥ 0"
            raise _CellError(f"{col.name} must be {bound}")
        return v
    if kind == FRACTION:
        v = _parse_float(text)
        if not 0.0 <= v <= 1.0:
            raise _CellError(f"{col.name} out of [0,1]")
        return v
    if kind == POSITIVE_FRACTION:
        v = _parse_float(text)
        if not 0.0 < v <= 1.0:
            raise _CellError(f"{col.name} out of (0,1]")
        return v
    if kind == NONNEG:
        v = _parse_float(text)
        if v < 0:
            raise _CellError(f"{col.name} must be ≥ 0")
        return v
    if kind == POSITIVE:
        v = _parse_float(text)
        if v <= 0:
            raise _CellError(f"{col.name} must be > 0")
        return v
    return text


def load_table(path: str | Path, schema: TableSchema) -> tuple[list[dict[str, Any]], IngestReport]:
    """Load and validate one CSV table.

    Returns accepted rows (each carrying its source line under ``"_line"``)
    and a report. Row-level problems are reported and skipped; a missing file
    or unusable header raises :class:`IngestError`. For duplicated keys the
    first occurrence wins.
    """
    path = Path(path)
    fname = path.name
    if not path.is_file():
        raise IngestError(f"{schema.name} table not found: {path}")
    report = IngestReport()
    rows: list[dict[str, Any]] = []

    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = None
        header_line = 0
        for raw in reader:
            if not raw or (len(raw) == 1 and not raw[0].strip()) or raw[0].startswith("#"):
                continue
            header = [h.strip() for h in raw]
            header_line = reader.line_num
            break
        if header is None:
            raise IngestError(f"{fname}: empty file, header row required")
        if len(set(header)) != len(header):
            raise IngestError(f"{fname}:{header_line}: malformed header, duplicate column names")
        missing = [c.name for c in schema.columns if c.required and c.name not in header]
        if missing:
            raise IngestError(f"{fname}:{header_line}: malformed header, missing columns {missing}")
        extra = [h for h in header if h not in schema.column_names]
        if extra:
            report.notes.append(f"{fname}: ignored extra columns {extra}")
        index = {h: i for i, h in enumerate(header)}

        first_seen: dict[tuple, int] = {}
        for raw in reader:
            if not raw or (len(raw) == 1 and not raw[0].strip()) or raw[0].startswith("#"):
                continue
            line = reader.line_num
            report.rows_read += 1
            if len(raw) != len(header):
                report.errors.append(RowError(fname, line, f"expected {len(header)} fields, got {len(raw)} at line {line}"))
                continue
            row: dict[str, Any] = {"_line": line}
            problem = None
            for col in schema.columns:
                if col.name not in index:
                    row[col.name] = None
                    continue
                text = raw[index[col.name]].strip()
                if text == "":
                    if col.required:
                        problem = f"{col.name} missing at line {line}"
                        break
                    row[col.name] = None
                    continue
                try:
                    row[col.name] = _convert(col, text)
                except _CellError as exc:
                    problem = f"{exc} at line {line}"
                    break
            if problem is None and isinstance(row.get("period"), int) and not schema.annual_fill:
                problem = f"annual period {row['period']} not allowed in {schema.name} table at line {line}"
            if problem is None:
                for check in schema.checks:
                    if not check.test(row):
                        problem = f"{check.rule} violated at line {line}"
                        break
            if problem is None:
                key = tuple(row[k] for k in schema.key)
                if key in first_seen:
                    shown = ", ".join(str(k) for k in key)
                    problem = f"duplicate key ({shown}) at line {line}, first seen at line {first_seen[key]}"
                else:
                    first_seen[key] = line
            if problem is not None:
                report.errors.append(RowError(fname, line, problem))
                continue
            rows.append(row)
            report.rows_accepted += 1

    if schema.annual_fill and "period" in schema.key:
        rows = _forward_fill(rows, schema, fname, report)
    for row in rows:
        p = row.get("period")
        if isinstance(p, Period):
            report.coverage[p] = report.coverage.get(p, 0) + 1
    return rows, report


def _forward_fill(rows: list[dict[str, Any]], schema: TableSchema, fname: str,
                  report: IngestReport) -> list[dict[str, Any]]:
    monthly = [r for r in rows if isinstance(r["period"], Period)]
    annual = [r for r in rows if isinstance(r["period"], int)]
    if not annual:
        return rows
    explicit = {(r["economy"], r["period"]) for r in monthly}
    out = list(monthly)
    for r in annual:
        year = r["period"]
        filled = 0
        for m in range(1, 13):
            p = Period(year, m)
            if (r["economy"], p) in explicit:
                continue
            out.append({**r, "period": p})
            filled += 1
        report.notes.append(
            f"{fname}:{r['_line']}: annual value for {r['economy']} {year} forward-filled to {filled} months"
        )
    out.sort(key=lambda r: (r["economy"], r["period"]))
    return out


def load_regions(path: str | Path) -> tuple[list[RegionDef], IngestReport]:
    rows, report = load_table(path, REGIONS)
    grouped: dict[str, dict[str, Any]] = {}
    for r in rows:
        g = grouped.setdefault(r["region"], {"name": r["name"], "members": []})
        if g["name"] != r["name"]:
            report.notes.append(f"{Path(path).name}:{r['_line']}: region {r['region']} has conflicting names, kept {g['name']!r}")
        g["members"].append(r["member"])
    regions = []
    for rid in sorted(grouped):
        g = grouped[rid]
        try:
            regions.append(RegionDef(rid, g["name"], tuple(sorted(g["members"]))))
        except ValueError as exc:
            raise IngestError(f"{Path(path).name}: {exc}") from None
    try:
        validate_regions(regions)
    except ValueError as exc:
        raise IngestError(f"{Path(path).name}: {exc}") from None
    return regions, report


def join_snapshots(
    telemetry: list[dict[str, Any]],
    market: list[dict[str, Any]],
    population: list[dict[str, Any]],
    context: list[dict[str, Any]] | None = None,
    periods: list[Period] | None = None,
) -> tuple[dict[Period, list[EconomySnapshot]], IngestReport]:
    """Join telemetry with reference tables into snapshots grouped by period.

    A telemetry row without matching market and population rows is excluded
    and named in the report; context columns are optional. Snapshots in each
    period are sorted by economy. Raises :class:`IngestError` when a requested
    period ends up empty.
    """
    report = IngestReport()
    mk = {(r["economy"], r["period"]): r for r in market}
    pk = {(r["economy"], r["period"]): r for r in population}
    ck = {(r["economy"], r["period"]): r for r in (context or [])}
    wanted = set(periods) if periods is not None else None

    out: dict[Period, list[EconomySnapshot]] = {}
    for t in sorted(telemetry, key=lambda r: (r["period"], r["economy"])):
        econ, per = t["economy"], t["period"]
        if wanted is not None and per not in wanted:
            continue
        report.rows_read += 1
        missing = [name for name, table in (("market", mk), ("population", pk)) if (econ, per) not in table]
        if missing:
            reason = "missing reference: " + ", ".join(missing)
            report.excluded.append((econ, str(per), reason))
            report.errors.append(RowError("telemetry", t.get("_line", 0), f"{econ} {per}: {reason}"))
            continue
        m, p = mk[(econ, per)], pk[(econ, per)]
        c = ck.get((econ, per), {})
        snap = EconomySnapshot(
            TelemetryAggregate(econ, per, t["active_users"], t["ai_users"], t["opt_in_rate"], t["mad"]),
            ReferenceRecord(
                econ, per,
                windows_market_share=m["windows_market_share"],
                mobile_desktop_ratio=m["mobile_desktop_ratio"],
                working_age_pop=p["working_age_pop"],
                total_pop=p["total_pop"],
                internet_penetration=c.get("internet_penetration"),
                gdp_per_capita=c.get("gdp_per_capita"),
            ),
        )
        violations = validate_snapshot(snap)
        if violations:
            reason = "; ".join(str(v) for v in violations)
            report.excluded.append((econ, str(per), reason))
            report.errors.append(RowError("telemetry", t.get("_line", 0), f"{econ} {per}: {reason}"))
            continue
        out.setdefault(per, []).append(snap)
        report.rows_accepted += 1

    for per in out:
        out[per].sort(key=lambda s: s.economy)
        report.coverage[per] = len(out[per])
    if wanted is not None:
        empty = sorted(p for p in wanted if not out.get(p))
        if empty:
            raise IngestError(
                "no economy has telemetry and complete reference data for "
                + ", ".join(str(p) for p in empty)
            )
    return dict(sorted(out.items())), report


@dataclass
class Inputs:
    snapshots: dict[Period, list[EconomySnapshot]]
    regions: list[RegionDef]
    report: IngestReport
    table_reports: dict[str, IngestReport]


def load_inputs(input_dir: str | Path, periods: list[Period] | None = None) -> Inputs:
    """Load every input table from ``input_dir`` and join them.

    ``context.csv`` and ``regions.csv`` are optional.
    """
    d = Path(input_dir)
    tel_path = d / "telemetry.csv"
    if not tel_path.is_file():
        raise IngestError(f"no telemetry rows: {tel_path} not found")
    tables: dict[str, list[dict[str, Any]]] = {}
    reports: dict[str, IngestReport] = {}
    for schema in (TELEMETRY, MARKET, POPULATION, CONTEXT):
        path = d / f"{schema.name}.csv"
        if schema is CONTEXT and not path.is_file():
            tables[schema.name], reports[schema.name] = [], IngestReport(notes=["context.csv absent"])
            continue
        tables[schema.name], reports[schema.name] = load_table(path, schema)
    if not tables["telemetry"]:
        raise IngestError(f"no telemetry rows in {tel_path}")
    regions: list[RegionDef] = []
    if (d / "regions.csv").is_file():
        regions, reports["regions"] = load_regions(d / "regions.csv")
    snaps, join_report = join_snapshots(
        tables["telemetry"], tables["market"], tables["population"], tables["context"], periods
    )
    combined = IngestReport()
    for name in sorted(reports):
        r = reports[name]
        combined.errors.extend(r.errors)
        combined.notes.extend(r.notes)
    combined.rows_read = reports["telemetry"].rows_read
    combined.rows_accepted = join_report.rows_accepted
    combined.coverage = dict(join_report.coverage)
    combined.excluded = list(join_report.excluded)
    combined.errors.extend(join_report.errors)
    return Inputs(snaps, regions, combined, reports)


def write_table(path: str | Path, schema: TableSchema, rows: list[dict[str, Any]]) -> None:
    """Write rows in the exact column order the loader expects."""
    names = schema.column_names
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for r in rows:
            w.writerow(["" if r.get(n) is None else _fmt_cell(r[n]) for n in names])


def _fmt_cell(v: Any) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)
