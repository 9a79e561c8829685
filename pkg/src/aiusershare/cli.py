"""Command-line interface.

Exit codes: 0 ok, 1 input error, 2 config error, 3 analysis error,
4 validation (oracle) mismatch.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .aggregate import EligibilityConfig, rolling_average
from .analytics import event_delta, loglinear_fit, rank_economies, series_gaps, spearman
from .estimator import EstimatorConfig
from .ingest import Column, TableSchema, load_inputs, load_table
from .model import (
    ESTIMATE_COLUMNS,
    AggregationError,
    AIUserShareError,
    AnalysisError,
    ConfigError,
    EstimationError,
    Imputation,
    IngestError,
    Period,
    SeriesPoint,
    parse_period_range,
    period_range,
)
from .pipeline import run
from .synth import PopulationSpec, end_to_end_check

EXIT_OK, EXIT_INPUT, EXIT_CONFIG, EXIT_ANALYSIS, EXIT_VALIDATION = 0, 1, 2, 3, 4

ESTIMATES_SCHEMA = TableSchema(
    "estimates",
    (
        Column("economy", "economy"),
        Column("period", "period"),
        Column("ai_user_share", "fraction"),
        Column("gdp_per_capita", "positive", required=False),
        Column("internet_penetration", "fraction", required=False),
        Column("imputation", "text", required=False),
    ),
    key=("economy", "period"),
)

SERIES_SCHEMA = TableSchema(
    "series",
    (Column("economy", "economy"), Column("period", "period"), Column("value", "nonneg")),
    key=("economy", "period"),
)


@dataclass
class RunConfig:
    input_dir: str | None = None
    period: str | None = None
    mode: str = "latest"
    eligibility: EligibilityConfig = field(default_factory=EligibilityConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    output_dir: str = "."
    format: str = "csv"

    def periods(self) -> list[Period] | None:
        if self.period is None:
            return None
        return period_range(*parse_period_range(self.period))

    def digest(self) -> str:
        d = asdict(self)
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def _sub(cls, data: Any, name: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{name} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown {name} fields: {unknown}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{name}: {exc}") from None


def load_config(path: str | None, args: argparse.Namespace) -> RunConfig:
    data: dict[str, Any] = {}
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config fields: {unknown}")
    cfg = RunConfig(
        input_dir=data.get("input_dir"),
        period=data.get("period"),
        mode=data.get("mode", "latest"),
        eligibility=_sub(EligibilityConfig, data.get("eligibility"), "eligibility"),
        estimator=_sub(EstimatorConfig, data.get("estimator"), "estimator"),
        output_dir=data.get("output_dir", "."),
        format=data.get("format", "csv"),
    )
    for attr in ("input_dir", "period", "mode", "format"):
        v = getattr(args, attr, None)
        if v is not None:
            setattr(cfg, attr, v)
    if getattr(args, "out", None) is not None:
        cfg.output_dir = args.out
    if cfg.mode not in ("pooled", "latest"):
        raise ConfigError(f"mode must be 'pooled' or 'latest', got {cfg.mode!r}")
    if cfg.format not in ("csv", "json"):
        raise ConfigError(f"format must be 'csv' or 'json', got {cfg.format!r}")
    if cfg.period is not None:
        try:
            parse_period_range(cfg.period)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    out = Path(cfg.output_dir)
    if out.exists() and not out.is_dir():
        raise ConfigError(f"output path {out} is not a directory")
    return cfg


def _fmt(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return format(v, ".6g")
    return str(v)


def _json_value(v: Any) -> Any:
    if isinstance(v, float) and not isinstance(v, bool):
        if math.isnan(v):
            return None
        return float(format(v, ".6g"))
    return v


def _meta(cfg_hash: str) -> dict[str, str]:
    return {"tool": f"aiusershare {__version__}", "config_hash": cfg_hash}


def write_rows(path_stem: Path, fmt: str, columns: list[str], rows: list[dict[str, Any]], cfg_hash: str) -> Path:
    path_stem.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path = path_stem.with_suffix(".json")
        doc = {"_meta": _meta(cfg_hash), "columns": columns,
               "rows": [{c: _json_value(r.get(c)) for c in columns} for r in rows]}
        path.write_text(json.dumps(doc, indent=2, sort_keys=False, ensure_ascii=False) + "\n", encoding="utf-8")
        return path
    path = path_stem.with_suffix(".csv")
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# aiusershare {__version__} config={cfg_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])
    return path


def write_json(path: Path, doc: dict[str, Any], cfg_hash: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    out = {"_meta": _meta(cfg_hash), **doc}
    path.write_text(json.dumps(out, indent=2, sort_keys=True, default=_json_default, ensure_ascii=False) + "\n",
                    encoding="utf-8")
    return path


def _json_default(o: Any) -> Any:
    if isinstance(o, Period):
        return str(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def _rounded(d: dict[str, Any]) -> dict[str, Any]:
    return {k: _json_value(v) for k, v in d.items()}


def _compute(cfg: RunConfig):
    if not cfg.input_dir:
        raise ConfigError("input_dir is required (config file or --input-dir)")
    if not Path(cfg.input_dir).is_dir():
        raise IngestError(f"no telemetry rows: input directory {cfg.input_dir} does not exist")
    inputs = load_inputs(cfg.input_dir, cfg.periods())
    results = run(inputs.snapshots, inputs.regions, cfg.estimator, cfg.eligibility, cfg.mode, cfg.periods())
    if not results:
        raise IngestError("no telemetry rows joined for the requested periods")
    return inputs, results


def cmd_compute(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args)
    inputs, results = _compute(cfg)
    h = cfg.digest()
    out = Path(cfg.output_dir)
    rows = [e.as_row() for r in results for e in r.estimates]
    rows.sort(key=lambda r: (r["period"], r["economy"]))
    write_rows(out / "estimates", cfg.format, ESTIMATE_COLUMNS, rows, h)
    report = {
        "mode": cfg.mode,
        "ingest": inputs.report.summary(),
        "periods": [_period_report(r) for r in results],
    }
    write_json(out / "report.json", report, h)
    print(f"wrote {len(rows)} estimates for {len(results)} period(s) to {out}")
    return EXIT_OK


def _period_report(r) -> dict[str, Any]:
    share, users = r.summary()
    ctx = r.context
    return {
        "period": str(r.period),
        "context": _rounded({
            "alpha_bar": ctx.alpha_bar,
            "gamma_bar": ctx.gamma_bar,
            "ratio_min": ctx.ratio_min,
            "ratio_p90": ctx.ratio_p90,
            "global_mobile_avg": ctx.global_mobile_avg,
        }) | {"regional_mobile_avg": _rounded(dict(sorted(ctx.regional_mobile_avg.items())))},
        "global_share": _json_value(share),
        "total_users": users,
        "decisions": [
            {"economy": d.economy, "verdict": d.verdict.value, "reason": d.reason, "region": d.region}
            for d in r.decisions
        ],
        "notes": list(r.notes),
    }


def _load_estimates(path: str) -> list[dict[str, Any]]:
    rows, report = load_table(path, ESTIMATES_SCHEMA)
    for e in report.errors:
        print(f"warning: {e}", file=sys.stderr)
    if not rows:
        raise IngestError(f"no estimate rows in {path}")
    return rows


def _latest_rows(args: argparse.Namespace, cfg: RunConfig | None) -> tuple[list[dict[str, Any]], str]:
    """Latest-period (or pooled) estimate rows as plain dicts, plus a config hash."""
    if args.estimates:
        rows = _load_estimates(args.estimates)
        latest = max(r["period"] for r in rows)
        picked = [r for r in rows if r["period"] == latest]
        h = hashlib.sha256(Path(args.estimates).read_bytes()).hexdigest()[:12]
        return picked, h
    _, results = _compute(cfg)
    last = results[-1]
    return [e.as_row() | {"period": e.period} for e in last.estimates], cfg.digest()


def cmd_rank(args: argparse.Namespace) -> int:
    cfg = None if args.estimates else load_config(args.config, args)
    rows, h = _latest_rows(args, cfg)
    direct = [r for r in rows if (r.get("imputation") or Imputation.DIRECT.value) == Imputation.DIRECT.value]
    ranking = rank_economies([(r["economy"], r["ai_user_share"]) for r in direct], args.top_k, args.tie_break)
    out = Path(args.out or (cfg.output_dir if cfg else "."))
    fmt = args.format or (cfg.format if cfg else "csv")
    table = [{"rank": x.rank, "economy": x.economy, "ai_user_share": x.value, "ai_user_share_pct": x.percent}
             for x in ranking]
    write_rows(out / "ranking", fmt, ["rank", "economy", "ai_user_share", "ai_user_share_pct"], table, h)
    for x in ranking:
        print(f"{x.rank:>4}  {x.economy:<6} {x.percent:>6}")
    return EXIT_OK


def cmd_correlate(args: argparse.Namespace) -> int:
    cfg = None if args.estimates else load_config(args.config, args)
    rows, h = _latest_rows(args, cfg)
    column = args.against
    usable = sorted(
        (r for r in rows
         if (r.get("imputation") or "direct") == "direct" and r.get(column) is not None),
        key=lambda r: r["economy"],
    )
    skipped = sorted({r["economy"] for r in rows} - {r["economy"] for r in usable})
    x = [r[column] for r in usable]
    y = [r["ai_user_share"] for r in usable]
    rho, p = spearman(x, y)
    fit = loglinear_fit(x, y)
    kept = [r for i, r in enumerate(usable) if i not in set(fit.dropped)]
    residuals = [
        {"economy": r["economy"], column: _json_value(r[column]), "ai_user_share": _json_value(r["ai_user_share"]),
         "fitted": _json_value(r["ai_user_share"] - res), "residual": _json_value(res)}
        for r, res in zip(kept, fit.residuals)
    ]
    doc = {
        "against": column,
        "n": len(usable),
        "rho": _json_value(rho),
        "p_value": p,
        "trend": _rounded({"slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared}) | {"n": fit.n},
        "residuals": residuals,
        "skipped": skipped,
    }
    out = Path(args.out or (cfg.output_dir if cfg else "."))
    write_json(out / "correlation.json", doc, h)
    print(f"rho={rho:.4f} p={p:.3g} n={len(usable)} slope={fit.slope:.4f} r2={fit.r_squared:.3f}")
    return EXIT_OK


def cmd_timeseries(args: argparse.Namespace) -> int:
    if args.series:
        rows, report = load_table(args.series, SERIES_SCHEMA)
        for e in report.errors:
            print(f"warning: {e}", file=sys.stderr)
        points = [SeriesPoint(r["economy"], r["period"], r["value"]) for r in rows]
        cfg = None
        h = hashlib.sha256(Path(args.series).read_bytes()).hexdigest()[:12]
    else:
        cfg = load_config(args.config, args)
        cfg = replace(cfg, mode="latest")
        _, results = _compute(cfg)
        points = [SeriesPoint(e.economy, e.period, e.ai_user_share) for r in results for e in r.estimates]
        h = cfg.digest()
    if args.economies:
        wanted = {c.strip() for c in args.economies.split(",") if c.strip()}
        points = [p for p in points if p.economy in wanted]
        absent = sorted(wanted - {p.economy for p in points})
        if absent:
            raise AnalysisError(f"no series for {', '.join(absent)}")
    by_econ: dict[str, list[SeriesPoint]] = {}
    for p in points:
        by_econ.setdefault(p.economy, []).append(p)
    gaps = {e: series_gaps(ps) for e, ps in sorted(by_econ.items())}
    gaps = {e: g for e, g in gaps.items() if g}
    if gaps:
        named = "; ".join(f"{e}: {', '.join(str(p) for p in g)}" for e, g in gaps.items())
        raise AnalysisError(f"missing months in series ({named})")

    table = []
    events = {}
    for econ in sorted(by_econ):
        ps = sorted(by_econ[econ], key=lambda p: p.period)
        rolled = {p.period: p.value for p in rolling_average(ps, args.window)}
        for p in ps:
            table.append({"economy": econ, "period": str(p.period), "value": p.value,
                          "rolling": rolled.get(p.period)})
        if args.event:
            d = event_delta(ps, Period.parse(args.event), args.pre, args.post)
            events[econ] = _rounded(asdict(d))
    out = Path(args.out or (cfg.output_dir if cfg else "."))
    fmt = args.format or (cfg.format if cfg else "csv")
    write_rows(out / "series", fmt, ["economy", "period", "value", "rolling"], table, h)
    if args.event:
        write_json(out / "report.json", {"window": args.window, "event": args.event, "pre_months": args.pre,
                                         "post_months": args.post, "event_delta": events}, h)
        for econ, d in events.items():
            rel = "n/a" if d["rel_change"] is None else f"{d['rel_change']:+.1%}"
            print(f"{econ}: pre={d['pre_mean']:.4f} post={d['post_mean']:.4f} rel={rel}")
    print(f"wrote {len(table)} series rows to {out}")
    return EXIT_OK


def cmd_synthcheck(args: argparse.Namespace) -> int:
    spec = PopulationSpec.load(args.spec) if args.spec else PopulationSpec.conforming()
    report = end_to_end_check(spec, args.tolerance, workers=args.workers)
    for r in report.rows:
        est = "   n/a" if r.estimate is None else f"{r.estimate:.4f}"
        err = "   n/a" if r.error is None else f"{100 * r.error:+.3f}pp"
        print(f"{r.economy}  truth={r.truth:.4f}  estimate={est}  error={err}")
    print(f"max |error| = {report.max_abs_error_pp:.3f} pp (tolerance {report.tolerance_pp} pp), "
          f"positive errors {report.positive_errors}/{len(report.rows)}, backend {report.backend}")
    if args.out:
        h = hashlib.sha256(json.dumps(spec.to_dict(), sort_keys=True).encode()).hexdigest()[:12]
        write_json(Path(args.out) / "synthcheck.json", report.to_dict(), h)
    if not report.passed:
        print("oracle mismatch", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aiusershare", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"aiusershare {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_opts(p: argparse.ArgumentParser, estimates: bool = False) -> None:
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--input-dir", dest="input_dir", help="directory with telemetry.csv etc.")
        p.add_argument("--period", help="YYYY-MM or YYYY-MM..YYYY-MM")
        p.add_argument("--mode", choices=["pooled", "latest"])
        p.add_argument("--out", help="output directory")
        p.add_argument("--format", choices=["csv", "json"])
        if estimates:
            p.add_argument("--estimates", help="read an estimates table instead of computing")

    p = sub.add_parser("compute", help="estimate AI User Share per economy")
    run_opts(p)
    p.set_defaults(func=cmd_compute)

    p = sub.add_parser("rank", help="rank economies by AI User Share")
    run_opts(p, estimates=True)
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--tie-break", dest="tie_break", choices=["economy", "input"], default="economy")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("correlate", help="Spearman correlation and log-linear trend against GDP per capita")
    run_opts(p, estimates=True)
    p.add_argument("--against", choices=["gdp_per_capita", "internet_penetration"], default="gdp_per_capita")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("timeseries", help="rolling averages and event deltas")
    run_opts(p)
    p.add_argument("--series", help="read an economy,period,value table instead of computing")
    p.add_argument("--economies", help="comma-separated economy ids")
    p.add_argument("--window", type=int, default=3)
    p.add_argument("--event", help="event month YYYY-MM")
    p.add_argument("--pre", type=int, default=3)
    p.add_argument("--post", type=int, default=3)
    p.set_defaults(func=cmd_timeseries)

    p = sub.add_parser("synthcheck", help="validate the pipeline against a synthetic population")
    p.add_argument("--spec", help="population spec JSON (default: built-in conforming spec)")
    p.add_argument("--tolerance", type=float, default=1.5, help="max abs error in percentage points")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="write synthcheck.json here")
    p.set_defaults(func=cmd_synthcheck)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IngestError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (AnalysisError, EstimationError, AggregationError) as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    except AIUserShareError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS


if __name__ == "__main__":
    sys.exit(main())
