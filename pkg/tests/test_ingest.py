from pathlib import Path

import pytest

from aiusershare.ingest import (
    CONTEXT, MARKET, POPULATION, TELEMETRY, join_snapshots, load_inputs, load_regions, load_table,
)
from aiusershare.model import IngestError, Period

from conftest import FIXTURE_ECONOMIES, FIXTURE_PERIODS, write_fixture

HEADER = "economy,period,active_users,ai_users,opt_in_rate,mad\n"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_well_formed_row(tmp_path):
    rows, rep = load_table(write(tmp_path, "t.csv", HEADER + "ZMB,2025-01,120000,14400,0.62,300000\n"), TELEMETRY)
    assert rep.rows_read == 1 and rep.rows_accepted == 1 and rep.errors == []
    assert rows[0]["economy"] == "ZMB" and rows[0]["period"] == Period(2025, 1)
    assert rows[0]["opt_in_rate"] == 0.62 and rows[0]["mad"] == 300000


def test_range_breach(tmp_path):
    rows, rep = load_table(write(tmp_path, "t.csv", HEADER + "ZMB,2025-01,120000,14400,1.62,300000\n"), TELEMETRY)
    assert rows == [] and rep.rows_accepted == 0
    assert [e.message for e in rep.errors] == ["opt_in_rate out of [0,1] at line 2"]
    assert rep.errors[0].line == 2 and rep.errors[0].file == "t.csv"


def test_duplicate_key_first_wins(tmp_path):
    text = HEADER + "ZMB,2025-01,120000,14400,0.62,300000\nZMB,2025-01,1,1,0.5,5\n"
    rows, rep = load_table(write(tmp_path, "t.csv", text), TELEMETRY)
    assert len(rows) == 1 and rows[0]["active_users"] == 120000
    assert len(rep.errors) == 1 and "duplicate key" in rep.errors[0].message and rep.errors[0].line == 3


def test_row_errors_continue_and_account(tmp_path):
    text = HEADER + "\n".join([
        "ZMB,2025-01,120000,14400,0.62,300000",
        "PAK,2025-1,1,1,0.5,5",
        "IND,2025-01,abc,1,0.5,5",
        "USA,2025-01,10,20,0.5,50",
        "GBR,2025-01,10,5,0.5",
        "FRA,2025-01,10,5,,50",
        "DEU,2025-01,100,5,0.5,50",
        "ESP,2025-01,100,5,0.5,500",
    ]) + "\n"
    rows, rep = load_table(write(tmp_path, "t.csv", text), TELEMETRY)
    assert [r["economy"] for r in rows] == ["ZMB", "ESP"]
    assert rep.rows_read == 8 and rep.rows_accepted + len(rep.errors) == rep.rows_read
    msgs = [e.message for e in rep.errors]
    assert "invalid period '2025-1' at line 3" in msgs
    assert "ai_users ≤ active_users violated at line 5" in msgs
    assert "expected 6 fields, got 5 at line 6" in msgs
    assert "opt_in_rate missing at line 7" in msgs
    assert "mad ≥ active_users violated at line 8" in msgs


def test_fatal_conditions(tmp_path):
    with pytest.raises(IngestError):
        load_table(tmp_path / "nope.csv", TELEMETRY)
    with pytest.raises(IngestError, match="missing columns"):
        load_table(write(tmp_path, "a.csv", "economy,period,active_users\nZMB,2025-01,1\n"), TELEMETRY)
    with pytest.raises(IngestError, match="duplicate column"):
        load_table(write(tmp_path, "b.csv", HEADER.strip() + ",mad\n"), TELEMETRY)
    with pytest.raises(IngestError, match="empty"):
        load_table(write(tmp_path, "c.csv", ""), TELEMETRY)


def test_extra_columns_noted_and_comments_skipped(tmp_path):
    text = "# exported\n" + HEADER.strip() + ",source\nZMB,2025-01,120000,14400,0.62,300000,x\n"
    rows, rep = load_table(write(tmp_path, "t.csv", text), TELEMETRY)
    assert len(rows) == 1 and rows[0]["_line"] == 3
    assert any("source" in n for n in rep.notes)


def test_optional_cells_are_absent_not_zero(tmp_path):
    text = "economy,period,internet_penetration,gdp_per_capita\nZMB,2025-01,,1200\nPAK,2025-01,0.3,\n"
    rows, rep = load_table(write(tmp_path, "c.csv", text), CONTEXT)
    assert rows[0]["internet_penetration"] is None and rows[1]["gdp_per_capita"] is None
    assert rep.errors == []


def test_annual_reference_forward_filled(tmp_path):
    text = "economy,period,working_age_pop,total_pop\nZMB,2025,11000000,20000000\nZMB,2025-03,11100000,20000000\n"
    rows, rep = load_table(write(tmp_path, "p.csv", text), POPULATION)
    assert len(rows) == 12
    by_p = {r["period"]: r["working_age_pop"] for r in rows}
    assert by_p[Period(2025, 1)] == 11_000_000 and by_p[Period(2025, 3)] == 11_100_000
    assert any("forward-filled to 11 months" in n for n in rep.notes)
    _, rep2 = load_table(write(tmp_path, "t.csv", HEADER + "ZMB,2025,1,1,0.5,5\n"), TELEMETRY)
    assert "annual period" in rep2.errors[0].message


def _rows(economies, per=Period(2025, 1)):
    tel = [dict(economy=e, period=per, active_users=100, ai_users=10, opt_in_rate=0.5, mad=300, _line=i + 2)
           for i, e in enumerate(economies)]
    return tel


def test_join_missing_reference():
    tel = _rows(["PAK", "ZMB"])
    mkt = [dict(economy="ZMB", period=Period(2025, 1), windows_market_share=0.6, mobile_desktop_ratio=1.0)]
    pop = [dict(economy="ZMB", period=Period(2025, 1), working_age_pop=1000, total_pop=2000)]
    snaps, rep = join_snapshots(tel, mkt, pop)
    assert [s.economy for s in snaps[Period(2025, 1)]] == ["ZMB"]
    assert rep.excluded == [("PAK", "2025-01", "missing reference: market, population")]


def test_join_period_mismatch_excluded():
    tel = _rows(["ZMB"], Period(2025, 2)) + _rows(["ZMB"])
    mkt = [dict(economy="ZMB", period=Period(2025, 1), windows_market_share=0.6, mobile_desktop_ratio=1.0)]
    pop = [dict(economy="ZMB", period=Period(2025, 1), working_age_pop=1000, total_pop=2000)]
    snaps, rep = join_snapshots(tel, mkt, pop)
    assert list(snaps) == [Period(2025, 1)]
    assert rep.excluded[0][:2] == ("ZMB", "2025-02")
    assert len(tel) == sum(len(v) for v in snaps.values()) + len(rep.excluded)


def test_join_empty_requested_period_is_fatal():
    with pytest.raises(IngestError, match="2025-05"):
        join_snapshots(_rows(["ZMB"]), [], [], periods=[Period(2025, 5)])


def test_full_fixture_joins_to_60(tmp_path):
    d = write_fixture(tmp_path)
    inputs = load_inputs(d)
    assert sum(len(v) for v in inputs.snapshots.values()) == 60
    assert inputs.report.errors == [] and inputs.report.excluded == []
    assert inputs.report.coverage == {p: 20 for p in FIXTURE_PERIODS}
    assert [s.economy for s in inputs.snapshots[Period(2025, 2)]] == sorted(FIXTURE_ECONOMIES)


def test_join_is_deterministic_under_row_order(tmp_path):
    d1 = write_fixture(tmp_path / "a")
    d2 = write_fixture(tmp_path / "b")
    for name in ("telemetry.csv", "market.csv"):
        lines = (d2 / name).read_text().splitlines()
        (d2 / name).write_text("\n".join([lines[0]] + lines[:0:-1]) + "\n")
    a, b = load_inputs(d1), load_inputs(d2)
    assert a.snapshots == b.snapshots
    assert a.report.coverage == b.report.coverage


def test_regions_file(tmp_path):
    p = write(tmp_path, "regions.csv",
              "region,name,member\nR-EAF,East Africa,ETH\nR-EAF,East Africa,SOM\nR-EAF,East Africa,BDI\n")
    regions, _ = load_regions(p)
    assert regions[0].region == "R-EAF" and regions[0].members == ("BDI", "ETH", "SOM")
    bad = write(tmp_path, "r2.csv", "region,name,member\nEAF,East Africa,ETH\n")
    _, rep = load_table(bad, load_regions.__globals__["REGIONS"])
    assert "invalid region id" in rep.errors[0].message
    single = write(tmp_path, "r3.csv", "region,name,member\nR-EAF,East Africa,ETH\n")
    with pytest.raises(IngestError, match="at least 2"):
        load_regions(single)


def test_missing_telemetry_file(tmp_path):
    with pytest.raises(IngestError, match="no telemetry rows"):
        load_inputs(tmp_path)
