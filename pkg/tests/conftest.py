from pathlib import Path

import pytest

from aiusershare.ingest import CONTEXT, MARKET, POPULATION, REGIONS, TELEMETRY, write_table
from aiusershare.model import EconomySnapshot, Period, ReferenceRecord, TelemetryAggregate

DATA = Path(__file__).parent / "data"

FIXTURE_ECONOMIES = [
    "ARG", "AUS", "BRA", "CAN", "CHN", "DEU", "EGY", "ESP", "FRA", "GBR",
    "IDN", "IND", "JPN", "KEN", "MEX", "NGA", "PAK", "USA", "ZAF", "ZMB",
]
FIXTURE_PERIODS = [Period(2025, 1), Period(2025, 2), Period(2025, 3)]

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def snap(economy="ZMB", period=Period(2025, 1), active_users=120_000, ai_users=14_400, opt_in_rate=0.62,
         mad=300_000, windows_market_share=0.6, mobile_desktop_ratio=1.2, working_age_pop=1_000_000,
         total_pop=1_600_000, internet_penetration=None, gdp_per_capita=None) -> EconomySnapshot:
    return EconomySnapshot(
        TelemetryAggregate(economy, period, active_users, ai_users, opt_in_rate, mad),
        ReferenceRecord(economy, period, windows_market_share, mobile_desktop_ratio, working_age_pop,
                        total_pop, internet_penetration, gdp_per_capita),
    )


def fixture_tables(economies=FIXTURE_ECONOMIES, periods=FIXTURE_PERIODS):
    tel, mkt, pop, ctx = [], [], [], []
    for m, per in enumerate(periods):
        for i, econ in enumerate(economies):
            active = 100_000 + 10_000 * i
            tel.append(dict(economy=econ, period=per, active_users=active,
                            ai_users=round(active * (0.05 + 0.01 * i + 0.002 * m)),
                            opt_in_rate=round(0.4 + 0.02 * i, 4), mad=3 * active))
            mkt.append(dict(economy=econ, period=per, windows_market_share=round(0.5 + 0.02 * i, 4),
                            mobile_desktop_ratio=round(0.8 + 0.05 * i, 4)))
            wap = 10_000_000 + 1_000_000 * i
            pop.append(dict(economy=econ, period=per, working_age_pop=wap, total_pop=wap * 3 // 2))
            ctx.append(dict(economy=econ, period=per, internet_penetration=round(0.3 + 0.03 * i, 4),
                            gdp_per_capita=round(1000 * 1.25 ** i, 2)))
    return tel, mkt, pop, ctx


def write_fixture(directory, economies=FIXTURE_ECONOMIES, periods=FIXTURE_PERIODS, regions=None):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    tel, mkt, pop, ctx = fixture_tables(economies, periods)
    for schema, rows in ((TELEMETRY, tel), (MARKET, mkt), (POPULATION, pop), (CONTEXT, ctx)):
        write_table(d / f"{schema.name}.csv", schema, rows)
    if regions:
        rows = [dict(region=r.region, name=r.name, member=m) for r in regions for m in r.members]
        write_table(d / "regions.csv", REGIONS, rows)
    return d


@pytest.fixture
def fixture_dir(tmp_path):
    return write_fixture(tmp_path / "inputs")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
