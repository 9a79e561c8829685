import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aiusershare.estimator import (
    EstimatorConfig, adjust_opt_in, combine_shares, connected_share, device_ratio, device_scaling,
    estimate, global_context, mobile_factor, percentile, ratio_context, raw_usage_share, union_share,
    with_population,
)
from aiusershare.model import ConfigError, EstimationError, GlobalContext, Imputation, Period, RegionDef

from conftest import snap

unit = st.floats(0.0, 1.0, allow_nan=False)


def ctx(alpha_bar=0.5, gamma_bar=0.2, rmin=0.05, rp90=1.25, regional=None, members=None, mob=1.0):
    return GlobalContext(alpha_bar, gamma_bar, rmin, rp90, regional or {}, members or {}, mob)


def test_raw_usage_share():
    assert raw_usage_share(snap(ai_users=14_400, active_users=120_000).telemetry) == pytest.approx(0.12)
    assert raw_usage_share(snap(ai_users=0, active_users=5_000, mad=5_000).telemetry) == 0.0
    assert raw_usage_share(snap(ai_users=5_000, active_users=5_000, mad=5_000).telemetry) == 1.0
    with pytest.raises(EstimationError, match="no qualifying users"):
        raw_usage_share(snap(ai_users=0, active_users=0).telemetry)


def test_opt_in_blend_examples():
    c = ctx(alpha_bar=0.5, gamma_bar=0.2)
    assert adjust_opt_in(0.2, 0.10, c) == pytest.approx(0.16, abs=1e-15)
    assert adjust_opt_in(0.5, 0.10, c) == 0.10
    assert adjust_opt_in(0.0, 0.10, c) == 0.20
    assert adjust_opt_in(0.9, 0.10, c) == 0.10
    with pytest.raises(ConfigError, match="alpha_bar"):
        adjust_opt_in(0.2, 0.1, _zero_alpha_ctx())


def _zero_alpha_ctx():
    # GlobalContext rejects alpha_bar = 0 itself, so build one around its validation
    c = object.__new__(GlobalContext)
    for k, v in dict(alpha_bar=0.0, gamma_bar=0.2, ratio_min=0.0, ratio_p90=1.0, regional_mobile_avg={},
                     member_region={}, global_mobile_avg=1.0).items():
        object.__setattr__(c, k, v)
    return c


@given(alpha=unit, gamma=unit, abar=st.floats(1e-6, 1.0), gbar=unit)
def test_blend_betweenness(alpha, gamma, abar, gbar):
    out = adjust_opt_in(alpha, gamma, ctx(alpha_bar=abar, gamma_bar=gbar))
    assert min(gamma, gbar) <= out <= max(gamma, gbar)
    if alpha >= abar:
        assert out == gamma


def test_device_ratio():
    assert device_ratio(snap(mad=300_000, windows_market_share=0.6, working_age_pop=1_000_000)) == pytest.approx(0.5)
    assert device_ratio(snap(mad=0, active_users=0, ai_users=0)) == 0.0
    assert device_ratio(snap(mad=1_200_000, windows_market_share=0.6)) == pytest.approx(2.0)
    with pytest.raises(EstimationError, match="windows_market_share"):
        device_ratio(snap(windows_market_share=0.0))
    with pytest.raises(EstimationError, match="working_age_pop"):
        device_ratio(snap(working_age_pop=0))


def _percentile_oracle(values, q):
    # closest-ranks interpolation written out independently
    xs = sorted(values)
    pos = Fraction(q).limit_denominator(10**9) * (len(xs) - 1)
    k = int(pos)
    if k + 1 >= len(xs):
        return xs[-1]
    return xs[k] + float(pos - k) * (xs[k + 1] - xs[k])


def test_ratio_context_example():
    ratios = {f"E{i:02d}": i / 10 for i in range(1, 11)}
    rmin, rp = ratio_context(ratios)
    assert rmin == 0.1
    assert rp == pytest.approx(0.91, abs=1e-15)


def test_ratio_context_errors():
    with pytest.raises(EstimationError, match="degenerate ratio distribution"):
        ratio_context({f"E{i}": 0.4 for i in range(12)})
    with pytest.raises(EstimationError, match="insufficient cross-section"):
        ratio_context({f"E{i}": i / 10 for i in range(9)})


def test_percentile_against_oracle_and_numpy():
    import numpy as np
    rng = random.Random(3)
    for _ in range(500):
        xs = [rng.random() * 3 for _ in range(rng.randint(10, 60))]
        assert percentile(xs, 0.9) == pytest.approx(_percentile_oracle(xs, 0.9), abs=1e-14)
        assert percentile(xs, 0.9) == pytest.approx(float(np.percentile(xs, 90)), abs=1e-14)
    xs = list(range(1, 11))
    assert percentile(xs, 0.9, "nearest") == 9


def test_device_scaling_examples():
    c = ctx(rmin=0.05, rp90=1.25)
    assert device_scaling(0.05, c) == 0.1
    assert device_scaling(1.25, c) == 1.0
    assert device_scaling(0.65, c) == pytest.approx(0.55, abs=1e-15)
    assert device_scaling(2.5, c) == 1.0
    assert device_scaling(0.0, c) == 0.1


def test_mobile_factor():
    assert mobile_factor(2.0, 1.0) == 1.0
    assert mobile_factor(1.5, 1.0) == 1.5
    assert mobile_factor(0.0, 1.0) == 0.0
    assert mobile_factor(1.8, 1.0) == 1.8


def test_combine_examples():
    m, t = combine_shares(0.2, 1.5)
    assert m == pytest.approx(0.3) and t == pytest.approx(0.44)
    assert combine_shares(0.0, 3.0) == (0.0, 0.0)
    assert combine_shares(0.5, 0.0) == (0.0, 0.5)
    m, t = combine_shares(0.8, 2.0)
    assert m == 1.0 and t == 1.0


@given(d=unit, factor=st.floats(0.0, 5.0))
def test_union_identity(d, factor):
    m, t = combine_shares(d, factor)
    exact = 1 - (1 - Fraction(d)) * (1 - Fraction(m))
    assert abs(Fraction(t) - exact) <= Fraction(math.ulp(float(exact)))
    assert 0.0 <= t <= 1.0
    assert t <= d + m + 1e-16


def test_union_share_single_rounding():
    assert union_share(0.1, 0.2) == float(Fraction(0.1) + Fraction(0.2) - Fraction(0.1) * Fraction(0.2))


def test_chained_estimate():
    # gamma 0.12 above average opt-in; ratio 0.65 -> scaling 0.55; mobile 1.5 under a 1.0 regional average
    s = snap(economy="ETH", ai_users=14_400, active_users=120_000, opt_in_rate=0.9, mad=325_000,
             windows_market_share=0.5, mobile_desktop_ratio=1.5, working_age_pop=1_000_000,
             total_pop=3_000_000, internet_penetration=0.5)
    c = ctx(alpha_bar=0.5, gamma_bar=0.2, rmin=0.05, rp90=1.25, regional={"R-EAF": 1.0},
            members={"ETH": "R-EAF"})
    e = estimate(s, c)
    assert e.gamma_adjusted == pytest.approx(0.12)
    assert e.device_scaling == pytest.approx(0.55)
    assert e.desktop_share == pytest.approx(0.066)
    assert e.mobile_share == pytest.approx(0.099)
    assert e.ai_user_share == pytest.approx(0.066 + 0.099 - 0.066 * 0.099)
    assert round(e.ai_user_share, 4) == 0.1585
    assert e.naive_product == pytest.approx(0.12 * 0.55 * 1.5)
    assert e.ai_users_abs == round(e.ai_user_share * 1_000_000)
    assert e.connected_share == pytest.approx(e.ai_user_share / 0.5)
    assert e.imputation is Imputation.DIRECT
    assert not e.scaling_clamped and not e.mobile_capped


def test_mobile_outlier_replaced_by_regional_average():
    s = snap(economy="ETH", opt_in_rate=0.9, mobile_desktop_ratio=2.0, total_pop=3_000_000)
    e = estimate(s, ctx(regional={"R-EAF": 1.0}, members={"ETH": "R-EAF"}))
    assert e.mobile_factor == 1.0 and e.mobile_capped


def test_errors_carry_economy_and_period():
    with pytest.raises(EstimationError, match="ZMB 2025-01"):
        estimate(snap(windows_market_share=0.0), ctx())


def test_population_and_connected_examples():
    e = estimate(snap(opt_in_rate=0.9), ctx())
    e = with_population(type(e)(**{**e.__dict__, "ai_user_share": 0.20}), 980_000_000)
    assert e.ai_users_abs == 196_000_000
    v, clamped = connected_share(0.12, 0.353)
    assert round(v, 2) == 0.34 and not clamped
    assert connected_share(0.10, 0.05) == (1.0, True)
    assert connected_share(0.10, None) == (None, False)


def _cross_section(n=12, seed=0):
    rng = random.Random(seed)
    out = []
    for i in range(n):
        econ = "".join(chr(65 + (i * 7 + k) % 26) for k in range(3))
        active = rng.randint(6_000, 500_000)
        out.append(snap(economy=econ, active_users=active, ai_users=rng.randint(0, active),
                        opt_in_rate=rng.random(), mad=active * rng.randint(1, 10),
                        windows_market_share=rng.uniform(0.2, 0.95),
                        mobile_desktop_ratio=rng.uniform(0.3, 2.0),
                        working_age_pop=rng.randint(1_000_000, 50_000_000), total_pop=60_000_000))
    return out


def test_global_context_pooled_and_unweighted():
    snaps = _cross_section()
    c = global_context(snaps)
    tot = sum(s.telemetry.active_users for s in snaps)
    assert c.gamma_bar == pytest.approx(sum(s.telemetry.ai_users for s in snaps) / tot, rel=1e-15)
    assert c.alpha_bar == pytest.approx(sum(s.telemetry.opt_in_rate * s.telemetry.active_users
                                            for s in snaps) / tot, rel=1e-14)
    u = global_context(snaps, cfg=EstimatorConfig(global_average="unweighted"))
    assert u.alpha_bar == pytest.approx(sum(s.telemetry.opt_in_rate for s in snaps) / len(snaps))
    assert global_context(list(reversed(snaps))) == c


def test_global_context_regional_mobile_average():
    snaps = _cross_section()
    r = RegionDef("R-ONE", "One", (snaps[0].economy, snaps[1].economy))
    c = global_context(snaps, [r])
    want = (snaps[0].reference.mobile_desktop_ratio + snaps[1].reference.mobile_desktop_ratio) / 2
    assert c.regional_mobile_avg["R-ONE"] == pytest.approx(want)
    assert c.mobile_average_for(snaps[5].economy) == pytest.approx(
        sum(s.reference.mobile_desktop_ratio for s in snaps) / len(snaps))


@settings(max_examples=50)
@given(seed=st.integers(0, 10**6), bump=st.integers(1, 1000))
def test_chain_monotone_in_ai_users(seed, bump):
    snaps = _cross_section(seed=seed)
    c = global_context(snaps)
    s = snaps[3]
    t = s.telemetry
    if t.ai_users + bump > t.active_users:
        return
    more = type(s)(type(t)(t.economy, t.period, t.active_users, t.ai_users + bump, t.opt_in_rate, t.mad),
                   s.reference)
    assert estimate(more, c).ai_user_share >= estimate(s, c).ai_user_share


@given(seed=st.integers(0, 10**6), k=st.integers(2, 50))
def test_gamma_scale_invariance(seed, k):
    snaps = _cross_section(seed=seed)
    c = global_context(snaps)
    s = snaps[0]
    t = s.telemetry
    scaled = type(s)(type(t)(t.economy, t.period, t.active_users * k, t.ai_users * k, t.opt_in_rate,
                             t.mad * k), s.reference)
    a, b = estimate(s, c), estimate(scaled, c)
    assert a.gamma_raw == b.gamma_raw


def test_config_validation():
    with pytest.raises(ConfigError, match="scaling_floor \\+ scaling_span"):
        EstimatorConfig(scaling_floor=0.2, scaling_span=0.9)
    with pytest.raises(ConfigError):
        EstimatorConfig(percentile_cap=0.5)
    with pytest.raises(ConfigError):
        EstimatorConfig(global_average="median")
    EstimatorConfig(scaling_floor=0.1, scaling_span=0.9)
