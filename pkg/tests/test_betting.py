import math
import statistics
from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cornerkick import betting, dcp
from cornerkick.betting import (
    BetDecision,
    CornerQuote,
    Selection,
    Strategy,
    backtest,
    decide,
    expected_value,
    over_under_probs,
    settle,
    sharpe,
)

D0 = date(2021, 1, 1)


def point_mass(k, size=30):
    p = np.zeros(size)
    p[k] = 1.0
    return p


def two_point(p_over, line=9.5):
    """pmf with mass p_over just above the line and the rest just below."""
    p = np.zeros(30)
    p[int(math.floor(line)) + 1] = p_over
    p[int(math.ceil(line)) - 1] = 1 - p_over
    return p


def quote(line=9.5, over=1.85, under=1.85, mid="m", day=D0):
    return CornerQuote(mid, line, over, under, day)


# -- probabilities and EV ----------------------------------------------------


def test_half_line_concentrated_above():
    assert over_under_probs(point_mass(10), 9.5) == (1.0, 0.0, 0.0)


def test_integer_line_push():
    assert over_under_probs(point_mass(10), 10) == (0.0, 0.0, 1.0)


def test_gp_survival_oracle():
    dist = dcp.DcpDistribution.geom_poisson(9.2, 0.9577)
    pmf = dcp.truncated_pmf(dist)
    p_over, p_under, p_push = over_under_probs(pmf, 9.5)
    assert p_push == 0.0
    assert p_over == pytest.approx(1.0 - dcp.cdf(dist, 9), abs=1e-10)
    assert p_under == pytest.approx(dcp.cdf(dist, 9), abs=1e-10)


@given(st.lists(st.floats(0, 1), min_size=5, max_size=40), st.integers(1, 30), st.booleans())
def test_ou_probs_partition(weights, k, half):
    w = np.array(weights)
    if w.sum() == 0:
        return
    pmf = w / w.sum()
    line = k + 0.5 if half else float(k)
    a, b, c = over_under_probs(pmf, line)
    assert a + b + c == pytest.approx(1.0, abs=1e-12)
    if half:
        assert c == 0.0


def test_ev_examples():
    assert expected_value(0.5, 0.0, 2.0) == 0.0
    assert expected_value(0.6, 0.0, 1.85) == pytest.approx(0.11, abs=1e-12)
    assert expected_value(0.5, 0.1, 2.0) == pytest.approx(0.1, abs=1e-12)


def test_ev_rejects_bad_probs():
    with pytest.raises(ValueError):
        expected_value(0.8, 0.3, 2.0)


# -- decisions ---------------------------------------------------------------


@pytest.mark.parametrize("p", [0.2, 0.45, 0.5, 0.62, 0.8])
@pytest.mark.parametrize("margin", [0.02, 0.076, 0.12])
def test_market_probabilities_no_bet(p, margin):
    q = quote(over=1 / (p * (1 + margin)), under=1 / ((1 - p) * (1 + margin)))
    d = decide(q, two_point(p))
    assert d.selection is Selection.NO_BET
    assert d.ev_over == pytest.approx(-margin / (1 + margin))
    assert d.ev_under == pytest.approx(-margin / (1 + margin))


def test_decide_over():
    d = decide(quote(), two_point(0.6))
    assert d.selection is Selection.OVER and d.stake == 100
    assert d.expected_value == pytest.approx(0.11)


def test_decide_tie_goes_over():
    d = decide(quote(over=2.2, under=2.2), two_point(0.5))
    assert d.selection is Selection.OVER
    assert d.ev_over == d.ev_under > 0


def test_decide_larger_ev_wins():
    d = decide(quote(over=2.2, under=2.6), two_point(0.5))
    assert d.selection is Selection.UNDER


def test_decision_invariant():
    with pytest.raises(ValueError):
        BetDecision(Selection.OVER, 100, 0.4, -0.1)


def test_quote_validation():
    with pytest.raises(ValueError):
        quote(line=9.25)
    with pytest.raises(ValueError):
        quote(over=1.0)


# -- settlement --------------------------------------------------------------


def bet(sel):
    return BetDecision(sel, 100.0, 0.6, 0.1)


def test_settle_examples():
    assert settle(bet(Selection.OVER), quote(), 10) == pytest.approx(85.0)
    assert settle(bet(Selection.UNDER), quote(), 10) == -100.0
    for sel in (Selection.OVER, Selection.UNDER):
        assert settle(bet(sel), quote(line=10), 10) == 0.0


@given(st.integers(0, 25), st.integers(1, 20))
def test_push_iff_hit(actual, line):
    for sel in (Selection.OVER, Selection.UNDER):
        assert (settle(bet(sel), quote(line=float(line)), actual) == 0.0) == (actual == line)


# -- Sharpe ------------------------------------------------------------------


def test_sharpe_constant_positive():
    assert sharpe([50.0, 50.0, 50.0]) == math.inf


def test_sharpe_alternating_zero():
    assert sharpe([100.0, -100.0] * 5) == 0.0


def test_sharpe_undefined():
    assert math.isnan(sharpe([10.0]))
    assert math.isnan(sharpe({}))


def test_sharpe_spreadsheet_oracle():
    rng = np.random.default_rng(11)
    daily = [float(x) for x in np.round(rng.normal(12, 180, 100), 2)]
    # the way one would lay it out in a sheet: AVERAGE, STDEV.S, SQRT
    avg = sum(daily) / len(daily)
    sd = math.sqrt(sum((x - avg) ** 2 for x in daily) / (len(daily) - 1))
    assert sharpe(daily) == pytest.approx(avg / sd * math.sqrt(364), rel=1e-12)
    assert sharpe(daily, numerator="total") == pytest.approx(sum(daily) / statistics.stdev(daily) * math.sqrt(364))


# -- backtest ----------------------------------------------------------------


def test_empty_backtest():
    s = backtest([], {}, {})
    assert (s.num_bets, s.total_profit, s.profit_pct) == (0, 0.0, 0.0)
    assert math.isnan(s.sharpe) and not s.sharpe_defined


def test_backtest_audit_completeness():
    quotes = [
        quote(mid="a", day=D0), quote(mid="b", day=D0), quote(mid="c", day=D0 + timedelta(1)),
        quote(mid="a", day=D0 + timedelta(2), line=11.5), quote(mid="d", day=D0 + timedelta(2)),
        quote(mid="e", day=D0 + timedelta(3)),
    ]
    preds = {"a": two_point(0.7), "b": two_point(0.5), "c": two_point(0.2), "e": two_point(0.6)}
    actuals = {"a": 12, "b": 3, "c": 5, "d": 9}
    s = backtest(quotes, preds, actuals)
    kinds = {(a.match_id, a.outcome, a.reason) for a in s.audit}
    assert len(s.audit) == len(quotes)
    assert ("a", "skip", "duplicate quote; first line kept") in kinds
    assert ("d", "skip", "no predictive") in kinds
    assert ("e", "skip", "no result") in kinds
    assert ("b", "no-bet", "") in kinds
    assert s.num_bets == 2
    assert s.total_profit == pytest.approx(85 + 85)  # a over wins (12 > 9.5), c under wins (5 < 9.5)
    assert s.profit_pct == s.total_profit / (100 * s.num_bets)
    for a in s.audit:
        if a.outcome == "no-bet":
            assert not math.isnan(a.ev_over) and not math.isnan(a.ev_under)


def test_blind_under_bets_everything():
    quotes = [quote(mid=str(i), day=D0 + timedelta(i // 3)) for i in range(9)]
    actuals = {str(i): i + 5 for i in range(9)}
    s = backtest(quotes, {}, actuals, Strategy.BLIND_UNDER)
    assert s.num_bets == 9
    assert all(b.selection is Selection.UNDER for b in s.bets)
    assert s.total_profit == pytest.approx(5 * 85 - 4 * 100)
    assert sum(s.daily_profits.values()) == pytest.approx(s.total_profit)
    assert len(s.daily_profits) == 3


def simulate_market(n, margin, seed, mispriced=0.0):
    rng = np.random.default_rng(seed)
    quotes, preds, actuals = [], {}, {}
    true_p = rng.uniform(0.35, 0.65, n)
    for i in range(n):
        p = true_p[i]
        priced = p
        if rng.random() < mispriced:
            priced = float(np.clip(p + rng.choice([-1, 1]) * 0.15, 0.05, 0.95))
        quotes.append(CornerQuote(str(i), 9.5, 1 / (priced * (1 + margin)), 1 / ((1 - priced) * (1 + margin)),
                                  D0 + timedelta(i // 30)))
        preds[str(i)] = two_point(p)
        actuals[str(i)] = 10 if rng.random() < p else 9
    return quotes, preds, actuals


def test_blind_under_margin_free_zero_mean():
    quotes, preds, actuals = simulate_market(20_000, 0.0, 5)
    s = backtest(quotes, preds, actuals, Strategy.BLIND_UNDER)
    profits = np.array([b.profit for b in s.bets])
    se = profits.std(ddof=1) / math.sqrt(profits.size)
    assert abs(profits.mean()) < 3 * se


def test_accounting_identity_random_market():
    quotes, preds, actuals = simulate_market(2000, 0.05, 9, mispriced=0.3)
    s = backtest(quotes, preds, actuals)
    assert s.total_profit == math.fsum(b.profit for b in s.bets)
    assert s.profit_pct == s.total_profit / (100 * s.num_bets)
    assert all(b.expected_value > 0 for b in s.bets)
    assert sum(s.daily_profits.values()) == pytest.approx(s.total_profit, abs=1e-8)


def test_format_summary():
    s = backtest([quote()], {"m": two_point(0.6)}, {"m": 11})
    text = betting.format_summary([("NB", s)])
    assert "# of bets" in text and "Sharpe" in text
