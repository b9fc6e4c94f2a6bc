"""Expected-value betting on corner over/under markets, with settlement and Sharpe.

Stakes are flat (100 per bet). Integer lines can push, which refunds the stake.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

STAKE = 100.0
TRADE_DAYS = 364


class Selection(str, Enum):
    OVER = "Over"
    UNDER = "Under"
    NO_BET = "NoBet"


class Strategy(str, Enum):
    MODEL_EV = "ev"
    BLIND_UNDER = "blind-under"


@dataclass(frozen=True)
class CornerQuote:
    match_id: str
    line: float
    over_odds: float
    under_odds: float
    kickoff_date: date

    def __post_init__(self) -> None:
        if not self.line > 0 or (2 * self.line) != int(2 * self.line):
            raise ValueError(f"line must be a positive integer or half-integer, got {self.line}")
        if not (self.over_odds > 1 and self.under_odds > 1):
            raise ValueError("odds must exceed 1")

    @property
    def integer_line(self) -> bool:
        return float(self.line).is_integer()


@dataclass(frozen=True)
class BetDecision:
    selection: Selection
    stake: float
    model_prob: float
    expected_value: float
    ev_over: float = math.nan
    ev_under: float = math.nan
    forced: bool = False  # staked by rule rather than by positive EV

    def __post_init__(self) -> None:
        if self.selection is not Selection.NO_BET and not self.forced and not self.expected_value > 0:
            raise ValueError("a model bet needs positive expected value")
        if self.selection is Selection.NO_BET and self.stake != 0:
            raise ValueError("NoBet carries no stake")


def over_under_probs(pmf: np.ndarray, line: float) -> tuple[float, float, float]:
    """(p_over, p_under, p_push) for a pmf over counts 0..len(pmf)-1."""
    pmf = np.asarray(pmf, dtype=float)
    counts = np.arange(pmf.size)
    p_over = float(pmf[counts > line].sum())
    p_under = float(pmf[counts < line].sum())
    p_push = float(pmf[counts == line].sum()) if float(line).is_integer() else 0.0
    return p_over, p_under, p_push


def expected_value(p_win: float, p_push: float, odds: float) -> float:
    """Expected profit per unit stake; a push returns the stake."""
    if p_win < 0 or p_push < 0 or p_win + p_push > 1 + 1e-12:
        raise ValueError("invalid probabilities")
    return p_win * (odds - 1.0) - (1.0 - p_win - p_push)


def decide(quote: CornerQuote, predictive: np.ndarray, stake: float = STAKE) -> BetDecision:
    p_over, p_under, p_push = over_under_probs(predictive, quote.line)
    ev_over = expected_value(p_over, p_push, quote.over_odds)
    ev_under = expected_value(p_under, p_push, quote.under_odds)
    if ev_over <= 0 and ev_under <= 0:
        return BetDecision(Selection.NO_BET, 0.0, p_over, max(ev_over, ev_under), ev_over, ev_under)
    if ev_over >= ev_under:  # ties go to Over
        return BetDecision(Selection.OVER, stake, p_over, ev_over, ev_over, ev_under)
    return BetDecision(Selection.UNDER, stake, p_under, ev_under, ev_over, ev_under)


def settle(decision: BetDecision, quote: CornerQuote, actual_corners: int) -> float:
    if decision.selection is Selection.NO_BET:
        raise ValueError("nothing to settle on NoBet")
    if quote.integer_line and actual_corners == quote.line:
        return 0.0
    if decision.selection is Selection.OVER:
        won, odds = actual_corners > quote.line, quote.over_odds
    else:
        won, odds = actual_corners < quote.line, quote.under_odds
    return decision.stake * (odds - 1.0) if won else -decision.stake


def sharpe(daily_profits: Mapping[date, float] | Sequence[float], trade_days: int = TRADE_DAYS,
           numerator: str = "mean") -> float:
    """Annualised Sharpe ratio of daily profits over days that had bets.

    ``numerator="total"`` uses the summed profit instead of the mean, the other
    reading of "aggregated daily profit". Returns nan with fewer than two days
    and a signed infinity when every day has the same nonzero profit.
    """
    values = np.asarray(list(daily_profits.values()) if isinstance(daily_profits, Mapping) else daily_profits,
                        dtype=float)
    if values.size < 2:
        return math.nan
    if numerator not in ("mean", "total"):
        raise ValueError("numerator must be 'mean' or 'total'")
    top = values.mean() if numerator == "mean" else values.sum()
    sd = values.std(ddof=1)
    if sd == 0:
        return math.nan if top == 0 else math.copysign(math.inf, top)
    return float(top / sd * math.sqrt(trade_days))


@dataclass(frozen=True)
class BetRecord:
    match_id: str
    kickoff_date: date
    selection: Selection
    line: float
    odds: float
    stake: float
    model_prob: float
    expected_value: float
    actual_corners: int
    profit: float


@dataclass(frozen=True)
class AuditRecord:
    match_id: str
    outcome: str  # "bet", "no-bet" or "skip"
    reason: str = ""
    ev_over: float = math.nan
    ev_under: float = math.nan


@dataclass
class LedgerSummary:
    num_bets: int
    total_profit: float
    profit_pct: float
    sharpe: float
    daily_profits: dict[date, float]
    bets: list[BetRecord] = field(default_factory=list)
    audit: list[AuditRecord] = field(default_factory=list)

    @property
    def sharpe_defined(self) -> bool:
        return len(self.daily_profits) >= 2


def backtest(
    quotes: Iterable[CornerQuote],
    predictives: Mapping[str, np.ndarray],
    actuals: Mapping[str, int],
    strategy: Strategy | str = Strategy.MODEL_EV,
    stake: float = STAKE,
    trade_days: int = TRADE_DAYS,
    sharpe_numerator: str = "mean",
) -> LedgerSummary:
    """Run a strategy over quotes in kickoff order.

    Every quote ends in exactly one audit record: a bet, a no-bet with both
    EVs, or a skip (duplicate quote, missing predictive, missing result).
    """
    strategy = Strategy(strategy)
    seen: set[str] = set()
    bets: list[BetRecord] = []
    audit: list[AuditRecord] = []
    by_day: dict[date, list[float]] = OrderedDict()
    for q in sorted(quotes, key=lambda q: q.kickoff_date):
        if q.match_id in seen:
            audit.append(AuditRecord(q.match_id, "skip", "duplicate quote; first line kept"))
            continue
        seen.add(q.match_id)
        if q.match_id not in actuals:
            audit.append(AuditRecord(q.match_id, "skip", "no result"))
            continue
        pmf = predictives.get(q.match_id)
        if strategy is Strategy.MODEL_EV:
            if pmf is None:
                audit.append(AuditRecord(q.match_id, "skip", "no predictive"))
                continue
            decision = decide(q, pmf, stake)
        else:
            p_under, ev_under = math.nan, math.nan
            if pmf is not None:
                _, p_under, p_push = over_under_probs(pmf, q.line)
                ev_under = expected_value(p_under, p_push, q.under_odds)
            decision = BetDecision(Selection.UNDER, stake, p_under, ev_under, ev_under=ev_under, forced=True)
        if decision.selection is Selection.NO_BET:
            audit.append(AuditRecord(q.match_id, "no-bet", "", decision.ev_over, decision.ev_under))
            continue
        actual = int(actuals[q.match_id])
        profit = settle(decision, q, actual)
        odds = q.over_odds if decision.selection is Selection.OVER else q.under_odds
        bets.append(BetRecord(q.match_id, q.kickoff_date, decision.selection, q.line, odds, decision.stake,
                              decision.model_prob, decision.expected_value, actual, profit))
        audit.append(AuditRecord(q.match_id, "bet", decision.selection.value, decision.ev_over, decision.ev_under))
        by_day.setdefault(q.kickoff_date, []).append(profit)
    daily = {d: math.fsum(v) for d, v in by_day.items()}
    total = math.fsum(b.profit for b in bets)
    staked = math.fsum(b.stake for b in bets)
    pct = total / staked if staked else 0.0
    return LedgerSummary(len(bets), total, pct, sharpe(daily, trade_days, sharpe_numerator), daily, bets, audit)


def format_summary(rows: Sequence[tuple[str, LedgerSummary]]) -> str:
    lines = [f"{'strategy':<32}{'# of bets':>10}{'profit $':>12}{'profit %':>10}{'Sharpe':>9}"]
    for name, s in rows:
        lines.append(f"{name:<32}{s.num_bets:>10d}{s.total_profit:>12.0f}{100 * s.profit_pct:>9.2f}%{s.sharpe:>9.3f}")
    return "\n".join(lines)
