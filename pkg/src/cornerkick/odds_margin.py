"""Margin removal: decimal odds to implied probabilities.

Four methods are provided (multiplicative, odds ratio, Shin and power) plus
the payout rate of a book and the logarithmic score used to compare them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import optimize

SUM_TOL = 1e-10
SHIN_TOL = 1e-12
SHIN_MAX_ITER = 10_000


class BookError(ValueError):
    """Odds vector cannot describe a book (fewer than two outcomes, odds <= 1)."""


class SolverError(RuntimeError):
    def __init__(self, message: str, last_iterate: float | None = None) -> None:
        super().__init__(message)
        self.last_iterate = last_iterate


class Method(str, Enum):
    MULTIPLICATIVE = "mult"
    ODDS_RATIO = "or"
    SHIN = "shin"
    POWER = "power"


@dataclass(frozen=True)
class OddsBook:
    odds: tuple[float, ...]

    def __post_init__(self) -> None:
        odds = tuple(float(o) for o in self.odds)
        if len(odds) < 2:
            raise BookError(f"a book needs at least two outcomes, got {len(odds)}")
        if not all(math.isfinite(o) and o > 1.0 for o in odds):
            raise BookError(f"decimal odds must be finite and > 1, got {odds}")
        object.__setattr__(self, "odds", odds)

    @property
    def inverse(self) -> np.ndarray:
        return 1.0 / np.asarray(self.odds)

    @property
    def booksum(self) -> float:
        return float(self.inverse.sum())

    def __len__(self) -> int:
        return len(self.odds)


@dataclass(frozen=True)
class ImpliedProbs:
    """Margin-free probabilities.

    ``parameter`` is the method's fitted constant: the odds ratio ``c`` in
    ``p = pi / (c + pi - c pi)`` (so ``c = pi (1 - p) / (p (1 - pi))``), Shin's
    insider share z, or the power k in ``p = pi**(1/k)``; 1.0 for the
    multiplicative method.
    """

    probs: np.ndarray
    method: Method
    solver_residual: float
    parameter: float = 1.0


def _as_book(book: OddsBook | Sequence[float]) -> OddsBook:
    return book if isinstance(book, OddsBook) else OddsBook(tuple(book))


def payout_rate(book: OddsBook | Sequence[float]) -> float:
    return 1.0 / _as_book(book).booksum


def multiplicative(book: OddsBook | Sequence[float]) -> ImpliedProbs:
    book = _as_book(book)
    pi = book.inverse
    probs = pi / pi.sum()
    return ImpliedProbs(probs, Method.MULTIPLICATIVE, float(probs.sum() - 1.0))


def _odds_ratio_probs(pi: np.ndarray, ratio: float) -> np.ndarray:
    return pi / (ratio + pi - ratio * pi)


def odds_ratio(book: OddsBook | Sequence[float]) -> ImpliedProbs:
    book = _as_book(book)
    pi = book.inverse

    def excess(ratio: float) -> float:
        return float(_odds_ratio_probs(pi, ratio).sum() - 1.0)

    lo, hi = 1e-6, 1e6
    if excess(lo) * excess(hi) > 0:
        raise SolverError(f"odds ratio root not bracketed in [{lo}, {hi}]")
    ratio = optimize.brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    probs = _odds_ratio_probs(pi, ratio)
    return ImpliedProbs(probs, Method.ODDS_RATIO, float(probs.sum() - 1.0), ratio)


def shin_probs(pi: np.ndarray, z: float) -> np.ndarray:
    booksum = pi.sum()
    return (np.sqrt(z * z + 4.0 * (1.0 - z) * pi**2 / booksum) - z) / (2.0 * (1.0 - z))


def shin_two_outcome_z(pi: np.ndarray) -> float:
    """Closed-form insider share for a two-outcome book."""
    plus = pi[0] + pi[1]
    minus = pi[0] - pi[1]
    return float((plus - 1.0) * (minus**2 - plus) / (plus * (minus**2 - 1.0)))


def shin(book: OddsBook | Sequence[float]) -> ImpliedProbs:
    book = _as_book(book)
    pi = book.inverse
    n = len(book)
    if n == 2:
        z = shin_two_outcome_z(pi)
    else:
        booksum = pi.sum()
        z = 0.0
        for _ in range(SHIN_MAX_ITER):
            z_next = (np.sqrt(z * z + 4.0 * (1.0 - z) * pi**2 / booksum).sum() - 2.0) / (n - 2)
            if abs(z_next - z) < SHIN_TOL:
                z = float(z_next)
                break
            z = float(z_next)
        else:
            raise SolverError(f"Shin iteration did not converge in {SHIN_MAX_ITER} steps", last_iterate=z)
    probs = shin_probs(pi, z)
    return ImpliedProbs(probs, Method.SHIN, float(probs.sum() - 1.0), z)


def power(book: OddsBook | Sequence[float]) -> ImpliedProbs:
    book = _as_book(book)
    log_pi = np.log(book.inverse)

    # solve on the exponent e = 1/k; e >= 1 whenever booksum >= 1, the lower
    # end admits underround books and fair books off by rounding
    def excess(e: float) -> float:
        return float(np.exp(e * log_pi).sum() - 1.0)

    lo, hi = 0.1, 10.0
    if excess(lo) * excess(hi) > 0:
        raise SolverError(f"power exponent root not bracketed in [{lo}, {hi}]")
    e = optimize.brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    probs = np.exp(e * log_pi)
    return ImpliedProbs(probs, Method.POWER, float(probs.sum() - 1.0), 1.0 / e)


_DISPATCH = {
    Method.MULTIPLICATIVE: multiplicative,
    Method.ODDS_RATIO: odds_ratio,
    Method.SHIN: shin,
    Method.POWER: power,
}


def implied(book: OddsBook | Sequence[float], method: Method | str) -> ImpliedProbs:
    return _DISPATCH[Method(method)](book)


def neg_log_score(probs: Sequence[Sequence[float]], outcomes: Sequence[int]) -> float:
    """Total negative log probability of the realised outcomes.

    Lower is better. A zero probability on a realised outcome gives ``inf``.
    """
    if len(probs) != len(outcomes):
        raise ValueError("probs and outcomes must align")
    total = 0.0
    for p, k in zip(probs, outcomes):
        if not 0 <= k < len(p):
            raise IndexError(f"outcome index {k} outside event with {len(p)} outcomes")
        pk = float(p[k])
        if pk <= 0.0:
            return math.inf
        total -= math.log(pk)
    return total
