"""Market-implied goal expectations from HAD and goals over/under odds.

An independent double Poisson model ``X1 ~ Poisson(lam_home)``,
``X2 ~ Poisson(lam_away)`` is fitted to three margin-free probabilities
(home win, draw, under the goals line) by bounded L-BFGS-B on the squared
probability loss. The fit is re-expressed as total goals ``tg = lam_home +
lam_away`` and supremacy ``sup = lam_home - lam_away``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize
from scipy.stats import poisson

from cornerkick import odds_margin

LOWER, UPPER = 0.05, 6.0
DEFAULT_LINE = 2.5
DEFAULT_TRUNCATION = 20
MASS_TOL = 1e-9
GRID_SIZE = 50


class TruncationError(ValueError):
    pass


class SolverError(RuntimeError):
    def __init__(self, message: str, best: tuple[float, float] | None = None, loss: float | None = None) -> None:
        super().__init__(message)
        self.best = best
        self.loss = loss


def _required_truncation(lam: float) -> int:
    n = DEFAULT_TRUNCATION
    while poisson.sf(n, lam) > MASS_TOL / 2:
        n += 1
    return n


@dataclass(frozen=True)
class DoublePoisson:
    lambda_home: float
    lambda_away: float
    goal_truncation: int | None = None

    def __post_init__(self) -> None:
        for lam in (self.lambda_home, self.lambda_away):
            if not LOWER <= lam <= UPPER:
                raise ValueError(f"goal rate {lam} outside [{LOWER}, {UPPER}]")

    @property
    def truncation(self) -> int:
        """Goals per team kept in probability sums.

        Defaults to 20, raised just enough to keep the joint mass deficit
        under 1e-9 for rates near the upper bound.
        """
        if self.goal_truncation is not None:
            return self.goal_truncation
        return max(_required_truncation(self.lambda_home), _required_truncation(self.lambda_away))


@dataclass(frozen=True)
class MarketTargets:
    p_home: float
    p_draw: float
    p_under: float
    goals_line: float = DEFAULT_LINE
    line_assumed: bool = False

    def __post_init__(self) -> None:
        for name in ("p_home", "p_draw", "p_under"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name}={v} must lie in (0, 1)")
        if not self.p_home + self.p_draw < 1.0:
            raise ValueError("p_home + p_draw must be < 1")
        if self.goals_line <= 0:
            raise ValueError("goals line must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.p_home, self.p_draw, self.p_under])


@dataclass(frozen=True)
class TgSup:
    tg: float
    sup: float

    def to_double_poisson(self) -> DoublePoisson:
        return DoublePoisson((self.tg + self.sup) / 2.0, (self.tg - self.sup) / 2.0)


@dataclass(frozen=True)
class GoalsFit:
    dp: DoublePoisson
    loss: float
    at_boundary: bool
    line_assumed: bool
    starts: tuple[tuple[float, float], ...] = field(default=())

    @property
    def tg_sup(self) -> TgSup:
        return tg_sup(self.dp)


def _masks(n: int, line: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x1 = np.arange(n + 1)[:, None]
    x2 = np.arange(n + 1)[None, :]
    return (x1 > x2).astype(float), (x1 == x2).astype(float), (x1 + x2 < line).astype(float)


def _pmf(lam: float, n: int) -> np.ndarray:
    return poisson.pmf(np.arange(n + 1), lam)


def model_probs(dp: DoublePoisson, line: float = DEFAULT_LINE) -> tuple[float, float, float]:
    """(home win, draw, under ``line``) probabilities of the double Poisson."""
    if line <= 0:
        raise ValueError("line must be positive")
    n = dp.truncation
    p1, p2 = _pmf(dp.lambda_home, n), _pmf(dp.lambda_away, n)
    deficit = 1.0 - p1.sum() * p2.sum()
    if deficit > MASS_TOL:
        raise TruncationError(f"truncation at {n} goals loses {deficit:.3g} of the joint mass")
    home, draw, under = _masks(n, line)
    return float(p1 @ home @ p2), float(p1 @ draw @ p2), float(p1 @ under @ p2)


def tg_sup(dp: DoublePoisson) -> TgSup:
    return TgSup(dp.lambda_home + dp.lambda_away, dp.lambda_home - dp.lambda_away)


def _loss_and_grad(x: np.ndarray, target: np.ndarray, line: float, n: int, masks) -> tuple[float, np.ndarray]:
    p1, p2 = _pmf(x[0], n), _pmf(x[1], n)
    # d pmf(k) / d lam = pmf(k - 1) - pmf(k)
    d1 = np.concatenate(([0.0], p1[:-1])) - p1
    d2 = np.concatenate(([0.0], p2[:-1])) - p2
    model = np.array([p1 @ m @ p2 for m in masks])
    jac = np.array([[d1 @ m @ p2, p1 @ m @ d2] for m in masks])
    resid = target - model
    return float(resid @ resid), -2.0 * resid @ jac


def _projected_gradient_norm(x, target, line, n, masks) -> float:
    _, g = _loss_and_grad(x, target, line, n, masks)
    g = np.where((x <= LOWER) & (g > 0), 0.0, g)
    g = np.where((x >= UPPER) & (g < 0), 0.0, g)
    return float(np.max(np.abs(g)))


def _poisson_total_start(p_under: float, line: float) -> float:
    k = math.ceil(line) - 1
    f = lambda t: poisson.cdf(k, t) - p_under
    lo, hi = 2 * LOWER, 2 * UPPER
    if f(lo) * f(hi) > 0:
        return 2.5
    return optimize.brentq(f, lo, hi)


def grid_losses(target: np.ndarray, line: float, size: int = GRID_SIZE) -> tuple[np.ndarray, np.ndarray]:
    """Loss on a ``size x size`` grid spanning the box; returns (grid, losses)."""
    grid = np.linspace(LOWER, UPPER, size)
    n = max(_required_truncation(UPPER), DEFAULT_TRUNCATION)
    pm = poisson.pmf(np.arange(n + 1)[None, :], grid[:, None])
    losses = np.zeros((size, size))
    for t, m in zip(target, _masks(n, line)):
        losses += (t - pm @ m @ pm.T) ** 2
    return grid, losses


def fit_implied(targets: MarketTargets) -> GoalsFit:
    """Goal rates minimising the squared loss against ``targets``."""
    target = targets.as_array()
    line = targets.goals_line
    n = max(_required_truncation(UPPER), DEFAULT_TRUNCATION)
    masks = _masks(n, line)
    total = _poisson_total_start(targets.p_under, line)
    starts = [
        (min(max(total / 2, LOWER), UPPER),) * 2,
        (1.0, 1.0),
        (2.0, 1.0),
    ]
    bounds = [(LOWER, UPPER)] * 2
    options = {"ftol": 1e-20, "gtol": 1e-14, "maxiter": 1000}

    def run(x0):
        return optimize.minimize(
            _loss_and_grad, np.asarray(x0, float), args=(target, line, n, masks),
            jac=True, method="L-BFGS-B", bounds=bounds, options=options,
        )

    results = [run(x0) for x0 in starts]
    best = min(results, key=lambda r: r.fun)

    grid, losses = grid_losses(target, line)
    i, j = np.unravel_index(np.argmin(losses), losses.shape)
    if losses[i, j] < best.fun:
        refined = run((grid[i], grid[j]))
        results.append(refined)
        best = min(results, key=lambda r: r.fun)
        if losses[i, j] < best.fun:
            raise SolverError("optimiser ended above the verification grid", (grid[i], grid[j]), float(losses[i, j]))

    if not best.success and _projected_gradient_norm(best.x, target, line, n, masks) > 1e-7:
        raise SolverError(f"L-BFGS-B did not converge: {best.message}", tuple(best.x), float(best.fun))

    lam1, lam2 = (float(v) for v in np.clip(best.x, LOWER, UPPER))
    boundary = any(min(v - LOWER, UPPER - v) < 1e-6 for v in (lam1, lam2))
    return GoalsFit(DoublePoisson(lam1, lam2), float(best.fun), boundary, targets.line_assumed, tuple(starts))


def targets_from_odds(
    had_odds: Sequence[float],
    ou_odds: Sequence[float],
    goals_line: float | None = None,
) -> MarketTargets:
    """Margin-free targets: Shin on (home, draw, away), multiplicative on (over, under)."""
    had = odds_margin.shin(had_odds).probs
    over_under = odds_margin.multiplicative(ou_odds).probs
    assumed = goals_line is None
    return MarketTargets(
        p_home=float(had[0]),
        p_draw=float(had[1]),
        p_under=float(over_under[1]),
        goals_line=DEFAULT_LINE if assumed else float(goals_line),
        line_assumed=assumed,
    )
