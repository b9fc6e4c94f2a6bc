import math

import numpy as np
import pytest

from cornerkick import implied_goals as ig
from cornerkick.implied_goals import DoublePoisson, MarketTargets

GRID = (0.4, 0.8, 1.2, 1.8, 2.4)


def brute_force(lam1, lam2, line, n=30):
    home = draw = under = 0.0
    for a in range(n + 1):
        pa = lam1**a * math.exp(-lam1) / math.factorial(a)
        for b in range(n + 1):
            p = pa * lam2**b * math.exp(-lam2) / math.factorial(b)
            home += p if a > b else 0.0
            draw += p if a == b else 0.0
            under += p if a + b < line else 0.0
    return home, draw, under


def realizable(lam1, lam2, line=2.5):
    home, draw, under = ig.model_probs(DoublePoisson(lam1, lam2), line)
    return MarketTargets(home, draw, under, line)


class TestModelProbs:
    def test_symmetry(self):
        home, draw, _ = ig.model_probs(DoublePoisson(1.0, 1.0))
        assert home == pytest.approx((1 - draw) / 2, abs=1e-12)

    def test_draw_unit_rates(self):
        _, draw, _ = ig.model_probs(DoublePoisson(1.0, 1.0))
        want = math.exp(-2) * sum(1 / math.factorial(k) ** 2 for k in range(30))
        assert draw == pytest.approx(want, abs=1e-12)
        assert draw == pytest.approx(0.3085, abs=5e-5)

    def test_brute_force_asymmetric(self):
        got = ig.model_probs(DoublePoisson(2.0, 0.5), 2.5)
        np.testing.assert_allclose(got, brute_force(2.0, 0.5, 2.5), atol=1e-12)

    @pytest.mark.parametrize("line", [0.5, 1.5, 3.5, 4.0])
    def test_other_lines(self, line):
        np.testing.assert_allclose(ig.model_probs(DoublePoisson(1.3, 0.9), line), brute_force(1.3, 0.9, line), atol=1e-12)

    def test_outcomes_partition(self):
        dp = DoublePoisson(2.2, 1.1)
        home, draw, _ = ig.model_probs(dp)
        away, _, _ = ig.model_probs(DoublePoisson(1.1, 2.2))
        assert home + draw + away == pytest.approx(1.0, abs=1e-9)

    def test_truncation_extends_near_upper_bound(self):
        dp = DoublePoisson(6.0, 6.0)
        assert dp.truncation > 20
        ig.model_probs(dp)

    def test_explicit_short_truncation_fails_mass_check(self):
        with pytest.raises(ig.TruncationError):
            ig.model_probs(DoublePoisson(6.0, 1.0, goal_truncation=10))

    def test_under_decreasing(self):
        rates = np.linspace(0.1, 5.5, 30)
        home_side = [ig.model_probs(DoublePoisson(r, 1.0))[2] for r in rates]
        away_side = [ig.model_probs(DoublePoisson(1.0, r))[2] for r in rates]
        assert np.all(np.diff(home_side) < 0)
        assert np.all(np.diff(away_side) < 0)


class TestTgSup:
    def test_values(self):
        ts = ig.tg_sup(DoublePoisson(1.5, 1.2))
        assert ts.tg == pytest.approx(2.7)
        assert ts.sup == pytest.approx(0.3)

    def test_level(self):
        assert ig.tg_sup(DoublePoisson(1.0, 1.0)).sup == 0.0

    def test_inverse(self):
        dp = DoublePoisson(1.7, 0.6)
        back = ig.tg_sup(dp).to_double_poisson()
        assert back.lambda_home == pytest.approx(1.7)
        assert back.lambda_away == pytest.approx(0.6)


class TestFitImplied:
    def test_round_trip(self):
        fit = ig.fit_implied(realizable(1.5, 1.2))
        assert fit.dp.lambda_home == pytest.approx(1.5, abs=1e-3)
        assert fit.dp.lambda_away == pytest.approx(1.2, abs=1e-3)

    def test_symmetric_targets(self):
        fit = ig.fit_implied(realizable(1.3, 1.3))
        assert abs(fit.tg_sup.sup) < 1e-3

    def test_asymmetric(self):
        fit = ig.fit_implied(realizable(2.4, 0.6))
        assert fit.dp.lambda_home == pytest.approx(2.4, abs=1e-3)
        assert fit.dp.lambda_away == pytest.approx(0.6, abs=1e-3)

    @pytest.mark.parametrize("lam1", GRID)
    @pytest.mark.parametrize("lam2", GRID)
    def test_grid_round_trip(self, lam1, lam2):
        fit = ig.fit_implied(realizable(lam1, lam2))
        assert abs(fit.dp.lambda_home - lam1) < 1e-3
        assert abs(fit.dp.lambda_away - lam2) < 1e-3
        assert fit.loss <= 1e-8

    def test_beats_verification_grid_on_market_targets(self):
        targets = ig.targets_from_odds((2.1, 3.4, 3.6), (1.95, 1.87))
        fit = ig.fit_implied(targets)
        _, losses = ig.grid_losses(targets.as_array(), targets.goals_line)
        assert fit.loss <= losses.min()
        assert fit.line_assumed

    def test_boundary_flag(self):
        # near-certain home win with very few goals pushes the away rate to the floor
        fit = ig.fit_implied(MarketTargets(0.6, 0.39, 0.97, 2.5))
        assert fit.at_boundary


class TestTargetsFromOdds:
    def test_methods_paired(self):
        from cornerkick import odds_margin

        t = ig.targets_from_odds((2.1, 3.4, 3.6), (1.95, 1.87), goals_line=2.5)
        shin = odds_margin.shin((2.1, 3.4, 3.6)).probs
        mult = odds_margin.multiplicative((1.95, 1.87)).probs
        assert t.p_home == shin[0] and t.p_draw == shin[1] and t.p_under == mult[1]
        assert not t.line_assumed
