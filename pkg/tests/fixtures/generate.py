"""Regenerate matches.csv: a small two-league fixture with odds and corner quotes.

Run from the repository root: ``python3 tests/fixtures/generate.py``.
"""
from __future__ import annotations

import itertools
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from cornerkick import dcp
from cornerkick.data_io import MatchRecord, write_matches
from cornerkick.implied_goals import DoublePoisson, model_probs

HERE = Path(__file__).parent


def _book(probs, margin, rng):
    # proportional margin plus a little rounding noise, as printed odds would carry
    odds = 1.0 / (np.asarray(probs) * (1.0 + margin))
    return [round(float(o) + rng.uniform(-0.005, 0.005), 2) for o in odds]


def build(seed: int = 20240601) -> list[MatchRecord]:
    rng = np.random.default_rng(seed)
    records = []
    start = date(2019, 8, 3)
    for comp, n_teams, corner_level in (("L1", 10, 10.4), ("L2", 8, 9.6)):
        teams = [f"{comp}-T{j:02d}" for j in range(n_teams)]
        attack = dict(zip(teams, rng.normal(0.0, 0.25, n_teams)))
        corner_bias = dict(zip(teams, rng.normal(0.0, 0.08, n_teams)))
        fixtures = list(itertools.permutations(teams, 2))
        for rnd in range(2):
            order = rng.permutation(len(fixtures))
            for j, idx in enumerate(order):
                home, away = fixtures[idx]
                day = start + timedelta(days=int(rnd * 200 + j // 4 * 2))
                lh = float(np.clip(1.45 * np.exp(attack[home] - attack[away]), 0.2, 4.0))
                la = float(np.clip(1.10 * np.exp(attack[away] - attack[home]), 0.2, 4.0))
                ph, pd, pu = model_probs(DoublePoisson(lh, la), 2.5)
                had = _book([ph, pd, 1 - ph - pd], 0.08, rng)
                over, under = _book([1 - pu, pu], 0.06, rng)
                mean_c = corner_level * np.exp(corner_bias[home] + corner_bias[away] + 0.05 * (lh + la - 2.55))
                theta = 0.9
                total = int(dcp.sample(dcp.DcpDistribution.geom_poisson(mean_c * theta, theta), 1,
                                       int(rng.integers(2**31)))[0])
                hc = int(rng.binomial(total, 0.55))
                line = float(np.floor(mean_c)) + 0.5 if j % 5 else float(round(mean_c))
                p_over = float(rng.uniform(0.4, 0.6))
                c_over, c_under = _book([p_over, 1 - p_over], 0.076, rng)
                records.append(MatchRecord(
                    match_id=f"{comp}-{rnd}-{j:03d}", date=day, competition_id=comp,
                    home_team=home, away_team=away, home_corners=hc, away_corners=total - hc,
                    home_goals=int(rng.poisson(lh)), away_goals=int(rng.poisson(la)),
                    home_sog=int(rng.poisson(4.6)), away_sog=int(rng.poisson(3.9)),
                    odds_home=had[0], odds_draw=had[1], odds_away=had[2],
                    goals_line=2.5, goals_over=over, goals_under=under,
                    corner_line=line, corner_over=c_over, corner_under=c_under,
                ))
    records.sort(key=lambda r: (r.date, r.match_id))
    return records


if __name__ == "__main__":
    write_matches(build(), HERE / "matches.csv")
