import math
from datetime import date, timedelta
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cornerkick import features
from cornerkick.data_io import MatchRecord
from cornerkick.features import (
    CompetitionEncoding,
    FeatureBuilder,
    HistoryField,
    LeakageError,
    Provenance,
    TeamHistory,
    build_encodings,
    build_feature_row,
    rolling_avg3,
    target_encode,
)
from cornerkick.implied_goals import TgSup

GRAND = {"log_corners": math.log(9.8), "corners": 9.8, "sog": 4.2}


def test_encode_no_data_is_global():
    assert target_encode(0, 3.0, 1.0) == 1.0


def test_encode_n_equals_m_is_midpoint():
    assert target_encode(200, 3.0, 1.0, 200) == pytest.approx(2.0, abs=1e-15)


def test_encode_mls_example():
    # 1766 MLS matches averaging 10.18 corners, pooled 9.8
    n, m = 1766, 200
    got = target_encode(n, math.log(10.18), math.log(9.8), m)
    exact = (Fraction(n) * Fraction(math.log(10.18)) + Fraction(math.log(9.8)) * m) / (n + m)
    assert got == pytest.approx(float(exact), rel=1e-15)
    assert math.log(9.8) < got < math.log(10.18)


@given(st.integers(0, 10_000), st.floats(-5, 5), st.floats(-5, 5), st.floats(0.1, 1e4))
def test_encode_between_inputs(n, a, b, m):
    v = target_encode(n, a, b, m)
    assert min(a, b) - 1e-12 <= v <= max(a, b) + 1e-12


def test_encode_rejects_bad_args():
    with pytest.raises(ValueError):
        target_encode(-1, 1, 1)
    with pytest.raises(ValueError):
        target_encode(1, 1, 1, 0)


def test_rolling_avg_team():
    h = TeamHistory("A", (4, 6, 5))
    assert rolling_avg3(h, HistoryField.CORNERS, None, 9.8) == (5.0, Provenance.TEAM_AVG)


def test_rolling_avg_partial_history():
    assert rolling_avg3(TeamHistory("A", (4,)), "corners", None, 9.8) == (4.0, Provenance.TEAM_AVG)


def test_rolling_avg_league_then_grand():
    enc = CompetitionEncoding("L", 100, 11.0, 9.8, 200)
    h = TeamHistory("A")
    assert rolling_avg3(h, HistoryField.CORNERS, enc, 9.8) == (enc.encoded, Provenance.LEAGUE_ENCODED)
    assert rolling_avg3(h, HistoryField.CORNERS, None, 9.8) == (9.8, Provenance.GRAND_MEAN)


def test_history_validation():
    with pytest.raises(ValueError):
        TeamHistory("A", (1, 2, 3, 4))
    with pytest.raises(ValueError):
        TeamHistory("A", (-1,))


def row(tg=2.7, sup=0.0, home=(4, 6, 5), away=(10, 12, 8), hs=(3, 4, 5), as_=(2, 2, 2)):
    enc = CompetitionEncoding("L", 500, math.log(10.2), math.log(9.8))
    return build_feature_row(TgSup(tg, sup), enc, TeamHistory("H", home, hs), TeamHistory("A", away, as_), GRAND)


def test_zero_supremacy_offset():
    r = row(sup=0.0)
    assert r.log_abs_sup == math.log(0.01) == r.shape_covariate


def test_log_tg():
    assert row(tg=2.7).log_tg == math.log(2.7)


def test_zero_corner_history_finite():
    r = row(home=(0, 0, 0))
    assert r.log_home_avg3 == math.log(0.01)


def test_offset_applied_once():
    r = row(sup=-0.4, home=(4, 6, 5), hs=(3, 4, 5))
    assert r.log_abs_sup == math.log(0.4 + 0.01)
    assert r.log_home_avg3 == math.log(5.0 + 0.01)
    assert r.log_home_sog3 == math.log(4.0 + 0.01)
    # tc_target is already on the log scale and gets no offset
    assert r.tc_target == target_encode(500, math.log(10.2), math.log(9.8))


def test_design_layout():
    r = row(sup=0.3)
    d = r.design()
    assert d.shape == (8,) and d[0] == 1.0
    assert list(d[1:]) == [getattr(r, c) for c in features.COVARIATES]
    assert list(r.shape_design()) == [1.0, math.log(0.31)]


def test_provenance_recorded():
    enc = CompetitionEncoding("L", 50, math.log(10.0), math.log(9.8))
    r = build_feature_row(TgSup(2.5, 0.2), enc, TeamHistory("H"), TeamHistory("A", (9,), (3,)), GRAND,
                          {HistoryField.CORNERS: CompetitionEncoding("L", 50, 10.0, 9.8)})
    assert r.provenance == {
        "home_corners": "LeagueEncoded", "home_sog": "GrandMean",
        "away_corners": "TeamAvg", "away_sog": "TeamAvg",
    }


def test_bad_tg():
    with pytest.raises(features.DataError):
        row(tg=0.0)


def test_deterministic_rows():
    assert row(sup=0.37) == row(sup=0.37)
    assert np.array_equal(row(sup=0.37).design(), row(sup=0.37).design())


# -- builder -----------------------------------------------------------------


def rec(i, day, home, away, hc, ac, comp="L", hs=None, as_=None):
    return MatchRecord(f"m{i}", day, comp, home, away, hc, ac, home_sog=hs, away_sog=as_)


D0 = date(2020, 1, 1)


def test_encodings_use_only_prewindow():
    matches = [rec(0, D0, "A", "B", 5, 5), rec(1, D0 + timedelta(1), "C", "D", 3, 3),
               rec(2, D0 + timedelta(10), "A", "C", 20, 20)]
    enc = build_encodings(matches, D0 + timedelta(10))
    assert enc.log_corners["L"].n_k == 2
    assert enc.grand_means["corners"] == 8.0


def test_builder_rejects_leakage():
    matches = [rec(0, D0, "A", "B", 5, 5)]
    b = FeatureBuilder(build_encodings(matches, D0 + timedelta(1)))
    with pytest.raises(LeakageError):
        b.row_for(matches[0], TgSup(2.5, 0.0))


def test_builder_history_and_same_day_isolation():
    pre = [rec(0, D0, "A", "B", 5, 5, hs=4, as_=2), rec(1, D0 + timedelta(1), "A", "C", 2, 2, hs=6, as_=1)]
    day = D0 + timedelta(5)
    post = [rec(2, day, "A", "D", 1, 1), rec(3, day, "B", "A", 7, 7), rec(4, day + timedelta(1), "A", "E", 0, 0)]
    matches = pre + post
    enc = build_encodings(matches, day)
    goals = {m.match_id: TgSup(2.5, 0.1) for m in matches}
    rows, skipped = FeatureBuilder(enc).run(matches, goals)
    assert not skipped
    by_id = {m.match_id: r for m, r in rows}
    assert set(by_id) == {"m2", "m3", "m4"}
    # same-day matches see only A's two earlier totals (10, 4)
    assert by_id["m2"].log_home_avg3 == math.log(7.0 + 0.01)
    assert by_id["m3"].log_away_avg3 == math.log(7.0 + 0.01)
    # next day: last three totals 10, 4, then both day-5 matches (2, 14) -> last three 4, 2, 14
    assert by_id["m4"].log_home_avg3 == math.log(20 / 3 + 0.01)
    assert by_id["m2"].log_home_sog3 == math.log(5.0 + 0.01)
    assert by_id["m2"].provenance["away_corners"] == "LeagueEncoded"


def test_builder_skips_without_goals():
    matches = [rec(0, D0, "A", "B", 5, 5), rec(1, D0 + timedelta(3), "A", "B", 5, 5)]
    rows, skipped = FeatureBuilder(build_encodings(matches, D0 + timedelta(1))).run(matches, {})
    assert rows == [] and skipped == [("m1", "no implied goals")]


def test_encoding_table_round_trip():
    matches = [rec(0, D0, "A", "B", 5, 5, hs=3, as_=4), rec(1, D0, "C", "D", 2, 9, comp="M")]
    enc = build_encodings(matches, D0 + timedelta(1), m=50)
    again = features.EncodingTable.from_dict(enc.to_dict())
    assert again.to_dict() == enc.to_dict()
    assert again.log_corners["M"].encoded == enc.log_corners["M"].encoded


def test_shape_encodings_small_league_falls_back():
    rng = np.random.default_rng(3)
    big = rng.negative_binomial(5, 5 / 15, size=400)
    small = rng.negative_binomial(50, 50 / 60, size=50)
    out = features.shape_encodings({"big": big, "small": small}, "nb")
    assert out["small"].theta_k == out["small"].theta_global
    assert out["big"].theta_k != out["big"].theta_global
    assert min(out["big"].theta_k, out["big"].theta_global) <= out["big"].encoded <= max(
        out["big"].theta_k, out["big"].theta_global)
