"""Regression covariates for one match.

The location design vector is

    [1, log TG, log(|SUP| + 0.01), TCTarget,
     log(HomeAvg3 + 0.01), log(AwayAvg3 + 0.01),
     log(HomeSoG3 + 0.01), log(AwaySoG3 + 0.01)]

and the shape design vector is ``[1, log(|SUP| + 0.01)]``.

``Avg3`` is the mean total corner count of the team's last three matches and
``SoG3`` the mean of the team's own shots on goal over the same window. A team
with no history falls back to the competition's encoded average, then to the
grand mean. Competition statistics are computed from a pre-training window
only; rows are built for matches on or after the window end.
"""
from __future__ import annotations

import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from itertools import groupby
from typing import Iterable, Mapping

import numpy as np

from cornerkick import dcp
from cornerkick.data_io import MatchRecord
from cornerkick.implied_goals import TgSup

OFFSET = 0.01
DEFAULT_M = 200.0
SHAPE_MIN_MATCHES = 300
WINDOW = 3

COVARIATES = (
    "log_tg", "log_abs_sup", "tc_target", "log_home_avg3",
    "log_away_avg3", "log_home_sog3", "log_away_sog3",
)


class LeakageError(ValueError):
    """A feature row was requested for a match inside the encoding window."""


class DataError(ValueError):
    """A covariate came out non-finite."""


class Provenance(str, Enum):
    TEAM_AVG = "TeamAvg"
    LEAGUE_ENCODED = "LeagueEncoded"
    GRAND_MEAN = "GrandMean"


class HistoryField(str, Enum):
    CORNERS = "corners"
    SHOTS_ON_GOAL = "sog"


def target_encode(n_k: float, theta_k: float, theta_global: float, m: float = DEFAULT_M) -> float:
    """Shrink a competition statistic toward the pooled one with pseudo-count ``m``."""
    if n_k < 0:
        raise ValueError("n_k must be nonnegative")
    if m <= 0:
        raise ValueError("m must be positive")
    return (n_k * theta_k + theta_global * m) / (n_k + m)


@dataclass(frozen=True)
class CompetitionEncoding:
    competition_id: str
    n_k: int
    theta_k: float
    theta_global: float
    m: float = DEFAULT_M

    @property
    def encoded(self) -> float:
        return target_encode(self.n_k, self.theta_k, self.theta_global, self.m)


@dataclass(frozen=True)
class TeamHistory:
    team_id: str
    recent_corner_counts: tuple[int, ...] = ()
    recent_shot_on_goal_counts: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        for values in (self.recent_corner_counts, self.recent_shot_on_goal_counts):
            if len(values) > WINDOW or any(v < 0 for v in values):
                raise ValueError(f"history holds 0-{WINDOW} nonnegative counts, got {values}")

    def values(self, which: HistoryField) -> tuple[int, ...]:
        if which is HistoryField.CORNERS:
            return self.recent_corner_counts
        return self.recent_shot_on_goal_counts


def rolling_avg3(
    history: TeamHistory,
    which: HistoryField,
    fallback: CompetitionEncoding | None,
    grand_mean: float,
) -> tuple[float, Provenance]:
    values = history.values(HistoryField(which))
    if values:
        return sum(values) / len(values), Provenance.TEAM_AVG
    if fallback is not None:
        return fallback.encoded, Provenance.LEAGUE_ENCODED
    return grand_mean, Provenance.GRAND_MEAN


@dataclass(frozen=True)
class FeatureRow:
    log_tg: float
    log_abs_sup: float
    tc_target: float
    log_home_avg3: float
    log_away_avg3: float
    log_home_sog3: float
    log_away_sog3: float
    shape_covariate: float
    provenance: Mapping[str, str] = field(default_factory=dict, compare=False)

    def design(self) -> np.ndarray:
        return np.array([1.0] + [getattr(self, c) for c in COVARIATES])

    def shape_design(self) -> np.ndarray:
        return np.array([1.0, self.shape_covariate])


def _log_offset(x: float) -> float:
    return math.log(x + OFFSET)


def build_feature_row(
    tg_sup: TgSup,
    enc: CompetitionEncoding | None,
    home: TeamHistory,
    away: TeamHistory,
    grand_means: Mapping[str, float],
    fallbacks: Mapping[HistoryField, CompetitionEncoding | None] | None = None,
) -> FeatureRow:
    """Assemble one row.

    ``enc`` is the encoded log mean corner count of the match's competition
    (None when the competition is unknown, in which case the pooled value in
    ``grand_means["log_corners"]`` is used). ``grand_means`` must also carry
    ``"corners"`` and ``"sog"`` for the history imputation.
    """
    if not tg_sup.tg > 0:
        raise DataError(f"total goals must be positive, got {tg_sup.tg}")
    fallbacks = fallbacks or {}
    provenance: dict[str, str] = {}
    avg = {}
    for side, hist in (("home", home), ("away", away)):
        for which in HistoryField:
            value, prov = rolling_avg3(hist, which, fallbacks.get(which), grand_means[which.value])
            avg[side, which] = value
            provenance[f"{side}_{which.value}"] = prov.value
    tc = enc.encoded if enc is not None else grand_means["log_corners"]
    log_abs_sup = _log_offset(abs(tg_sup.sup))
    values = dict(
        log_tg=math.log(tg_sup.tg),
        log_abs_sup=log_abs_sup,
        tc_target=tc,
        log_home_avg3=_log_offset(avg["home", HistoryField.CORNERS]),
        log_away_avg3=_log_offset(avg["away", HistoryField.CORNERS]),
        log_home_sog3=_log_offset(avg["home", HistoryField.SHOTS_ON_GOAL]),
        log_away_sog3=_log_offset(avg["away", HistoryField.SHOTS_ON_GOAL]),
        shape_covariate=log_abs_sup,
    )
    for name, v in values.items():
        if not math.isfinite(v):
            raise DataError(f"covariate {name} is not finite ({v})")
    return FeatureRow(**values, provenance=provenance)


# -- encoding tables ---------------------------------------------------------


@dataclass(frozen=True)
class EncodingTable:
    """Competition statistics frozen at ``window_end`` (exclusive)."""

    window_end: date
    m: float
    log_corners: Mapping[str, CompetitionEncoding]
    corners: Mapping[str, CompetitionEncoding]
    sog: Mapping[str, CompetitionEncoding]
    grand_means: Mapping[str, float]

    def to_dict(self) -> dict:
        def enc_map(table):
            return {k: [e.n_k, e.theta_k] for k, e in sorted(table.items())}

        return {
            "window_end": self.window_end.isoformat(),
            "m": self.m,
            "log_corners": enc_map(self.log_corners),
            "corners": enc_map(self.corners),
            "sog": enc_map(self.sog),
            "grand_means": dict(sorted(self.grand_means.items())),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EncodingTable":
        gm = dict(d["grand_means"])

        def enc_map(key, pooled):
            return {k: CompetitionEncoding(k, int(n), float(t), pooled, d["m"]) for k, (n, t) in d[key].items()}

        return cls(
            window_end=date.fromisoformat(d["window_end"]),
            m=float(d["m"]),
            log_corners=enc_map("log_corners", gm["log_corners"]),
            corners=enc_map("corners", gm["corners"]),
            sog=enc_map("sog", gm["sog"]),
            grand_means=gm,
        )


def build_encodings(matches: Iterable[MatchRecord], window_end: date, m: float = DEFAULT_M) -> EncodingTable:
    """Competition statistics from matches strictly before ``window_end``."""
    totals: dict[str, list[int]] = defaultdict(list)
    sogs: dict[str, list[int]] = defaultdict(list)
    for rec in matches:
        if rec.date >= window_end:
            continue
        totals[rec.competition_id].append(rec.total_corners)
        for s in (rec.home_sog, rec.away_sog):
            if s is not None:
                sogs[rec.competition_id].append(s)
    if not totals:
        raise ValueError(f"no matches before {window_end} to build encodings from")
    all_totals = [t for v in totals.values() for t in v]
    all_sog = [s for v in sogs.values() for s in v]
    pooled_mean = float(np.mean(all_totals))
    pooled_log = math.log(pooled_mean)
    pooled_sog = float(np.mean(all_sog)) if all_sog else 0.0
    log_corners, corners, sog = {}, {}, {}
    for comp, vals in totals.items():
        mean = float(np.mean(vals))
        log_corners[comp] = CompetitionEncoding(comp, len(vals), math.log(mean) if mean > 0 else pooled_log, pooled_log, m)
        corners[comp] = CompetitionEncoding(comp, len(vals), mean, pooled_mean, m)
    for comp, vals in sogs.items():
        sog[comp] = CompetitionEncoding(comp, len(vals), float(np.mean(vals)), pooled_sog, m)
    return EncodingTable(
        window_end=window_end,
        m=m,
        log_corners=log_corners,
        corners=corners,
        sog=sog,
        grand_means={"log_corners": pooled_log, "corners": pooled_mean, "sog": pooled_sog},
    )


def shape_encodings(
    counts_by_competition: Mapping[str, Iterable[int]],
    family: dcp.Family | str,
    m: float = DEFAULT_M,
    min_matches: int = SHAPE_MIN_MATCHES,
) -> dict[str, CompetitionEncoding]:
    """Target-encoded MLE shape (kappa for NB, theta for GP) per competition.

    Competitions with fewer than ``min_matches`` matches, or whose counts are
    not overdispersed, take the pooled estimate as their own statistic.
    """
    counts = {k: np.asarray(list(v)) for k, v in counts_by_competition.items()}
    pooled = dcp.fit_mle(family, np.concatenate(list(counts.values()))).shape
    out = {}
    for comp, y in sorted(counts.items()):
        theta_k = pooled
        if y.size >= min_matches:
            try:
                theta_k = dcp.fit_mle(family, y).shape
            except dcp.DispersionError:
                pass
        out[comp] = CompetitionEncoding(comp, int(y.size), float(theta_k), float(pooled), m)
    return out


class FeatureBuilder:
    """Walks matches chronologically, keeping each team's last three matches.

    Matches dated before the encoding window end only update histories;
    matches on or after it produce rows. Results of matches on the same day
    are not visible to each other.
    """

    def __init__(self, encodings: EncodingTable) -> None:
        self.encodings = encodings
        self._corners: dict[str, deque] = defaultdict(lambda: deque(maxlen=WINDOW))
        self._sog: dict[str, deque] = defaultdict(lambda: deque(maxlen=WINDOW))

    def history(self, team: str) -> TeamHistory:
        return TeamHistory(team, tuple(self._corners[team]), tuple(self._sog[team]))

    def row_for(self, rec: MatchRecord, goals: TgSup) -> FeatureRow:
        if rec.date < self.encodings.window_end:
            raise LeakageError(
                f"match {rec.match_id} on {rec.date} precedes encoding window end {self.encodings.window_end}"
            )
        comp = rec.competition_id
        enc = self.encodings
        return build_feature_row(
            goals,
            enc.log_corners.get(comp),
            self.history(rec.home_team),
            self.history(rec.away_team),
            enc.grand_means,
            {HistoryField.CORNERS: enc.corners.get(comp), HistoryField.SHOTS_ON_GOAL: enc.sog.get(comp)},
        )

    def record(self, rec: MatchRecord) -> None:
        for team, own_sog in ((rec.home_team, rec.home_sog), (rec.away_team, rec.away_sog)):
            self._corners[team].append(rec.total_corners)
            if own_sog is not None:
                self._sog[team].append(own_sog)

    def run(
        self, matches: Iterable[MatchRecord], goals: Mapping[str, TgSup]
    ) -> tuple[list[tuple[MatchRecord, FeatureRow]], list[tuple[str, str]]]:
        """Rows for every match at or after the window end with goals info.

        Returns ``(rows, skipped)`` where ``skipped`` lists
        ``(match_id, reason)``.
        """
        rows, skipped = [], []
        ordered = sorted(matches, key=lambda r: (r.date, r.match_id))
        for _, same_day in groupby(ordered, key=lambda r: r.date):
            day = list(same_day)
            for rec in day:
                if rec.date < self.encodings.window_end:
                    continue
                if rec.match_id not in goals:
                    skipped.append((rec.match_id, "no implied goals"))
                    continue
                try:
                    rows.append((rec, self.row_for(rec, goals[rec.match_id])))
                except DataError as exc:
                    skipped.append((rec.match_id, str(exc)))
            for rec in day:
                self.record(rec)
        return rows, skipped
