"""Match CSV ingestion and model artifact persistence.

Two CSV layouts are understood.

``generic``
    ``match_id,date,competition_id,home_team,away_team,home_corners,away_corners``
    are mandatory; ``home_goals,away_goals,home_sog,away_sog,odds_home,
    odds_draw,odds_away,goals_line,goals_over,goals_under,corner_line,
    corner_over,corner_under`` are optional (blank cells allowed).

``football-data``
    The football-data.co.uk export: ``Div,Date,HomeTeam,AwayTeam,HC,AC`` are
    mandatory; ``FTHG,FTAG,HST,AST`` are read when present. HAD odds come from
    the first complete bookmaker triple among ``B365``, ``PS``, ``Avg``,
    ``Max`` (``B365H`` etc.); goals over/under from ``<bookie>>2.5`` and
    ``<bookie><2.5`` with the line 2.5. Corner over/under quotes are not part
    of that feed and are read from optional ``CornerLine,CornerOver,CornerUnder``
    columns.

Rejected rows are returned with their 1-based file line numbers.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from datetime import date, datetime
from enum import Enum
from pathlib import Path
from typing import Any, Iterable

ARTIFACT_VERSION = "cornerkick-model/1"
DATA_DIR_ENV = "CORNERKICK_DATA_DIR"

GENERIC_COLUMNS = [
    "match_id", "date", "competition_id", "home_team", "away_team",
    "home_corners", "away_corners", "home_goals", "away_goals", "home_sog", "away_sog",
    "odds_home", "odds_draw", "odds_away", "goals_line", "goals_over", "goals_under",
    "corner_line", "corner_over", "corner_under",
]
GENERIC_REQUIRED = GENERIC_COLUMNS[:7]
FDUK_REQUIRED = ["Div", "Date", "HomeTeam", "AwayTeam", "HC", "AC"]
FDUK_BOOKMAKERS = ("B365", "PS", "Avg", "Max")


class SchemaError(ValueError):
    """A mandatory column is missing."""


class IntegrityError(ValueError):
    """An artifact file is corrupt, tampered with, or of an unknown version."""


class Schema(str, Enum):
    GENERIC = "generic"
    FOOTBALL_DATA_UK = "football-data"


@dataclass(frozen=True)
class MatchRecord:
    match_id: str
    date: date
    competition_id: str
    home_team: str
    away_team: str
    home_corners: int
    away_corners: int
    home_goals: int | None = None
    away_goals: int | None = None
    home_sog: int | None = None
    away_sog: int | None = None
    odds_home: float | None = None
    odds_draw: float | None = None
    odds_away: float | None = None
    goals_line: float | None = None
    goals_over: float | None = None
    goals_under: float | None = None
    corner_line: float | None = None
    corner_over: float | None = None
    corner_under: float | None = None

    @property
    def total_corners(self) -> int:
        return self.home_corners + self.away_corners

    @property
    def had_odds(self) -> tuple[float, float, float] | None:
        trio = (self.odds_home, self.odds_draw, self.odds_away)
        return None if None in trio else trio

    @property
    def goals_ou_odds(self) -> tuple[float, float] | None:
        pair = (self.goals_over, self.goals_under)
        return None if None in pair else pair

    @property
    def corner_quote(self) -> tuple[float, float, float] | None:
        trio = (self.corner_line, self.corner_over, self.corner_under)
        return None if None in trio else trio


@dataclass(frozen=True)
class Rejection:
    line: int
    reason: str


@dataclass
class ParseResult:
    records: list[MatchRecord]
    rejected: list[Rejection]
    total_rows: int

    def __post_init__(self) -> None:
        assert len(self.records) + len(self.rejected) == self.total_rows


def parse_date(raw: str) -> date:
    raw = raw.strip()
    for fmt in ("%Y-%m-%d", "%d/%m/%Y", "%d/%m/%y"):
        try:
            return datetime.strptime(raw, fmt).date()
        except ValueError:
            continue
    raise ValueError(f"unparseable date {raw!r}")


def _count(raw: str | None, name: str, required: bool) -> int | None:
    if raw is None or raw.strip() == "":
        if required:
            raise ValueError(f"missing {name}")
        return None
    value = float(raw)
    if value < 0 or value != int(value):
        raise ValueError(f"{name} must be a nonnegative integer, got {raw!r}")
    return int(value)


def _odds(raw: str | None, name: str) -> float | None:
    if raw is None or raw.strip() == "":
        return None
    value = float(raw)
    if not (math.isfinite(value) and value > 1.0):
        raise ValueError(f"{name} must be decimal odds > 1, got {raw!r}")
    return value


def _line(raw: str | None, name: str) -> float | None:
    if raw is None or raw.strip() == "":
        return None
    value = float(raw)
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {raw!r}")
    return value


def _generic_record(row: dict[str, str]) -> MatchRecord:
    for key in ("match_id", "competition_id", "home_team", "away_team"):
        if not row[key].strip():
            raise ValueError(f"missing {key}")
    return MatchRecord(
        match_id=row["match_id"].strip(),
        date=parse_date(row["date"]),
        competition_id=row["competition_id"].strip(),
        home_team=row["home_team"].strip(),
        away_team=row["away_team"].strip(),
        home_corners=_count(row["home_corners"], "home_corners", True),
        away_corners=_count(row["away_corners"], "away_corners", True),
        home_goals=_count(row.get("home_goals"), "home_goals", False),
        away_goals=_count(row.get("away_goals"), "away_goals", False),
        home_sog=_count(row.get("home_sog"), "home_sog", False),
        away_sog=_count(row.get("away_sog"), "away_sog", False),
        odds_home=_odds(row.get("odds_home"), "odds_home"),
        odds_draw=_odds(row.get("odds_draw"), "odds_draw"),
        odds_away=_odds(row.get("odds_away"), "odds_away"),
        goals_line=_line(row.get("goals_line"), "goals_line"),
        goals_over=_odds(row.get("goals_over"), "goals_over"),
        goals_under=_odds(row.get("goals_under"), "goals_under"),
        corner_line=_line(row.get("corner_line"), "corner_line"),
        corner_over=_odds(row.get("corner_over"), "corner_over"),
        corner_under=_odds(row.get("corner_under"), "corner_under"),
    )


def _first_complete(row: dict[str, str], suffixes: tuple[str, ...]) -> list[str | None]:
    for bookie in FDUK_BOOKMAKERS:
        cells = [row.get(bookie + s) for s in suffixes]
        if all(c is not None and c.strip() for c in cells):
            return cells
    return [None] * len(suffixes)


def _slug(text: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in text.strip())


def _fduk_record(row: dict[str, str]) -> MatchRecord:
    day = parse_date(row["Date"])
    home, away = row["HomeTeam"].strip(), row["AwayTeam"].strip()
    if not home or not away:
        raise ValueError("missing team name")
    h, d, a = _first_complete(row, ("H", "D", "A"))
    over, under = _first_complete(row, (">2.5", "<2.5"))
    return MatchRecord(
        match_id=f"{_slug(row['Div'])}-{day.isoformat()}-{_slug(home)}-{_slug(away)}",
        date=day,
        competition_id=row["Div"].strip(),
        home_team=home,
        away_team=away,
        home_corners=_count(row["HC"], "HC", True),
        away_corners=_count(row["AC"], "AC", True),
        home_goals=_count(row.get("FTHG"), "FTHG", False),
        away_goals=_count(row.get("FTAG"), "FTAG", False),
        home_sog=_count(row.get("HST"), "HST", False),
        away_sog=_count(row.get("AST"), "AST", False),
        odds_home=_odds(h, "home odds"),
        odds_draw=_odds(d, "draw odds"),
        odds_away=_odds(a, "away odds"),
        goals_line=2.5 if over is not None else None,
        goals_over=_odds(over, "over 2.5 odds"),
        goals_under=_odds(under, "under 2.5 odds"),
        corner_line=_line(row.get("CornerLine"), "CornerLine"),
        corner_over=_odds(row.get("CornerOver"), "CornerOver"),
        corner_under=_odds(row.get("CornerUnder"), "CornerUnder"),
    )


def parse_matches(path: str | os.PathLike, schema: Schema | str = Schema.GENERIC) -> ParseResult:
    schema = Schema(schema)
    required = GENERIC_REQUIRED if schema is Schema.GENERIC else FDUK_REQUIRED
    build = _generic_record if schema is Schema.GENERIC else _fduk_record
    records: list[MatchRecord] = []
    rejected: list[Rejection] = []
    total = 0
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaError(f"{path}: missing mandatory column(s) {', '.join(missing)}")
        for row in reader:
            total += 1
            line = reader.line_num
            if None in row:
                rejected.append(Rejection(line, "more cells than header columns"))
                continue
            try:
                records.append(build(row))
            except (ValueError, TypeError, AttributeError) as exc:
                rejected.append(Rejection(line, str(exc)))
    return ParseResult(records, rejected, total)


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, date):
        return value.isoformat()
    return repr(value) if isinstance(value, float) else str(value)


def write_matches(records: Iterable[MatchRecord], path: str | os.PathLike) -> None:
    """Write records in the generic layout."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(GENERIC_COLUMNS)
        for rec in records:
            writer.writerow([_cell(getattr(rec, c)) for c in GENERIC_COLUMNS])


def default_data_dir() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, "."))


# -- model artifacts ---------------------------------------------------------


@dataclass
class ModelArtifact:
    """Everything needed to reproduce predictions from a fitted model.

    ``spec`` and ``encodings`` are plain JSON-compatible dicts; ``draws`` is
    a list of chains, each a list of parameter vectors, or None when only
    summaries were kept.
    """

    spec: dict[str, Any]
    parameter_names: list[str]
    summaries: dict[str, dict[str, float]]
    diagnostics: dict[str, Any]
    draws: list[list[list[float]]] | None = None
    encodings: dict[str, Any] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)
    version: str = ARTIFACT_VERSION


def _canonical(payload: dict[str, Any]) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=True)


def save_artifact(artifact: ModelArtifact, path: str | os.PathLike) -> None:
    payload = asdict(artifact)
    body = _canonical(payload)
    doc = {"checksum": hashlib.sha256(body.encode()).hexdigest(), "artifact": payload}
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1, allow_nan=True) + "\n", encoding="utf-8")


def load_artifact(path: str | os.PathLike) -> ModelArtifact:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        payload = doc["artifact"]
        checksum = doc["checksum"]
    except (json.JSONDecodeError, KeyError, TypeError, UnicodeDecodeError) as exc:
        raise IntegrityError(f"{path}: not a model artifact ({exc})") from exc
    if payload.get("version") != ARTIFACT_VERSION:
        raise IntegrityError(f"{path}: unsupported artifact version {payload.get('version')!r}")
    if hashlib.sha256(_canonical(payload).encode()).hexdigest() != checksum:
        raise IntegrityError(f"{path}: checksum mismatch")
    known = {f.name for f in fields(ModelArtifact)}
    if set(payload) != known:
        raise IntegrityError(f"{path}: unexpected fields {sorted(set(payload) ^ known)}")
    return ModelArtifact(**payload)
