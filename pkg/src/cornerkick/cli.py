"""Command-line pipeline: odds -> implied goals -> features -> fit -> predict -> backtest."""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from datetime import date
from pathlib import Path
from typing import Sequence

import numpy as np

from cornerkick import __version__, betting, data_io, features, implied_goals, odds_margin
from cornerkick.model import loo, regression
from cornerkick.model.regression import MCMCConfig, ModelSpec, PosteriorDraws

FEATURE_COLUMNS = (
    ["match_id", "date", "competition_id", "home_team", "away_team", "total_corners"]
    + list(features.COVARIATES)
    + ["shape_covariate", "prov_home_corners", "prov_home_sog", "prov_away_corners", "prov_away_sog"]
)
GOALS_COLUMNS = ["match_id", "tg", "sup", "lambda_home", "lambda_away", "loss", "at_boundary",
                 "goals_line", "line_assumed"]


class CliError(Exception):
    pass


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, bool):
        return "1" if x else "0"
    return str(x)


def _write_csv(path: str, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _read_csv(path: str) -> list[dict[str, str]]:
    try:
        with open(path, newline="", encoding="utf-8-sig") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise CliError(str(exc)) from exc


def _resolve(path: str) -> str:
    p = Path(path)
    if p.is_absolute() or p.exists():
        return str(p)
    return str(data_io.default_data_dir() / p)


def _load_matches(path: str, schema: str) -> list[data_io.MatchRecord]:
    try:
        result = data_io.parse_matches(_resolve(path), schema)
    except OSError as exc:
        raise CliError(str(exc)) from exc
    for rej in result.rejected:
        print(f"{path}:{rej.line}: rejected: {rej.reason}", file=sys.stderr)
    return result.records


# -- implied / score ---------------------------------------------------------


def _odds_rows(path: str) -> list[tuple[str, list[float], dict[str, str]]]:
    rows = []
    for i, row in enumerate(_read_csv(path), start=1):
        rid = row.get("id") or str(i)
        odds = [float(v) for k, v in row.items() if k not in ("id", "outcome") and v not in (None, "")]
        rows.append((rid, odds, row))
    return rows


def cmd_implied(args) -> int:
    method = odds_margin.Method(args.method)
    out = []
    width = 0
    for rid, odds, _ in _odds_rows(args.input):
        try:
            res = odds_margin.implied(odds, method)
        except (odds_margin.BookError, odds_margin.SolverError, ValueError) as exc:
            print(f"row {rid}: {exc}", file=sys.stderr)
            continue
        book = odds_margin.OddsBook(odds)
        width = max(width, len(res.probs))
        out.append((rid, [float(p) for p in res.probs], book.booksum, res.parameter, res.solver_residual))
    header = ["id", "method"] + [f"p{j + 1}" for j in range(width)] + ["booksum", "parameter", "residual"]
    rows = [[rid, method.value] + probs + [""] * (width - len(probs)) + [bs, par, resid]
            for rid, probs, bs, par, resid in out]
    _emit(args.output, header, rows)
    return 0


def cmd_score(args) -> int:
    rows = _odds_rows(args.input)
    if any("outcome" not in r for _, _, r in rows):
        raise CliError("score needs an 'outcome' column (1-based index of the realised outcome)")
    print(f"{'method':<12}{'score':>14}{'events':>8}")
    for method in odds_margin.Method:
        probs, outcomes = [], []
        for _, odds, row in rows:
            probs.append(odds_margin.implied(odds, method).probs)
            outcomes.append(int(row["outcome"]) - 1)
        total = odds_margin.neg_log_score(probs, outcomes)
        print(f"{method.value:<12}{total:>14.2f}{len(rows):>8d}")
    return 0


def _emit(path: str | None, header, rows) -> None:
    if path:
        _write_csv(path, header, rows)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


# -- implied goals / features ------------------------------------------------


def cmd_extract_goals(args) -> int:
    rows = []
    for rec in _load_matches(args.matches, args.schema):
        if rec.had_odds is None or rec.goals_ou_odds is None:
            print(f"{rec.match_id}: skipped: missing HAD or goals over/under odds", file=sys.stderr)
            continue
        try:
            target = implied_goals.targets_from_odds(rec.had_odds, rec.goals_ou_odds, rec.goals_line)
            fit = implied_goals.fit_implied(target)
        except (ValueError, implied_goals.SolverError) as exc:
            print(f"{rec.match_id}: skipped: {exc}", file=sys.stderr)
            continue
        ts = fit.tg_sup
        rows.append([rec.match_id, ts.tg, ts.sup, fit.dp.lambda_home, fit.dp.lambda_away, fit.loss,
                     fit.at_boundary, target.goals_line, target.line_assumed])
    _emit(args.output, GOALS_COLUMNS, rows)
    return 0


def _read_goals(path: str) -> dict[str, implied_goals.TgSup]:
    return {r["match_id"]: implied_goals.TgSup(float(r["tg"]), float(r["sup"])) for r in _read_csv(path)}


def cmd_featurize(args) -> int:
    matches = _load_matches(args.matches, args.schema)
    window_end = date.fromisoformat(args.window_end)
    enc = features.build_encodings(matches, window_end, args.m)
    rows, skipped = features.FeatureBuilder(enc).run(matches, _read_goals(args.goals))
    for mid, reason in skipped:
        print(f"{mid}: skipped: {reason}", file=sys.stderr)
    out = []
    for rec, row in rows:
        prov = row.provenance
        out.append([rec.match_id, rec.date.isoformat(), rec.competition_id, rec.home_team, rec.away_team,
                    rec.total_corners] + [getattr(row, c) for c in features.COVARIATES]
                   + [row.shape_covariate, prov["home_corners"], prov["home_sog"], prov["away_corners"],
                      prov["away_sog"]])
    _emit(args.output, FEATURE_COLUMNS, out)
    if args.encodings:
        Path(args.encodings).write_text(json.dumps(enc.to_dict(), sort_keys=True, indent=1) + "\n")
    return 0


def _read_features(path: str) -> tuple[list[dict[str, str]], list[features.FeatureRow]]:
    raw = _read_csv(path)
    missing = [c for c in FEATURE_COLUMNS[:14] if raw and c not in raw[0]]
    if missing:
        raise CliError(f"{path}: missing feature column(s) {', '.join(missing)}")
    rows = [features.FeatureRow(**{c: float(r[c]) for c in features.COVARIATES},
                                shape_covariate=float(r["shape_covariate"])) for r in raw]
    return raw, rows


def _dataset(raw, rows) -> regression.Dataset:
    if not rows:
        raise CliError("no feature rows")
    return regression.Dataset.from_rows([(row, int(r["total_corners"])) for r, row in zip(raw, rows)])


# -- fitting -----------------------------------------------------------------


def _clean(x: float) -> float | None:
    return float(x) if math.isfinite(x) else None


def cmd_fit(args) -> int:
    raw, rows = _read_features(args.features)
    data = _dataset(raw, rows)
    spec = ModelSpec(args.family, shape_regression=args.shape_reg, prior_scale=args.prior_scale)
    names = spec.parameter_names
    if args.method == "map":
        mode = regression.fit_map(data, spec)
        sd = np.sqrt(np.diag(mode.covariance))
        summaries = {n: {"median": float(v), "q2.5": float(v - 1.959964 * s), "q97.5": float(v + 1.959964 * s)}
                     for n, v, s in zip(names, mode.vector, sd)}
        diagnostics = {"method": "map", "converged": mode.converged, "log_posterior": mode.log_posterior,
                       "warnings": [] if mode.converged else [mode.message]}
        draws = [[[float(v) for v in mode.vector]]]
    else:
        cfg = MCMCConfig(chains=args.chains, iterations=args.iterations, warmup=args.warmup, seed=args.seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            post = regression.fit_mcmc(data, spec, cfg)
        summaries = {n: {k: _clean(v) for k, v in s.items()} for n, s in post.summary().items()}
        diagnostics = {"method": "mcmc", "rhat": [_clean(r) for r in post.rhat], "ess": [_clean(e) for e in post.ess],
                       "warnings": post.warnings, "sampler": post.sampler_info}
        draws = post.draws.tolist() if not args.no_draws else None
        for w in post.warnings:
            print(f"warning: {w}", file=sys.stderr)
    dates = sorted(r["date"] for r in raw)
    encodings = json.loads(Path(args.encodings).read_text()) if args.encodings else {}
    artifact = data_io.ModelArtifact(
        spec=spec.to_dict(), parameter_names=names, summaries=summaries, diagnostics=diagnostics, draws=draws,
        encodings=encodings,
        metadata={"seed": args.seed, "n": len(data), "data_window": [dates[0], dates[-1]],
                  "package_version": __version__},
    )
    data_io.save_artifact(artifact, args.output)
    print(f"{spec.label}: {len(data)} matches")
    for n in names:
        s = summaries[n]
        print(f"  {n:<12} {s['median']:>10.4f} ({s['q2.5']:.4f}, {s['q97.5']:.4f})")
    return 0


def _load_posterior(path: str) -> PosteriorDraws:
    try:
        art = data_io.load_artifact(_resolve(path))
    except OSError as exc:
        raise CliError(str(exc)) from exc
    spec = ModelSpec.from_dict(art.spec)
    if art.draws is None:
        med = np.array([art.summaries[n]["median"] for n in art.parameter_names])
        print(f"{path}: no stored draws; predicting from posterior medians", file=sys.stderr)
        return PosteriorDraws.point(med, spec)
    arr = np.asarray(art.draws, dtype=float)
    p = arr.shape[2]
    return PosteriorDraws(arr, spec, np.full(p, np.nan), np.full(p, np.nan))


def cmd_compare(args) -> int:
    raw, rows = _read_features(args.features)
    data = _dataset(raw, rows)
    results = {}
    for path in args.models:
        post = _load_posterior(path)
        ll = regression.pointwise_loglik(post, data)
        try:
            results[f"{post.spec.label} [{Path(path).name}]"] = loo.psis_loo(ll, min_draws=args.min_draws)
        except ValueError as exc:
            raise CliError(f"{path}: {exc}") from exc
    print(loo.format_table(loo.compare(results)))
    return 0


def _predictives(post: PosteriorDraws, raw, rows, thin: int) -> dict[str, np.ndarray]:
    return {r["match_id"]: regression.posterior_predictive(post, row, thin=thin) for r, row in zip(raw, rows)}


def cmd_predict(args) -> int:
    post = _load_posterior(args.model)
    raw, rows = _read_features(args.features)
    preds = _predictives(post, raw, rows, args.thin)
    width = max((p.size for p in preds.values()), default=0)
    out = []
    for mid, p in preds.items():
        mean = float(np.arange(p.size) @ p)
        out.append([mid, mean] + [float(v) for v in p] + [0.0] * (width - p.size))
    _emit(args.output, ["match_id", "mean"] + [f"p{j}" for j in range(width)], out)
    return 0


def cmd_backtest(args) -> int:
    post = _load_posterior(args.model)
    raw, rows = _read_features(args.features)
    preds = _predictives(post, raw, rows, args.thin)
    quotes, actuals = [], {}
    for rec in _load_matches(args.quotes, args.schema):
        if rec.match_id not in preds:
            continue  # outside the featurized window
        actuals[rec.match_id] = rec.total_corners
        if rec.corner_quote is None:
            print(f"{rec.match_id}: skipped: no corner line", file=sys.stderr)
            continue
        line, over, under = rec.corner_quote
        quotes.append(betting.CornerQuote(rec.match_id, line, over, under, rec.date))
    strategy = betting.Strategy(args.strategy)
    summary = betting.backtest(quotes, preds, actuals, strategy, trade_days=args.trade_days,
                               sharpe_numerator=args.sharpe_numerator)
    if args.ledger:
        _write_csv(args.ledger, ["match_id", "date", "selection", "line", "odds", "stake", "model_prob",
                                 "expected_value", "actual_corners", "profit"],
                   [[b.match_id, b.kickoff_date.isoformat(), b.selection.value, b.line, b.odds, b.stake,
                     b.model_prob, b.expected_value, b.actual_corners, b.profit] for b in summary.bets])
    if args.daily:
        _write_csv(args.daily, ["date", "profit"], [[d.isoformat(), p] for d, p in summary.daily_profits.items()])
    label = "Blind bet on under" if strategy is betting.Strategy.BLIND_UNDER else post.spec.label
    print(betting.format_summary([(label, summary)]))
    skips = sum(1 for a in summary.audit if a.outcome == "skip")
    if skips:
        print(f"{skips} quote(s) skipped; see audit", file=sys.stderr)
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cornerkick", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    s = sub.add_parser("implied", help="margin-free probabilities from decimal odds")
    s.add_argument("--method", choices=[m.value for m in odds_margin.Method], default="shin")
    s.add_argument("--input", required=True, help="CSV, one odds vector per row; optional 'id' column")
    s.add_argument("--output")
    s.set_defaults(func=cmd_implied)

    s = sub.add_parser("score", help="negative log score of each margin method against outcomes")
    s.add_argument("--input", required=True, help="odds CSV with a 1-based 'outcome' column")
    s.set_defaults(func=cmd_score)

    def schema_arg(sp):
        sp.add_argument("--schema", choices=[x.value for x in data_io.Schema], default="generic")

    s = sub.add_parser("extract-goals", help="implied TG and SUP per match")
    s.add_argument("--matches", required=True)
    schema_arg(s)
    s.add_argument("--output")
    s.set_defaults(func=cmd_extract_goals)

    s = sub.add_parser("featurize", help="build regression covariates")
    s.add_argument("--matches", required=True)
    s.add_argument("--goals", required=True, help="output of extract-goals")
    s.add_argument("--window-end", required=True, help="ISO date; earlier matches only feed encodings")
    s.add_argument("--m", type=float, default=features.DEFAULT_M)
    s.add_argument("--encodings", help="also write the encoding table as JSON")
    schema_arg(s)
    s.add_argument("--output")
    s.set_defaults(func=cmd_featurize)

    s = sub.add_parser("fit", help="fit a corner-count regression")
    s.add_argument("--features", required=True)
    s.add_argument("--family", choices=["poisson", "nb", "gp"], required=True)
    s.add_argument("--shape-reg", action="store_true")
    s.add_argument("--method", choices=["mcmc", "map"], default="mcmc")
    s.add_argument("--chains", type=int, default=4)
    s.add_argument("--iterations", type=int, default=4000)
    s.add_argument("--warmup", type=int)
    s.add_argument("--prior-scale", type=float, default=regression.DEFAULT_PRIOR_SCALE)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--no-draws", action="store_true", help="store summaries only")
    s.add_argument("--encodings", help="encoding table JSON to embed in the artifact")
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("compare", help="PSIS-LOO comparison of fitted models")
    s.add_argument("--features", required=True)
    s.add_argument("--min-draws", type=int, default=loo.MIN_DRAWS)
    s.add_argument("models", nargs="+")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("predict", help="posterior predictive pmf per match")
    s.add_argument("--model", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--thin", type=int, default=4)
    s.add_argument("--output")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("backtest", help="simulate flat-stake corner over/under betting")
    s.add_argument("--model", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--quotes", required=True, help="match CSV carrying corner lines and results")
    schema_arg(s)
    s.add_argument("--strategy", choices=[x.value for x in betting.Strategy], default="ev")
    s.add_argument("--thin", type=int, default=4)
    s.add_argument("--trade-days", type=int, default=betting.TRADE_DAYS)
    s.add_argument("--sharpe-numerator", choices=["mean", "total"], default="mean")
    s.add_argument("--ledger", help="per-bet CSV")
    s.add_argument("--daily", help="daily profit CSV")
    s.add_argument("--seed", type=int, default=0, help="accepted for symmetry; backtests are deterministic")
    s.set_defaults(func=cmd_backtest)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (CliError, ValueError, data_io.SchemaError, data_io.IntegrityError, KeyError) as exc:
        print(f"cornerkick {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
