"""One-step-ahead forecasting and rolling out-of-sample evaluation.

Strength forecasts use only information available before the target edition:
fixed effects, exogenous predictor values for the upcoming field, and the
filtered dynamic state advanced one recursion step past the training panel.
Realized rankings enter evaluation only, never the forecast itself.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import DynrankError, ValidationError
from .estimate import FitOptions, ModelSpec, fit
from .filtering import Coefficients, PanelDataset, run_filter
from .plackett import (
    EXACT_CAP_DEFAULT,
    Ranking,
    champion_probability,
    log_pmf,
    modal_ranking,
    top_k_set_probability,
)

__all__ = [
    "DEFAULT_LAMBDA_GRID",
    "EditionEvaluation",
    "ForecastAggregates",
    "ForecastReport",
    "LambdaSearch",
    "default_k_playoff",
    "evaluate_edition",
    "forecast_report_rows",
    "forecast_report_to_dict",
    "lambda_grid_search",
    "one_step_forecast",
    "rolling_evaluation",
]

DEFAULT_LAMBDA_GRID = (0.0, 0.001, 0.01, 0.1, 1.0)

_CAUTION_NOTE = (
    "modal-ranking MAE/RMSE summarize the single most probable ranking "
    "and should be interpreted with caution"
)


def default_k_playoff(n: int) -> int:
    """Playoff-set size by field size: 8 for 16-team fields, 4 for 8-team,
    half the field (rounded up, floor 3) otherwise."""
    if n < 3:
        raise ValidationError(f"fields with fewer than 3 teams cannot be scored, got {n}")
    if n == 16:
        return 8
    if n == 8:
        return 4
    return min(n, max(3, math.ceil(n / 2)))


def one_step_forecast(
    dataset: PanelDataset,
    coef: Coefficients,
    t_next,
    participants: Sequence[str],
    predictors_next: Mapping[str, Mapping[str, float]] | None = None,
) -> dict[str, float]:
    """Forecast strengths for the edition following `dataset`.

    The filter runs over the whole panel, the dynamic state advances one more
    step (absent and cancelled editions already decayed inside the panel), and
    predictor values for the upcoming field come from `predictors_next` keyed
    by team then variable. Strengths are returned for `participants` only, in
    registry order.
    """
    coef.validate_for(dataset)
    if t_next <= dataset.times[-1]:
        raise ValidationError(
            f"t_next={t_next!r} must come after the final panel edition "
            f"{dataset.times[-1]!r}"
        )
    wanted = set(participants)
    unknown = sorted(wanted - set(dataset.teams))
    if unknown:
        raise ValidationError(f"unknown participants {unknown}")
    parts = [t for t in dataset.teams if t in wanted]
    if not parts:
        raise ValidationError("no participants to forecast")

    out = run_filter(dataset, coef)
    # scores are NaN outside the final participant set; the recursion's
    # indicator makes those contributions zero
    s_last = np.where(np.isnan(out.scores[-1]), 0.0, out.scores[-1])
    u_next = coef.phi * out.u[-1] + coef.alpha * s_last

    strengths: dict[str, float] = {}
    for team in parts:
        i = dataset.team_index(team)
        f = coef.omega[team] + float(u_next[i])
        for j, name in enumerate(dataset.predictor_names):
            row = (predictors_next or {}).get(team, {})
            if name not in row:
                raise ValidationError(
                    f"missing predictor value for team {team!r}, variable "
                    f"{name!r} at edition {t_next!r}"
                )
            v = float(row[name])
            if not math.isfinite(v):
                raise ValidationError(
                    f"non-finite predictor value for team {team!r}, variable "
                    f"{name!r} at edition {t_next!r}"
                )
            f += coef.beta[j] * v
        strengths[team] = float(f)
    return strengths


@dataclass(frozen=True)
class EditionEvaluation:
    """Scored one-step forecast for a single held-out edition."""

    edition: object
    participants: tuple[str, ...]
    strengths: dict[str, float]
    realized: tuple[str, ...]
    k_playoff: int
    loglik: float
    champion_prob: float
    medal_prob: float
    playoff_prob: float
    playoff_exact: bool
    modal: tuple[str, ...]
    modal_champion_hit: bool
    modal_medal_hit: bool
    modal_playoff_hit: bool
    rank_errors: dict[str, int]
    mae: float
    rmse: float


def evaluate_edition(
    forecast: Mapping[str, float],
    realized: Ranking,
    k_playoff: int,
    mc_draws: int = 1_000_000,
    rng: np.random.Generator | None = None,
    exact_cap: int = EXACT_CAP_DEFAULT,
    edition=None,
) -> EditionEvaluation:
    """Score a strength forecast against the realized ranking.

    Champion/medal/playoff values are the model probabilities of the realized
    winner, medal set (any order), and top-k set; the playoff set switches to
    Monte-Carlo (`mc_draws`, seeded `rng`) when k! exceeds `exact_cap`.
    """
    parts = tuple(forecast)
    if set(realized.ordering) != set(parts):
        raise ValidationError(
            "realized ranking must cover exactly the forecast participants; "
            f"forecast has {sorted(parts)}, realized has {sorted(realized.ordering)}"
        )
    n = len(parts)
    if not 3 <= k_playoff <= n:
        raise ValidationError(f"k_playoff must lie in [3, {n}], got {k_playoff}")

    f = {t: float(forecast[t]) for t in parts}
    winner = realized.ordering[0]
    medal_set = set(realized.ordering[:3])
    playoff_set = set(realized.ordering[:k_playoff])

    champion = champion_probability(f, winner)
    medal = top_k_set_probability(f, medal_set)
    exact = math.factorial(k_playoff) <= exact_cap
    if exact:
        playoff = top_k_set_probability(f, playoff_set, cap=exact_cap)
    else:
        playoff = top_k_set_probability(
            f,
            playoff_set,
            method="monte_carlo",
            rng=rng if rng is not None else np.random.default_rng(0),
            draws=mc_draws,
        )

    modal = modal_ranking(f)
    errors = {
        t: abs(modal.rank_of(t) - realized.rank_of(t)) for t in parts
    }
    errs = np.array(list(errors.values()), dtype=float)
    return EditionEvaluation(
        edition=edition,
        participants=parts,
        strengths=f,
        realized=realized.ordering,
        k_playoff=k_playoff,
        loglik=log_pmf(realized, f),
        champion_prob=champion,
        medal_prob=medal,
        playoff_prob=playoff,
        playoff_exact=exact,
        modal=modal.ordering,
        modal_champion_hit=modal.ordering[0] == winner,
        modal_medal_hit=set(modal.ordering[:3]) == medal_set,
        modal_playoff_hit=set(modal.ordering[:k_playoff]) == playoff_set,
        rank_errors=errors,
        mae=float(errs.mean()),
        rmse=float(np.sqrt((errs**2).mean())),
    )


@dataclass(frozen=True)
class ForecastAggregates:
    n_editions: int
    avg_loglik: float
    avg_champion_prob: float
    avg_medal_prob: float
    avg_playoff_prob: float
    mae: float
    rmse: float
    modal_champion_rate: float
    modal_medal_rate: float
    modal_playoff_rate: float


@dataclass(frozen=True)
class ForecastReport:
    spec: ModelSpec
    holdout: int
    k_playoff: int | None
    mc_draws: int
    seed: int
    rows: tuple[EditionEvaluation, ...]
    aggregates: ForecastAggregates
    notes: tuple[str, ...] = ()


def _aggregate(rows: Sequence[EditionEvaluation]) -> ForecastAggregates:
    def mean(vals):
        return float(np.mean(vals))

    return ForecastAggregates(
        n_editions=len(rows),
        avg_loglik=mean([r.loglik for r in rows]),
        avg_champion_prob=mean([r.champion_prob for r in rows]),
        avg_medal_prob=mean([r.medal_prob for r in rows]),
        avg_playoff_prob=mean([r.playoff_prob for r in rows]),
        mae=mean([r.mae for r in rows]),
        rmse=mean([r.rmse for r in rows]),
        modal_champion_rate=mean([r.modal_champion_hit for r in rows]),
        modal_medal_rate=mean([r.modal_medal_hit for r in rows]),
        modal_playoff_rate=mean([r.modal_playoff_hit for r in rows]),
    )


def rolling_evaluation(
    dataset: PanelDataset,
    spec: ModelSpec,
    holdout: int,
    k_playoff: int | None = None,
    options: FitOptions | None = None,
    mc_draws: int = 1_000_000,
    seed: int = 0,
    workers: int | None = None,
) -> ForecastReport:
    """Refit on each strictly-earlier window, forecast one step, score.

    Held-out editions are the last `holdout` ranked ones. Each window's fit is
    independent and cold-started, so evaluations may run concurrently; the
    Monte-Carlo stream for edition index q derives from (seed, q) regardless
    of scheduling.
    """
    sub = dataset.with_predictors(spec.predictors)
    ranked_times = [t for t, y in zip(sub.times, sub.rankings) if y is not None]
    if not 1 <= holdout < len(ranked_times):
        raise ValidationError(
            f"holdout must lie in [1, {len(ranked_times) - 1}] "
            f"(ranked editions minus one), got {holdout}"
        )
    held = ranked_times[-holdout:]

    def eval_one(q_t) -> EditionEvaluation:
        q, t = q_t
        train = sub.before(t)
        try:
            res = fit(train, spec, options=options)
        except ValidationError as exc:
            raise ValidationError(
                f"training window for edition {t!r} is unfittable: {exc}"
            ) from exc
        ti = sub.time_index(t)
        parts = sub.participants[ti]
        preds_next = {
            team: {
                name: float(sub.predictors[ti, sub.team_index(team), j])
                for j, name in enumerate(sub.predictor_names)
            }
            for team in parts
        }
        forecast = one_step_forecast(train, res.coef, t, parts, preds_next)
        k = k_playoff if k_playoff is not None else default_k_playoff(len(parts))
        return evaluate_edition(
            forecast,
            sub.rankings[ti],
            k_playoff=k,
            mc_draws=mc_draws,
            rng=np.random.default_rng([seed, q]),
            edition=t,
        )

    jobs = list(enumerate(held))
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = tuple(pool.map(eval_one, jobs))
    else:
        rows = tuple(eval_one(j) for j in jobs)

    notes = [_CAUTION_NOTE]
    mc_rows = [r.edition for r in rows if not r.playoff_exact]
    if mc_rows:
        notes.append(
            f"playoff probabilities for editions {mc_rows} are Monte-Carlo "
            f"estimates ({mc_draws} draws, seed {seed})"
        )
    return ForecastReport(
        spec=spec,
        holdout=holdout,
        k_playoff=k_playoff,
        mc_draws=mc_draws,
        seed=seed,
        rows=rows,
        aggregates=_aggregate(rows),
        notes=tuple(notes),
    )


@dataclass(frozen=True)
class LambdaSearch:
    best_lambda: float | None
    reports: dict[float, ForecastReport]
    failures: dict[float, str]


def lambda_grid_search(
    dataset: PanelDataset,
    spec: ModelSpec,
    grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    holdout: int = 16,
    k_playoff: int | None = None,
    options: FitOptions | None = None,
    mc_draws: int = 1_000_000,
    seed: int = 0,
    workers: int | None = None,
) -> LambdaSearch:
    """Rolling cross-validation over a penalty grid; the winner maximizes the
    average predictive log-likelihood (ties favor the smaller penalty).

    A failing grid point (typically lambda = 0 on a window violating the
    partition condition) is reported, not fatal, as long as others succeed.
    """
    grid = tuple(float(g) for g in grid)
    if not grid:
        raise ValidationError("penalty grid is empty")
    bad = [g for g in grid if not (math.isfinite(g) and g >= 0)]
    if bad:
        raise ValidationError(f"penalty grid values must be finite and >= 0, got {bad}")

    def run_one(lam: float):
        try:
            rep = rolling_evaluation(
                dataset,
                replace(spec, penalty_lambda=lam),
                holdout=holdout,
                k_playoff=k_playoff,
                options=options,
                mc_draws=mc_draws,
                seed=seed,
            )
            return lam, rep, None
        except DynrankError as exc:
            return lam, None, str(exc)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run_one, grid))
    else:
        outcomes = [run_one(lam) for lam in grid]

    reports: dict[float, ForecastReport] = {}
    failures: dict[float, str] = {}
    for lam, rep, err in outcomes:
        if rep is not None:
            reports[lam] = rep
        else:
            failures[lam] = err
    best = (
        max(reports, key=lambda lam: (reports[lam].aggregates.avg_loglik, -lam))
        if reports
        else None
    )
    return LambdaSearch(best_lambda=best, reports=reports, failures=failures)


def forecast_report_to_dict(report: ForecastReport) -> dict:
    """JSON-ready view with a stable key order."""
    rows = []
    for r in report.rows:
        rows.append(
            {
                "edition": r.edition,
                "participants": list(r.participants),
                "strengths": {t: float(v) for t, v in r.strengths.items()},
                "realized": list(r.realized),
                "k_playoff": r.k_playoff,
                "loglik": float(r.loglik),
                "champion_prob": float(r.champion_prob),
                "medal_prob": float(r.medal_prob),
                "playoff_prob": float(r.playoff_prob),
                "playoff_exact": r.playoff_exact,
                "modal": list(r.modal),
                "modal_champion_hit": r.modal_champion_hit,
                "modal_medal_hit": r.modal_medal_hit,
                "modal_playoff_hit": r.modal_playoff_hit,
                "rank_errors": {t: int(e) for t, e in r.rank_errors.items()},
                "mae": float(r.mae),
                "rmse": float(r.rmse),
            }
        )
    agg = report.aggregates
    return {
        "spec": {
            "name": report.spec.name,
            "predictors": list(report.spec.predictors),
            "include_dynamics": report.spec.include_dynamics,
            "bounds_regime": report.spec.bounds_regime,
            "penalty_lambda": float(report.spec.penalty_lambda),
        },
        "holdout": report.holdout,
        "k_playoff": report.k_playoff,
        "mc_draws": report.mc_draws,
        "seed": report.seed,
        "rows": rows,
        "aggregates": {
            "n_editions": agg.n_editions,
            "avg_loglik": float(agg.avg_loglik),
            "avg_champion_prob": float(agg.avg_champion_prob),
            "avg_medal_prob": float(agg.avg_medal_prob),
            "avg_playoff_prob": float(agg.avg_playoff_prob),
            "mae": float(agg.mae),
            "rmse": float(agg.rmse),
            "modal_champion_rate": float(agg.modal_champion_rate),
            "modal_medal_rate": float(agg.modal_medal_rate),
            "modal_playoff_rate": float(agg.modal_playoff_rate),
        },
        "notes": list(report.notes),
    }


FORECAST_CSV_HEADER = (
    "edition",
    "n_participants",
    "k_playoff",
    "playoff_exact",
    "loglik",
    "champion_prob",
    "medal_prob",
    "playoff_prob",
    "modal_champion_hit",
    "modal_medal_hit",
    "modal_playoff_hit",
    "mae",
    "rmse",
)


def forecast_report_rows(report: ForecastReport) -> tuple[tuple[str, ...], list[list]]:
    """Flat CSV layout: one row per held-out edition plus a final AGG row."""
    rows: list[list] = []
    for r in report.rows:
        rows.append(
            [
                r.edition,
                len(r.participants),
                r.k_playoff,
                r.playoff_exact,
                r.loglik,
                r.champion_prob,
                r.medal_prob,
                r.playoff_prob,
                r.modal_champion_hit,
                r.modal_medal_hit,
                r.modal_playoff_hit,
                r.mae,
                r.rmse,
            ]
        )
    agg = report.aggregates
    rows.append(
        [
            "AGG",
            agg.n_editions,
            None,
            None,
            agg.avg_loglik,
            agg.avg_champion_prob,
            agg.avg_medal_prob,
            agg.avg_playoff_prob,
            agg.modal_champion_rate,
            agg.modal_medal_rate,
            agg.modal_playoff_rate,
            agg.mae,
            agg.rmse,
        ]
    )
    return FORECAST_CSV_HEADER, rows
