"""Synthetic panel generation from known coefficients.

The generative pass below intentionally mirrors the model definition with
plain Python dicts and the distribution-level primitives, not the production
filter kernel, so tests can compare the two independent routes.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .filtering import Coefficients, PanelDataset
from .plackett import Ranking, log_pmf, sample_ranking, score

__all__ = ["SimulationResult", "simulate_panel"]


@dataclass(frozen=True)
class SimulationResult:
    dataset: PanelDataset
    loglik: float  # log density of the sampled rankings along the path


def simulate_panel(
    teams: Sequence[str],
    n_times: int,
    coef: Coefficients,
    rng: np.random.Generator,
    n_vars: int | None = None,
    participation_prob: float = 1.0,
    gap_indices: Iterable[int] = (),
    start_time: int = 2000,
    predictor_scale: float = 1.0,
) -> SimulationResult:
    """Sample a panel from the score-driven model under `coef`.

    Predictors are i.i.d. normal draws; each team participates independently
    with `participation_prob` (editions are redrawn until at least two teams
    show up); `gap_indices` marks cancelled editions by position.
    """
    teams = list(teams)
    n_teams = len(teams)
    if n_teams < 2:
        raise ValidationError("need at least 2 teams to simulate")
    m = len(coef.beta) if n_vars is None else n_vars
    if m != len(coef.beta):
        raise ValidationError(
            f"n_vars {m} does not match beta length {len(coef.beta)}"
        )
    gaps = set(gap_indices)

    x = rng.normal(0.0, predictor_scale, size=(n_times, n_teams, m))
    u = dict.fromkeys(teams, 0.0)
    prev_scores: dict[str, float] = {}
    participants = []
    rankings: list[Ranking | None] = []
    total = 0.0

    for t in range(n_times):
        u = {
            team: coef.phi * u[team] + coef.alpha * prev_scores.get(team, 0.0)
            for team in teams
        }
        if t in gaps:
            group: list[str] = []
        elif participation_prob >= 1.0:
            group = list(teams)
        else:
            while True:
                mask = rng.random(n_teams) < participation_prob
                if mask.sum() >= 2:
                    break
            group = [team for team, keep in zip(teams, mask) if keep]
        participants.append(tuple(group))

        if len(group) >= 2:
            f_t = {
                team: coef.omega[team]
                + float(x[t, teams.index(team)] @ np.asarray(coef.beta))
                + u[team]
                for team in group
            }
            y = sample_ranking(f_t, rng)
            total += log_pmf(y, f_t)
            prev_scores = score(y, f_t)
            rankings.append(y)
        else:
            prev_scores = {}
            rankings.append(None)

    dataset = PanelDataset(
        teams=tuple(teams),
        times=tuple(range(start_time, start_time + n_times)),
        participants=tuple(participants),
        rankings=tuple(rankings),
        predictor_names=tuple(f"x{j + 1}" for j in range(m)),
        predictors=x,
    )
    return SimulationResult(dataset=dataset, loglik=total)
