"""Plackett-Luce ranking distribution over a finite participant set.

Strengths live on the log scale: a ranking is built rank by rank, each slot
going to team i with probability exp(f_i) / sum of exp(f_j) over the teams
still unplaced. All likelihood arithmetic stays in log space with suffix
log-sum-exp so strengths may differ by hundreds of units.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence, Set
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ValidationError

__all__ = [
    "EXACT_CAP_DEFAULT",
    "Ranking",
    "champion_probability",
    "log_pmf",
    "modal_ranking",
    "sample_ranking",
    "score",
    "top_k_set_probability",
]

# exact top-k enumeration/DP allowed while |set|! stays at or below this
EXACT_CAP_DEFAULT = 40_320  # 8!


@dataclass(frozen=True)
class Ranking:
    """An observed ordering of teams, best-ranked first.

    Position r (1-based) holds the team that finished with rank r. Entries
    must be distinct and there must be at least two of them; a single team
    carries no ranking information.
    """

    ordering: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "ordering", tuple(self.ordering))
        if len(self.ordering) < 2:
            raise ValidationError(
                f"ranking needs at least 2 teams, got {len(self.ordering)}"
            )
        if len(set(self.ordering)) != len(self.ordering):
            raise ValidationError(f"ranking has duplicate entries: {self.ordering}")

    def __len__(self) -> int:
        return len(self.ordering)

    def rank_of(self, team: str) -> int:
        """1-based rank of `team`; raises if absent."""
        try:
            return self.ordering.index(team) + 1
        except ValueError:
            raise ValidationError(f"team {team!r} not in ranking") from None

    def ranks(self) -> dict[str, int]:
        return {t: r + 1 for r, t in enumerate(self.ordering)}


StrengthVector = Mapping[str, float]


def _strengths_in_order(teams: Sequence[str], f: StrengthVector) -> np.ndarray:
    vals = np.empty(len(teams))
    for i, t in enumerate(teams):
        try:
            v = f[t]
        except KeyError:
            raise ValidationError(f"no strength entry for team {t!r}") from None
        if not math.isfinite(v):
            raise ValidationError(f"non-finite strength for team {t!r}: {v!r}")
        vals[i] = v
    return vals


def _suffix_logmass(fo: np.ndarray) -> np.ndarray:
    # g[r] = log sum_{s >= r} exp(fo[s])
    return np.logaddexp.accumulate(fo[::-1])[::-1]


def log_pmf(ranking: Ranking, f: StrengthVector) -> float:
    """Log probability mass of `ranking` under strengths `f`.

    Invariant to adding a constant to every strength; always <= 0.
    """
    fo = _strengths_in_order(ranking.ordering, f)
    g = _suffix_logmass(fo)
    return float(np.sum(fo - g))


def score(ranking: Ranking, f: StrengthVector) -> dict[str, float]:
    """Gradient of log_pmf with respect to each participating strength.

    The team ranked k gets 1 minus the sum over rounds r <= k of its share of
    the round-r choice mass. Components sum to zero: each round's shares sum
    to one across teams.
    """
    fo = _strengths_in_order(ranking.ordering, f)
    g = _suffix_logmass(fo)
    # c[k] = log sum_{r <= k} exp(-g[r]); each exp(fo[k] + c[k]) term is a
    # sum of probabilities, bounded by k+1, so plain exp is safe
    c = np.logaddexp.accumulate(-g)
    grads = 1.0 - np.exp(fo + c)
    return {t: float(v) for t, v in zip(ranking.ordering, grads)}


def sample_ranking(f: StrengthVector, rng: np.random.Generator) -> Ranking:
    """Draw one ranking: fill rank 1, 2, ... by sequential softmax choice
    among the teams still unplaced."""
    teams = list(f)
    if len(teams) < 2:
        raise ValidationError(
            f"need at least 2 participants to sample a ranking, got {len(teams)}"
        )
    vals = _strengths_in_order(teams, f)
    w = [math.exp(v) for v in vals - vals.max()]
    order: list[str] = []
    while len(w) > 1:
        total = math.fsum(w)
        u = rng.random() * total
        acc = 0.0
        pick = len(w) - 1
        for i, wi in enumerate(w):
            acc += wi
            if u < acc:
                pick = i
                break
        order.append(teams.pop(pick))
        w.pop(pick)
    order.append(teams[0])
    return Ranking(tuple(order))


def sample_orderings_matrix(
    f_values: np.ndarray, draws: int, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized batch sampler: `draws` orderings as an index matrix.

    Uses the Gumbel-argmax identity, which reproduces the sequential-choice
    law exactly. Row d holds positions into `f_values`, best first.
    """
    z = f_values[None, :] + rng.gumbel(size=(draws, f_values.size))
    return np.argsort(-z, axis=1, kind="stable")


def champion_probability(f: StrengthVector, team: str) -> float:
    """Probability that `team` takes rank 1: its softmax share of the field."""
    teams = list(f)
    if team not in f:
        raise ValidationError(f"team {team!r} not among participants")
    vals = _strengths_in_order(teams, f)
    from scipy.special import logsumexp

    return float(np.exp(f[team] - logsumexp(vals)))


def top_k_set_probability(
    f: StrengthVector,
    team_set: Set[str] | Iterable[str],
    method: str = "exact",
    rng: np.random.Generator | None = None,
    draws: int = 100_000,
    cap: int = EXACT_CAP_DEFAULT,
) -> float:
    """Probability that `team_set` occupies ranks 1..k in any internal order.

    Exact mode sums the sequential-choice product over every ordering of the
    set via a subset recursion (O(2^k k) rather than k! terms) and is refused
    when k! exceeds `cap`. Monte-Carlo mode estimates the frequency from
    sampled rankings.
    """
    team_set = frozenset(team_set)
    teams = list(f)
    if not team_set <= set(teams):
        missing = sorted(team_set - set(teams))
        raise ValidationError(f"teams not among participants: {missing}")
    if not team_set:
        raise ValidationError("team_set is empty")
    k = len(team_set)
    vals = _strengths_in_order(teams, f)

    if method == "exact":
        if math.factorial(k) > cap:
            raise CapacityError(
                f"exact top-k with k={k} exceeds cap {cap} ({k}! orderings); "
                "use method='monte_carlo'"
            )
        return _top_k_exact(teams, vals, team_set)
    if method == "monte_carlo":
        if rng is None:
            raise ValidationError("monte_carlo method needs an rng")
        order = sample_orderings_matrix(vals, draws, rng)
        in_set = np.array([t in team_set for t in teams])
        hits = in_set[order[:, :k]].all(axis=1)
        return float(hits.mean())
    raise ValidationError(f"unknown method {method!r}")


def _top_k_exact(teams: list[str], vals: np.ndarray, team_set: frozenset[str]) -> float:
    shifted = np.exp(vals - vals.max())  # all weights <= 1, no overflow
    idx = [i for i, t in enumerate(teams) if t in team_set]
    w = [float(shifted[i]) for i in idx]
    rest = float(shifted.sum() - sum(w))
    k = len(w)
    total_set = math.fsum(w)
    # q[mask] = P(the teams in mask occupy the first popcount(mask) ranks)
    q = np.zeros(1 << k)
    q[0] = 1.0
    for mask in range(1, 1 << k):
        placed = math.fsum(w[i] for i in range(k) if mask >> i & 1)
        acc = 0.0
        for i in range(k):
            if mask >> i & 1:
                denom = rest + total_set - placed + w[i]
                acc += q[mask ^ (1 << i)] * w[i] / denom
        q[mask] = acc
    return float(q[(1 << k) - 1])


def modal_ranking(f: StrengthVector) -> Ranking:
    """Most probable ranking: teams by descending strength.

    Ties break on the lexicographic team identifier so repeated calls agree
    across runs and platforms.
    """
    teams = list(f)
    _strengths_in_order(teams, f)  # validates finiteness
    ordered = sorted(teams, key=lambda t: (-f[t], t))
    return Ranking(tuple(ordered))
