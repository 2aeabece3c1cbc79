"""Independent oracles used to freeze expected values.

Everything here is deliberately naive: direct products, full permutation
enumeration, central finite differences. The package must agree with these,
never the other way around.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Mapping, Sequence


def pmf_product(ordering: Sequence[str], f: Mapping[str, float]) -> float:
    """Sequential-choice probability of `ordering`, evaluated as a plain
    float product. No log-space tricks on purpose."""
    remaining = sum(math.exp(f[t]) for t in ordering)
    p = 1.0
    for team in ordering:
        w = math.exp(f[team])
        p *= w / remaining
        remaining -= w
    return p


def all_orderings(teams: Sequence[str]) -> list[tuple[str, ...]]:
    return [tuple(p) for p in itertools.permutations(teams)]


def enum_top_k_probability(
    f: Mapping[str, float], team_set: frozenset[str] | set[str]
) -> float:
    """Probability that team_set occupies the first k ranks, by enumerating
    every ordering of the full field."""
    teams = sorted(f)
    k = len(team_set)
    total = 0.0
    for perm in itertools.permutations(teams):
        if set(perm[:k]) == set(team_set):
            total += pmf_product(perm, f)
    return total


def enum_champion_probability(f: Mapping[str, float], team: str) -> float:
    teams = sorted(f)
    return sum(
        pmf_product(perm, f)
        for perm in itertools.permutations(teams)
        if perm[0] == team
    )


def fd_gradient(fn, x, h: float = 1e-6):
    """Central finite-difference gradient of a scalar function of a 1-d
    numpy array."""
    import numpy as np

    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fn(x + e) - fn(x - e)) / (2.0 * h)
    return g
