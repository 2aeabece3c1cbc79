"""Score-driven time-varying strengths over a panel of ranked editions.

Each team's strength is a fixed effect plus a predictor regression plus an
autoregressive component u that is nudged by the ranking-likelihood gradient
of the edition just played:

    u[i,t] = phi * u[i,t-1] + 1{i played at t-1} * alpha * grad_i(f[t-1])
    f[i,t] = omega[i] + sum_j beta[j] * x[i,t,j] + u[i,t]   for participants

u starts at zero, is tracked for every registry team (absentees decay toward
zero), and an edition with an empty participant set contributes no gradient
to anyone. The recursion is jitted with numba when available; the plain
Python version is the fallback and the reference.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ValidationError
from .plackett import Ranking

__all__ = [
    "Coefficients",
    "FilterOutput",
    "PanelDataset",
    "filtered_loglik",
    "run_filter",
]


@dataclass(frozen=True)
class PanelDataset:
    """A registry of teams observed over an ordered sequence of editions.

    `participants[t]` lists the teams that played at `times[t]` (empty tuple
    encodes a cancelled edition); `rankings[t]` is the observed ordering over
    exactly those teams whenever two or more played. `predictors` is a
    (T, N, M) array in registry order; only participating cells are read.
    """

    teams: tuple[str, ...]
    times: tuple[int, ...]
    participants: tuple[tuple[str, ...], ...]
    rankings: tuple[Ranking | None, ...]
    predictor_names: tuple[str, ...] = ()
    predictors: np.ndarray | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "teams", tuple(self.teams))
        object.__setattr__(self, "times", tuple(self.times))
        object.__setattr__(self, "rankings", tuple(self.rankings))
        object.__setattr__(self, "predictor_names", tuple(self.predictor_names))
        if len(self.teams) < 2:
            raise ValidationError("need at least 2 registry teams")
        if len(set(self.teams)) != len(self.teams):
            raise ValidationError("duplicate team identifiers in registry")
        if len(self.times) < 1:
            raise ValidationError("need at least 1 edition")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValidationError(f"times must be strictly increasing: {self.times}")
        if not (len(self.participants) == len(self.rankings) == len(self.times)):
            raise ValidationError("participants/rankings/times lengths differ")

        index = {t: i for i, t in enumerate(self.teams)}
        object.__setattr__(self, "_index", index)
        norm = []
        for t, group in enumerate(self.participants):
            unknown = [x for x in group if x not in index]
            if unknown:
                raise ValidationError(
                    f"unknown participants at {self.times[t]}: {unknown}"
                )
            if len(set(group)) != len(group):
                raise ValidationError(f"duplicate participants at {self.times[t]}")
            norm.append(tuple(sorted(group, key=index.__getitem__)))
        object.__setattr__(self, "participants", tuple(norm))

        for t, (group, y) in enumerate(zip(self.participants, self.rankings)):
            if len(group) >= 2:
                if y is None:
                    raise ValidationError(
                        f"edition {self.times[t]} has {len(group)} participants "
                        "but no ranking"
                    )
                if set(y.ordering) != set(group):
                    raise ValidationError(
                        f"ranking at {self.times[t]} does not cover its "
                        f"participants: {sorted(set(y.ordering) ^ set(group))}"
                    )
            elif y is not None:
                raise ValidationError(
                    f"edition {self.times[t]} has <2 participants yet a ranking"
                )

        T, N, M = len(self.times), len(self.teams), len(self.predictor_names)
        x = self.predictors
        if x is None:
            x = np.zeros((T, N, M))
        x = np.asarray(x, dtype=float)
        if x.shape != (T, N, M):
            raise ValidationError(
                f"predictors shape {x.shape} != {(T, N, M)} (times, teams, variables)"
            )
        for t, group in enumerate(self.participants):
            for team in group:
                row = x[t, index[team]]
                if not np.isfinite(row).all():
                    j = int(np.flatnonzero(~np.isfinite(row))[0])
                    name = self.predictor_names[j]
                    raise ValidationError(
                        f"non-finite predictor {name!r} for {team} at {self.times[t]}"
                    )
        x = x.copy()
        x.flags.writeable = False
        object.__setattr__(self, "predictors", x)

    @property
    def n_teams(self) -> int:
        return len(self.teams)

    @property
    def n_times(self) -> int:
        return len(self.times)

    @property
    def n_vars(self) -> int:
        return len(self.predictor_names)

    def team_index(self, team: str) -> int:
        try:
            return self._index[team]
        except KeyError:
            raise ValidationError(f"unknown team {team!r}") from None

    def time_index(self, time: int) -> int:
        try:
            return self.times.index(time)
        except ValueError:
            raise ValidationError(f"unknown edition {time!r}") from None

    def with_predictors(self, names: tuple[str, ...] | list[str]) -> "PanelDataset":
        """View of the panel keeping only the named predictor columns, in the
        requested order."""
        names = tuple(names)
        unknown = [n for n in names if n not in self.predictor_names]
        if unknown:
            raise ValidationError(
                f"unknown predictors {unknown}; dataset has {list(self.predictor_names)}"
            )
        if names == self.predictor_names:
            return self
        cols = [self.predictor_names.index(n) for n in names]
        return PanelDataset(
            teams=self.teams,
            times=self.times,
            participants=self.participants,
            rankings=self.rankings,
            predictor_names=names,
            predictors=self.predictors[:, :, cols],
        )

    def before(self, time: int) -> "PanelDataset":
        """Strict-prefix view: every edition earlier than `time`, full registry.

        Cancelled editions stay in, so a filter run over the prefix ends one
        recursion step short of `time` exactly."""
        idx = sum(1 for t in self.times if t < time)
        if idx == 0:
            raise ValidationError(f"no editions before {time!r}")
        return PanelDataset(
            teams=self.teams,
            times=self.times[:idx],
            participants=self.participants[:idx],
            rankings=self.rankings[:idx],
            predictor_names=self.predictor_names,
            predictors=self.predictors[:idx],
        )

    @cached_property
    def participation_matrix(self) -> np.ndarray:
        part = np.zeros((self.n_times, self.n_teams), dtype=bool)
        for t, group in enumerate(self.participants):
            for team in group:
                part[t, self._index[team]] = True
        part.flags.writeable = False
        return part

    @cached_property
    def _kernel_args(self) -> tuple:
        """Flattened arrays consumed by the jitted recursion."""
        order_start = np.zeros(self.n_times + 1, dtype=np.int64)
        chunks = []
        for t, y in enumerate(self.rankings):
            if y is not None:
                chunks.append([self._index[x] for x in y.ordering])
                order_start[t + 1] = order_start[t] + len(y.ordering)
            else:
                order_start[t + 1] = order_start[t]
        order_flat = np.array(
            [i for chunk in chunks for i in chunk], dtype=np.int64
        )
        x = np.ascontiguousarray(np.nan_to_num(self.predictors, nan=0.0))
        return self.participation_matrix, x, order_flat, order_start


@dataclass(frozen=True)
class Coefficients:
    """Model coefficients: fixed effects (standardized to sum to zero),
    predictor loadings, decay phi and score step alpha."""

    omega: Mapping[str, float]
    beta: tuple[float, ...] = ()
    phi: float = 0.0
    alpha: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "omega", dict(self.omega))
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))

    def validate_for(self, dataset: PanelDataset) -> None:
        missing = [t for t in dataset.teams if t not in self.omega]
        extra = [t for t in self.omega if t not in dataset.teams]
        if missing or extra:
            raise ValidationError(
                f"omega does not match registry (missing {missing}, extra {extra})"
            )
        bad = [t for t, v in self.omega.items() if not math.isfinite(v)]
        if bad:
            raise ValidationError(f"non-finite omega for {bad}")
        total = math.fsum(self.omega[t] for t in dataset.teams)
        if abs(total) > 1e-10:
            raise ValidationError(
                f"omega must sum to 0 (standardization), got {total:.3e}"
            )
        if len(self.beta) != dataset.n_vars:
            raise ValidationError(
                f"beta has {len(self.beta)} entries, dataset declares "
                f"{dataset.n_vars} predictor variables"
            )
        for name, v in (("phi", self.phi), ("alpha", self.alpha), *zip(
            (f"beta[{n}]" for n in dataset.predictor_names), self.beta
        )):
            if not math.isfinite(v):
                raise ValidationError(f"non-finite coefficient {name} = {v!r}")

    def omega_vector(self, dataset: PanelDataset) -> np.ndarray:
        return np.array([self.omega[t] for t in dataset.teams])


@dataclass(frozen=True)
class FilterOutput:
    """Filtered path: u for every (time, team), strengths and scores where
    defined (NaN elsewhere), and the accumulated ranking log-likelihood."""

    teams: tuple[str, ...]
    times: tuple[int, ...]
    u: np.ndarray = field(repr=False)
    strengths: np.ndarray = field(repr=False)
    scores: np.ndarray = field(repr=False)
    loglik: float

    def strengths_at(self, t: int) -> dict[str, float]:
        """Strength mapping for the participants of edition index t."""
        row = self.strengths[t]
        return {x: float(row[i]) for i, x in enumerate(self.teams) if not np.isnan(row[i])}


def _recursion_py(omega, beta, phi, alpha, part, x, order_flat, order_start,
                  u, fmat, smat):
    T, N = part.shape
    M = beta.shape[0]
    uprev = np.zeros(N)
    sprev = np.zeros(N)
    loglik = 0.0
    for t in range(T):
        for i in range(N):
            u[t, i] = phi * uprev[i] + alpha * sprev[i]
            sprev[i] = 0.0
        for i in range(N):
            if part[t, i]:
                fx = omega[i] + u[t, i]
                for j in range(M):
                    fx += beta[j] * x[t, i, j]
                fmat[t, i] = fx
        lo = order_start[t]
        hi = order_start[t + 1]
        n = hi - lo
        if n >= 2:
            fo = np.empty(n)
            for r in range(n):
                fo[r] = fmat[t, order_flat[lo + r]]
            g = np.empty(n)
            g[n - 1] = fo[n - 1]
            for r in range(n - 2, -1, -1):
                g[r] = np.logaddexp(fo[r], g[r + 1])
            # c accumulates log sum of exp(-g[r]) over rounds played so far
            c = -g[0]
            for r in range(n):
                if r > 0:
                    c = np.logaddexp(c, -g[r])
                loglik += fo[r] - g[r]
                i = order_flat[lo + r]
                s = 1.0 - np.exp(fo[r] + c)
                smat[t, i] = s
                sprev[i] = s
        for i in range(N):
            uprev[i] = u[t, i]
    return loglik


try:  # pragma: no cover - exercised implicitly everywhere
    from numba import njit

    _recursion = njit(cache=True)(_recursion_py)
except ImportError:  # pragma: no cover
    _recursion = _recursion_py


def _loglik_arrays(dataset: PanelDataset, omega: np.ndarray, beta: np.ndarray,
                   phi: float, alpha: float) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    part, x, order_flat, order_start = dataset._kernel_args
    T, N = part.shape
    u = np.zeros((T, N))
    fmat = np.full((T, N), np.nan)
    smat = np.full((T, N), np.nan)
    loglik = _recursion(
        np.ascontiguousarray(omega, dtype=float),
        np.ascontiguousarray(beta, dtype=float),
        float(phi), float(alpha),
        part, x, order_flat, order_start, u, fmat, smat,
    )
    return float(loglik), u, fmat, smat


def run_filter(dataset: PanelDataset, coef: Coefficients) -> FilterOutput:
    """Run the recursion over the whole panel and return the filtered path."""
    coef.validate_for(dataset)
    loglik, u, fmat, smat = _loglik_arrays(
        dataset, coef.omega_vector(dataset), np.asarray(coef.beta, dtype=float),
        coef.phi, coef.alpha,
    )
    for a in (u, fmat, smat):
        a.flags.writeable = False
    return FilterOutput(
        teams=dataset.teams, times=dataset.times,
        u=u, strengths=fmat, scores=smat, loglik=loglik,
    )


def filtered_loglik(dataset: PanelDataset, coef: Coefficients) -> float:
    """Total ranking log-likelihood of the panel under the filtered strengths."""
    coef.validate_for(dataset)
    loglik, *_ = _loglik_arrays(
        dataset, coef.omega_vector(dataset), np.asarray(coef.beta, dtype=float),
        coef.phi, coef.alpha,
    )
    return loglik
