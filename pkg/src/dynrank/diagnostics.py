"""Exploratory correlation diagnostics on rank panels.

Ranks enter as raw integers (1 = champion) and correlations are Pearson.
Bands are 95% percentile bootstrap over i.i.d. resampling of the matched
(team, edition-pair) observations; replication streams derive from
(seed, lag), so results do not depend on evaluation order.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .filtering import PanelDataset

__all__ = [
    "CorrelationReport",
    "LagCorrelation",
    "PredictorCorrelations",
    "correlation_report_rows",
    "correlation_report_to_dict",
    "cross_correlation",
    "predictor_correlations_to_dict",
    "predictor_rank_correlations",
    "rank_autocorrelation",
]

_AUTO_PAIRING = (
    "teams present in both editions of each (q, q+lag) pair, q indexing "
    "ranked editions in chronological order"
)
_CROSS_PAIRING = (
    "teams ranked in tournament A at year y and in tournament B at year "
    "y-lag, matched by calendar year label"
)


@dataclass(frozen=True)
class LagCorrelation:
    lag: int
    n_pairs: int
    estimate: float | None
    lo: float | None
    hi: float | None
    note: str | None = None


@dataclass(frozen=True)
class CorrelationReport:
    kind: str
    pairing: str
    replications: int
    seed: int
    lags: tuple[LagCorrelation, ...]


def _pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    if x.size < 2:
        return None
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc @ xc) * (yc @ yc))
    if denom <= 0.0:
        return None
    return float(np.clip((xc @ yc) / denom, -1.0, 1.0))


def _bootstrap_band(
    pairs: np.ndarray, replications: int, rng: np.random.Generator
) -> tuple[float | None, float | None, str | None]:
    n = pairs.shape[0]
    idx = rng.integers(0, n, size=(replications, n))
    xs = pairs[idx, 0]
    ys = pairs[idx, 1]
    xc = xs - xs.mean(axis=1, keepdims=True)
    yc = ys - ys.mean(axis=1, keepdims=True)
    denom = np.sqrt((xc * xc).sum(axis=1) * (yc * yc).sum(axis=1))
    ok = denom > 0.0
    if not ok.any():
        return None, None, "bootstrap degenerate: every resample had zero variance"
    r = np.clip((xc * yc).sum(axis=1)[ok] / denom[ok], -1.0, 1.0)
    lo, hi = np.quantile(r, [0.025, 0.975])
    return float(lo), float(hi), None


def _lag_entry(
    lag: int,
    pairs: list[tuple[float, float]],
    replications: int,
    seed: int,
    absent_note: str,
) -> LagCorrelation:
    arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
    est = _pearson(arr[:, 0], arr[:, 1]) if len(pairs) else None
    if est is None:
        note = absent_note if not pairs else "zero rank variance among pairs"
        return LagCorrelation(lag, len(pairs), None, None, None, note)
    rng = np.random.default_rng([seed, lag % (2**32)])
    lo, hi, note = _bootstrap_band(arr, replications, rng)
    if lo is None:
        lo = hi = est
    widened = lo > est or hi < est
    lo, hi = min(lo, est), max(hi, est)
    if widened:
        extra = "band widened to contain the point estimate"
        note = f"{note}; {extra}" if note else extra
    return LagCorrelation(lag, len(pairs), est, lo, hi, note)


def _rank_maps(panel: PanelDataset) -> list[tuple[int, dict[str, int]]]:
    out = []
    for t, y in zip(panel.times, panel.rankings):
        if y is not None:
            out.append((t, {team: r + 1 for r, team in enumerate(y.ordering)}))
    return out


def rank_autocorrelation(
    panel: PanelDataset,
    lags: Sequence[int],
    replications: int = 2000,
    seed: int = 0,
) -> CorrelationReport:
    """Rank autocorrelation at each lag, pooling (team, edition-pair)
    observations across the panel's ranked editions."""
    if any(lag < 1 for lag in lags):
        raise ValidationError(f"lags must be >= 1, got {list(lags)}")
    ranked = _rank_maps(panel)
    entries = []
    for lag in lags:
        pairs: list[tuple[float, float]] = []
        for q in range(len(ranked) - lag):
            _, first = ranked[q]
            _, second = ranked[q + lag]
            pairs.extend(
                (first[team], second[team]) for team in first if team in second
            )
        entries.append(
            _lag_entry(lag, pairs, replications, seed, "no edition pairs at this lag")
        )
    return CorrelationReport(
        kind="autocorrelation",
        pairing=_AUTO_PAIRING,
        replications=replications,
        seed=seed,
        lags=tuple(entries),
    )


def cross_correlation(
    panel_a: PanelDataset,
    panel_b: PanelDataset,
    lags: Sequence[int],
    replications: int = 2000,
    seed: int = 0,
) -> CorrelationReport:
    """Correlation of panel-a ranks at year y with panel-b ranks at y-lag,
    matched by team and calendar year label."""
    a = dict(_rank_maps(panel_a))
    b = dict(_rank_maps(panel_b))
    entries = []
    for lag in lags:
        pairs: list[tuple[float, float]] = []
        for year, ranks_a in a.items():
            ranks_b = b.get(year - lag)
            if ranks_b is None:
                continue
            pairs.extend(
                (ranks_a[team], ranks_b[team]) for team in ranks_a if team in ranks_b
            )
        entries.append(
            _lag_entry(
                lag, pairs, replications, seed, "no matched year pairs at this lag"
            )
        )
    return CorrelationReport(
        kind="cross-correlation",
        pairing=_CROSS_PAIRING,
        replications=replications,
        seed=seed,
        lags=tuple(entries),
    )


@dataclass(frozen=True)
class PredictorCorrelations:
    labels: tuple[str, ...]
    matrix: tuple[tuple[float | None, ...], ...]
    notes: tuple[str, ...]


def predictor_rank_correlations(panel: PanelDataset) -> PredictorCorrelations:
    """Pairwise Pearson correlations among rank and every predictor over
    participating cells of ranked editions. Zero-variance columns produce
    undefined (None) entries with a note, never NaN."""
    labels = ("rank",) + panel.predictor_names
    rows: list[list[float]] = []
    for ti, y in enumerate(panel.rankings):
        if y is None:
            continue
        for r, team in enumerate(y.ordering, start=1):
            i = panel.team_index(team)
            rows.append([float(r)] + [float(v) for v in panel.predictors[ti, i]])
    if not rows:
        raise ValidationError("no ranked editions: nothing to correlate")
    data = np.asarray(rows)
    k = len(labels)
    variant = [float(np.ptp(data[:, j])) > 0.0 for j in range(k)]
    notes = tuple(
        f"column {labels[j]!r} has zero variance; its correlations are undefined"
        for j in range(k)
        if not variant[j]
    )
    matrix: list[list[float | None]] = [[None] * k for _ in range(k)]
    for i in range(k):
        if not variant[i]:
            continue
        matrix[i][i] = 1.0
        for j in range(i + 1, k):
            if not variant[j]:
                continue
            r = _pearson(data[:, i], data[:, j])
            matrix[i][j] = matrix[j][i] = r
    return PredictorCorrelations(
        labels=labels,
        matrix=tuple(tuple(row) for row in matrix),
        notes=notes,
    )


def correlation_report_to_dict(report: CorrelationReport) -> dict:
    return {
        "kind": report.kind,
        "pairing": report.pairing,
        "replications": report.replications,
        "seed": report.seed,
        "lags": [
            {
                "lag": e.lag,
                "n_pairs": e.n_pairs,
                "estimate": e.estimate,
                "lo": e.lo,
                "hi": e.hi,
                "note": e.note,
            }
            for e in report.lags
        ],
    }


def correlation_report_rows(report: CorrelationReport):
    """Tidy plot-ready rows: one per lag."""
    header = ("lag", "estimate", "lo", "hi")
    rows = [[e.lag, e.estimate, e.lo, e.hi] for e in report.lags]
    return header, rows


def predictor_correlations_to_dict(report: PredictorCorrelations) -> dict:
    return {
        "labels": list(report.labels),
        "matrix": [list(row) for row in report.matrix],
        "notes": list(report.notes),
    }
