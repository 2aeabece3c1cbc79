"""Ingestion of tournament results and roster statistics into panels.

Two input files, both RFC-4180 CSV with exact header rows:

    results.csv  edition_year, tournament_code, team_id, final_rank, division_tier
    rosters.csv  edition_year, tournament_code, team_id, avg_height_cm,
                 avg_weight_kg, avg_age_years, iihf_games_avg, nhl_games_avg,
                 other_league_games_avg, hosting_flag

division_tier 1 is the top division; higher tiers feed reciprocal-rank
predictors through global-rank continuation (a tier-2 winner ranks just below
the last tier-1 team that year).
"""

from __future__ import annotations

import csv
import math
from collections import Counter, defaultdict
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace

import networkx as nx
import numpy as np

from .errors import ValidationError
from .estimate import PartitionReport, check_partition_condition
from .filtering import PanelDataset
from .plackett import Ranking

__all__ = [
    "BuildConfig",
    "BuildReport",
    "RESULTS_COLUMNS",
    "ROSTERS_COLUMNS",
    "ROSTER_STAT_COLUMNS",
    "ResultRow",
    "RosterRow",
    "apply_merges",
    "build_panel",
    "build_report_to_dict",
    "five_number_summary",
    "panel_from_dict",
    "panel_to_dict",
    "read_results_csv",
    "read_rosters_csv",
    "reciprocal_rank_predictor",
    "summary_stats",
]

RESULTS_COLUMNS = (
    "edition_year",
    "tournament_code",
    "team_id",
    "final_rank",
    "division_tier",
)

ROSTER_STAT_COLUMNS = (
    "avg_height_cm",
    "avg_weight_kg",
    "avg_age_years",
    "iihf_games_avg",
    "nhl_games_avg",
    "other_league_games_avg",
    "hosting_flag",
)

ROSTERS_COLUMNS = ("edition_year", "tournament_code", "team_id") + ROSTER_STAT_COLUMNS

# plausibility windows for roster averages; hosting handled separately
_WINDOWS = {
    "avg_height_cm": (150.0, 220.0),
    "avg_weight_kg": (50.0, 130.0),
    "avg_age_years": (15.0, 45.0),
    "iihf_games_avg": (0.0, math.inf),
    "nhl_games_avg": (0.0, math.inf),
    "other_league_games_avg": (0.0, math.inf),
}


@dataclass(frozen=True)
class ResultRow:
    year: int
    tournament: str
    team: str
    rank: int
    tier: int


@dataclass(frozen=True)
class RosterRow:
    year: int
    tournament: str
    team: str
    values: Mapping[str, float]


def _scan_csv(path, columns: tuple[str, ...]):
    """Yield (lineno, record) for data rows after checking the exact header.
    Comment lines (leading '#') and blank lines are skipped."""
    with open(path, newline="", encoding="utf-8") as fh:
        raw = [
            (no, rec)
            for no, rec in enumerate(csv.reader(fh), start=1)
            if rec and not rec[0].lstrip().startswith("#")
            and any(cell.strip() for cell in rec)
        ]
    if not raw:
        raise ValidationError(f"{path}: no header row found")
    _, header = raw[0]
    got = tuple(h.strip() for h in header)
    if got != columns:
        raise ValidationError(
            f"{path}: header must be exactly {list(columns)}, got {list(got)}"
        )
    return raw[1:]


def read_results_csv(path) -> tuple[ResultRow, ...]:
    """Parse and validate a results file: typed columns, positive years, and
    per-(year, tournament, tier) ranks forming exactly 1..n."""
    rows: list[tuple[int, ResultRow]] = []
    for no, rec in _scan_csv(path, RESULTS_COLUMNS):
        if len(rec) != len(RESULTS_COLUMNS):
            raise ValidationError(
                f"{path} row {no}: expected {len(RESULTS_COLUMNS)} fields, got {len(rec)}"
            )
        try:
            year = int(rec[0])
            rank = int(rec[3])
            tier = int(rec[4])
        except ValueError as exc:
            raise ValidationError(f"{path} row {no}: {exc}") from None
        tournament, team = rec[1].strip(), rec[2].strip()
        if year < 1:
            raise ValidationError(f"{path} row {no}: year must be positive, got {year}")
        if not tournament or not team:
            raise ValidationError(f"{path} row {no}: empty tournament or team id")
        if rank < 1 or tier < 1:
            raise ValidationError(
                f"{path} row {no}: rank and tier must be >= 1, got {rank}/{tier}"
            )
        rows.append((no, ResultRow(year, tournament, team, rank, tier)))

    groups: dict[tuple, list[tuple[int, ResultRow]]] = defaultdict(list)
    for no, r in rows:
        groups[(r.year, r.tournament, r.tier)].append((no, r))
    for (year, tournament, tier), members in groups.items():
        counts = Counter(r.team for _, r in members)
        dups = sorted(t for t, c in counts.items() if c > 1)
        if dups:
            where = [no for no, r in members if r.team in dups]
            raise ValidationError(
                f"{path}: duplicate team rows {dups} in edition "
                f"({year}, {tournament}, tier {tier}), rows {where}"
            )
        ranks = sorted(r.rank for _, r in members)
        if ranks != list(range(1, len(ranks) + 1)):
            raise ValidationError(
                f"{path}: ranks in edition ({year}, {tournament}, tier {tier}) "
                f"must be exactly 1..{len(ranks)}, got {ranks}"
            )
    return tuple(r for _, r in rows)


def read_rosters_csv(path) -> tuple[RosterRow, ...]:
    """Parse and validate a roster file: plausibility windows on the averages,
    binary hosting flag, one row per (year, tournament, team)."""
    rows: list[RosterRow] = []
    seen: dict[tuple, int] = {}
    for no, rec in _scan_csv(path, ROSTERS_COLUMNS):
        if len(rec) != len(ROSTERS_COLUMNS):
            raise ValidationError(
                f"{path} row {no}: expected {len(ROSTERS_COLUMNS)} fields, got {len(rec)}"
            )
        try:
            year = int(rec[0])
            vals = {
                name: float(rec[3 + j]) for j, name in enumerate(ROSTER_STAT_COLUMNS)
            }
        except ValueError as exc:
            raise ValidationError(f"{path} row {no}: {exc}") from None
        tournament, team = rec[1].strip(), rec[2].strip()
        if year < 1:
            raise ValidationError(f"{path} row {no}: year must be positive, got {year}")
        if not tournament or not team:
            raise ValidationError(f"{path} row {no}: empty tournament or team id")
        for name, (lo, hi) in _WINDOWS.items():
            v = vals[name]
            if not (math.isfinite(v) and lo <= v <= hi):
                raise ValidationError(
                    f"{path} row {no}: {name}={v} outside plausible window [{lo}, {hi}]"
                )
        if vals["hosting_flag"] not in (0.0, 1.0):
            raise ValidationError(
                f"{path} row {no}: hosting_flag must be 0 or 1, got {vals['hosting_flag']}"
            )
        key = (year, tournament, team)
        if key in seen:
            raise ValidationError(
                f"{path} row {no}: duplicate roster row for {key} (first at row {seen[key]})"
            )
        seen[key] = no
        rows.append(RosterRow(year, tournament, team, vals))
    return tuple(rows)


def _validate_merges(merges: Mapping[str, str]) -> None:
    for alias, target in merges.items():
        if alias == target or target in merges:
            raise ValidationError(
                "merge map must be flat (no chains or cycles): "
                f"{alias!r} -> {target!r}"
            )


def apply_merges(rows: Sequence, merges: Mapping[str, str]):
    """Rewrite team ids through the alias map (works for both row types)."""
    _validate_merges(merges)
    if not merges:
        return tuple(rows)
    return tuple(replace(r, team=merges.get(r.team, r.team)) for r in rows)


@dataclass(frozen=True)
class BuildConfig:
    """What to build: tournament, calendar span, identity fixes, exclusions,
    and the predictor columns to construct."""

    tournament: str
    start_year: int | None = None
    end_year: int | None = None
    merges: Mapping[str, str] = field(default_factory=dict)
    exclude_teams: tuple[str, ...] = ()
    drop_partition_violators: bool = False
    roster_predictors: tuple[str, ...] = ()
    reciprocal_predictors: Mapping[str, tuple[str, int]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.tournament:
            raise ValidationError("tournament code must be nonempty")
        object.__setattr__(self, "merges", dict(self.merges))
        object.__setattr__(self, "exclude_teams", tuple(self.exclude_teams))
        object.__setattr__(self, "roster_predictors", tuple(self.roster_predictors))
        object.__setattr__(
            self,
            "reciprocal_predictors",
            {k: (str(s), int(o)) for k, (s, o) in dict(self.reciprocal_predictors).items()},
        )
        _validate_merges(self.merges)
        unknown = [n for n in self.roster_predictors if n not in ROSTER_STAT_COLUMNS]
        if unknown:
            raise ValidationError(
                f"unknown roster predictors {unknown}; available: {list(ROSTER_STAT_COLUMNS)}"
            )
        names = list(self.roster_predictors) + list(self.reciprocal_predictors)
        dup = sorted(n for n, c in Counter(names).items() if c > 1)
        if dup:
            raise ValidationError(f"predictor names must be unique, got duplicates {dup}")
        for name, (src, off) in self.reciprocal_predictors.items():
            if off < 0:
                raise ValidationError(
                    f"reciprocal predictor {name!r}: lag offset must be >= 0, got {off}"
                )
        if (
            self.start_year is not None
            and self.end_year is not None
            and self.start_year > self.end_year
        ):
            raise ValidationError(
                f"empty span: start_year {self.start_year} > end_year {self.end_year}"
            )


@dataclass(frozen=True)
class BuildReport:
    tournament: str
    start_year: int
    end_year: int
    n_editions: int
    n_ranked_editions: int
    teams: tuple[str, ...]
    gap_years: tuple[int, ...]
    merges: dict[str, str]
    excluded: tuple[str, ...]
    dropped: tuple[str, ...]
    partition: PartitionReport
    team_appearances: dict[str, int]


def reciprocal_rank_predictor(
    results: Sequence[ResultRow],
    source_tournament: str,
    offset: int,
    years: Sequence[int],
    teams: Sequence[str],
) -> dict[tuple[str, int], float]:
    """Reciprocal global rank of each team in the `offset`-years-earlier
    edition of `source_tournament`; 0 when absent or when that season's
    edition was not held. Lower-division ranks continue after the tiers above
    them (tier-2 rank 1 follows the last tier-1 team)."""
    rows = [r for r in results if r.tournament == source_tournament]
    if not rows:
        raise ValidationError(
            f"unknown tournament code {source_tournament!r}: no result rows"
        )
    by_year: dict[int, list[ResultRow]] = defaultdict(list)
    for r in rows:
        by_year[r.year].append(r)

    col: dict[tuple[str, int], float] = {}
    for y in years:
        rows_y = by_year.get(y - offset, [])
        global_rank: dict[str, int] = {}
        if rows_y:
            sizes = Counter(r.tier for r in rows_y)
            base, acc = {}, 0
            for tier in sorted(sizes):
                base[tier] = acc
                acc += sizes[tier]
            for r in rows_y:
                if r.team in global_rank:
                    raise ValidationError(
                        f"team {r.team!r} ranked in two divisions of "
                        f"{source_tournament} {y - offset}"
                    )
                global_rank[r.team] = base[r.tier] + r.rank
        for team in teams:
            g = global_rank.get(team)
            col[(team, y)] = 1.0 / g if g else 0.0
    return col


def _assemble(teams, years, by_year, predictor_names, x) -> PanelDataset:
    participants, rankings = [], []
    for y in years:
        ordered = tuple(r.team for r in by_year.get(y, []))
        participants.append(ordered)
        rankings.append(Ranking(ordered) if len(ordered) >= 2 else None)
    return PanelDataset(
        teams=tuple(teams),
        times=tuple(years),
        participants=tuple(participants),
        rankings=tuple(rankings),
        predictor_names=tuple(predictor_names),
        predictors=x,
    )


def build_panel(
    results: Sequence[ResultRow],
    rosters: Sequence[RosterRow],
    config: BuildConfig,
) -> tuple[PanelDataset, BuildReport]:
    """Assemble the estimation panel for one tournament.

    Applies the merge map, filters to the top division within the configured
    span, removes excluded teams (preserving the relative order of the rest),
    inserts cancelled editions for missing years, optionally drops teams
    outside the largest strongly connected component of the beats digraph,
    and populates the configured predictor columns for every participating
    cell (missing roster values are hard errors)."""
    results = apply_merges(results, config.merges)
    rosters = apply_merges(rosters, config.merges)

    top = [r for r in results if r.tournament == config.tournament and r.tier == 1]
    if not top:
        raise ValidationError(
            f"no top-division rows for tournament {config.tournament!r}"
        )
    excluded = tuple(config.exclude_teams)
    top = [r for r in top if r.team not in set(excluded)]
    data_years = sorted({r.year for r in top})
    start = config.start_year if config.start_year is not None else data_years[0]
    end = config.end_year if config.end_year is not None else data_years[-1]
    top = [r for r in top if start <= r.year <= end]
    if not top:
        raise ValidationError(
            f"no ranked editions within configured span {start}-{end}"
        )

    by_year: dict[int, list[ResultRow]] = defaultdict(list)
    for r in top:
        by_year[r.year].append(r)
    for y, rows_y in by_year.items():
        counts = Counter(r.team for r in rows_y)
        dups = sorted(t for t, c in counts.items() if c > 1)
        if dups:
            raise ValidationError(
                f"edition {y}: duplicate teams after merges: {dups}"
            )
        rows_y.sort(key=lambda r: r.rank)

    teams = sorted({r.team for r in top})
    years = list(range(start, end + 1))

    partition = check_partition_condition(_assemble(teams, years, by_year, (), None))
    dropped: tuple[str, ...] = ()
    if not partition.passed and config.drop_partition_violators:
        g = nx.DiGraph()
        g.add_nodes_from(teams)
        for rows_y in by_year.values():
            for i in range(len(rows_y)):
                for j in range(i + 1, len(rows_y)):
                    g.add_edge(rows_y[i].team, rows_y[j].team)
        sccs = sorted(
            nx.strongly_connected_components(g),
            key=lambda s: (-len(s), min(s)),
        )
        keep = sccs[0]
        dropped = tuple(t for t in teams if t not in keep)
        teams = sorted(keep)
        by_year = {
            y: [r for r in rows_y if r.team in keep]
            for y, rows_y in by_year.items()
        }
        by_year = {y: rows_y for y, rows_y in by_year.items() if rows_y}
        partition = check_partition_condition(
            _assemble(teams, years, by_year, (), None)
        )

    gap_years = tuple(y for y in years if not by_year.get(y))

    names = config.roster_predictors + tuple(config.reciprocal_predictors)
    x = np.zeros((len(years), len(teams), len(names)))
    team_pos = {t: i for i, t in enumerate(teams)}

    if config.roster_predictors:
        roster_map: dict[tuple[int, str], RosterRow] = {}
        for r in rosters:
            if r.tournament != config.tournament:
                continue
            key = (r.year, r.team)
            if key in roster_map:
                raise ValidationError(
                    f"duplicate roster rows for team {r.team!r} edition {r.year} "
                    "after merges"
                )
            roster_map[key] = r
        for y, rows_y in by_year.items():
            for r in rows_y:
                row = roster_map.get((y, r.team))
                for j, name in enumerate(config.roster_predictors):
                    if row is None:
                        raise ValidationError(
                            f"missing roster value for team {r.team!r}, edition "
                            f"{y}, variable {name!r}"
                        )
                    x[y - start, team_pos[r.team], j] = row.values[name]

    for j2, (name, (src, off)) in enumerate(config.reciprocal_predictors.items()):
        col = reciprocal_rank_predictor(results, src, off, years, teams)
        jj = len(config.roster_predictors) + j2
        for y, rows_y in by_year.items():
            for r in rows_y:
                x[y - start, team_pos[r.team], jj] = col[(r.team, y)]

    panel = _assemble(teams, years, by_year, names, x)
    appearances = {
        t: int(panel.participation_matrix[:, i].sum()) for i, t in enumerate(teams)
    }
    report = BuildReport(
        tournament=config.tournament,
        start_year=start,
        end_year=end,
        n_editions=len(years),
        n_ranked_editions=sum(1 for y in panel.rankings if y is not None),
        teams=tuple(teams),
        gap_years=gap_years,
        merges=dict(config.merges),
        excluded=excluded,
        dropped=dropped,
        partition=partition,
        team_appearances=appearances,
    )
    return panel, report


def five_number_summary(values) -> dict[str, float]:
    """Min, quartiles by the median-of-halves convention, max.

    With an odd count the middle value is excluded from both halves, so
    1..5 summarizes to (1, 1.5, 3, 4.5, 5)."""
    v = np.sort(np.asarray(list(values), dtype=float))
    if v.size == 0:
        raise ValidationError("cannot summarize an empty column")

    def med(a: np.ndarray) -> float:
        m = a.size // 2
        return float(a[m]) if a.size % 2 else float((a[m - 1] + a[m]) / 2.0)

    median = med(v)
    lower = v[: v.size // 2]
    upper = v[v.size // 2 + 1 :] if v.size % 2 else v[v.size // 2 :]
    return {
        "n": int(v.size),
        "min": float(v[0]),
        "q1": med(lower) if lower.size else median,
        "median": median,
        "q3": med(upper) if upper.size else median,
        "max": float(v[-1]),
    }


def summary_stats(panel: PanelDataset) -> dict[str, dict[str, float]]:
    """Five-number summary per predictor over participating cells."""
    part = panel.participation_matrix
    return {
        name: five_number_summary(panel.predictors[:, :, j][part])
        for j, name in enumerate(panel.predictor_names)
    }


def panel_to_dict(panel: PanelDataset) -> dict:
    """JSON-ready panel with a stable field order; round-trip exact."""
    return {
        "teams": list(panel.teams),
        "times": list(panel.times),
        "participants": [list(p) for p in panel.participants],
        "rankings": [list(y.ordering) if y is not None else None for y in panel.rankings],
        "predictor_names": list(panel.predictor_names),
        "predictors": panel.predictors.tolist(),
    }


def panel_from_dict(doc: Mapping) -> PanelDataset:
    required = ("teams", "times", "participants", "rankings", "predictor_names", "predictors")
    missing = [k for k in required if k not in doc]
    if missing:
        raise ValidationError(f"panel document missing fields {missing}")
    return PanelDataset(
        teams=tuple(doc["teams"]),
        times=tuple(doc["times"]),
        participants=tuple(tuple(p) for p in doc["participants"]),
        rankings=tuple(
            Ranking(tuple(y)) if y is not None else None for y in doc["rankings"]
        ),
        predictor_names=tuple(doc["predictor_names"]),
        predictors=np.asarray(doc["predictors"], dtype=float),
    )


def build_report_to_dict(report: BuildReport) -> dict:
    return {
        "tournament": report.tournament,
        "start_year": report.start_year,
        "end_year": report.end_year,
        "n_editions": report.n_editions,
        "n_ranked_editions": report.n_ranked_editions,
        "teams": list(report.teams),
        "gap_years": list(report.gap_years),
        "merges": dict(report.merges),
        "excluded": list(report.excluded),
        "dropped": list(report.dropped),
        "partition_check": {
            "passed": report.partition.passed,
            "partition": [list(p) for p in report.partition.partition]
            if report.partition.partition
            else None,
            "never_appearing": list(report.partition.never_appearing),
        },
        "team_appearances": dict(report.team_appearances),
    }
