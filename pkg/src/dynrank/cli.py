"""Command-line front end.

One TOML file describes a run (data sources, model specs, optimizer and
forecast settings); subcommands execute the stages and drop deterministic
JSON/CSV artifacts into an output directory. Every artifact embeds a meta
block with the tool version, the sha256 of the config, and the seed, so a
result file can always be traced back to the exact invocation.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .dataio import (
    BuildConfig,
    build_panel,
    build_report_to_dict,
    panel_to_dict,
    read_results_csv,
    read_rosters_csv,
)
from .diagnostics import (
    correlation_report_rows,
    correlation_report_to_dict,
    cross_correlation,
    predictor_correlations_to_dict,
    predictor_rank_correlations,
    rank_autocorrelation,
)
from .errors import CapacityError, NumericalError, ValidationError
from .estimate import (
    FitOptions,
    FitResult,
    ModelComparison,
    ModelSpec,
    fit,
    fit_result_to_dict,
    model_table,
    profile_score_coefficient,
    render_model_table,
)
from .filtering import Coefficients
from .forecast import (
    DEFAULT_LAMBDA_GRID,
    forecast_report_rows,
    forecast_report_to_dict,
    lambda_grid_search,
)
from .serialize import config_digest, write_csv, write_json
from .simulate import simulate_panel

_DATA_KEYS = {
    "results", "rosters", "tournament", "start_year", "end_year", "merges",
    "exclude_teams", "drop_partition_violators", "roster_predictors",
    "reciprocal_predictors",
}
_SPEC_KEYS = {"name", "predictors", "include_dynamics", "bounds_regime", "penalty_lambda"}
_FIT_KEYS = {"restarts", "maxfev", "xatol", "fatol", "seed", "jitter"}
_FORECAST_KEYS = {"spec", "holdout", "k_playoff", "lambda_grid", "mc_draws", "seed", "workers"}
_DIAGNOSE_KEYS = {"lags", "replications", "seed", "cross"}
_PROFILE_KEYS = {"spec", "alpha_grid"}
_OUTPUT_KEYS = {"dir"}


def _check_keys(section: str, table, allowed: set) -> None:
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ValidationError(
            f"unknown [{section}] keys {unknown}; allowed: {sorted(allowed)}"
        )


def load_config(path) -> dict:
    if path is None:
        raise ValidationError("this command needs a config file (--config run.toml)")
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"config file not found: {p}")
    try:
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"config parse error in {p}: {exc}") from None


def _data_section(cfg: dict, config_dir: Path):
    data = cfg.get("data")
    if not data:
        raise ValidationError("config is missing the [data] section")
    _check_keys("data", data, _DATA_KEYS)
    for key in ("results", "tournament"):
        if key not in data:
            raise ValidationError(f"[data] must set {key}")
    results_path = config_dir / data["results"]
    if not results_path.is_file():
        raise ValidationError(f"results file not found: {results_path}")
    rosters_path = None
    if "rosters" in data:
        rosters_path = config_dir / data["rosters"]
        if not rosters_path.is_file():
            raise ValidationError(f"rosters file not found: {rosters_path}")

    recip = {}
    for name, v in dict(data.get("reciprocal_predictors", {})).items():
        if isinstance(v, dict):
            _check_keys(f"data.reciprocal_predictors.{name}", v, {"source", "offset"})
            if "source" not in v or "offset" not in v:
                raise ValidationError(
                    f"reciprocal predictor {name!r} needs source and offset"
                )
            recip[name] = (v["source"], v["offset"])
        else:
            try:
                src, off = v
            except (TypeError, ValueError):
                raise ValidationError(
                    f"reciprocal predictor {name!r} must be "
                    '{source = "WC", offset = 1} or ["WC", 1]'
                ) from None
            recip[name] = (src, off)

    config = BuildConfig(
        tournament=data["tournament"],
        start_year=data.get("start_year"),
        end_year=data.get("end_year"),
        merges=dict(data.get("merges", {})),
        exclude_teams=tuple(data.get("exclude_teams", ())),
        drop_partition_violators=bool(data.get("drop_partition_violators", False)),
        roster_predictors=tuple(data.get("roster_predictors", ())),
        reciprocal_predictors=recip,
    )
    return results_path, rosters_path, config


def _load_panel(cfg: dict, config_dir: Path, tournament: str | None = None):
    """Build the panel the config describes; `tournament` swaps in another
    code over the same files (rank columns only, used for cross-correlation)."""
    results_path, rosters_path, config = _data_section(cfg, config_dir)
    results = read_results_csv(results_path)
    if tournament is not None:
        config = replace(
            config,
            tournament=tournament,
            roster_predictors=(),
            reciprocal_predictors={},
            drop_partition_violators=False,
        )
        return build_panel(results, (), config)
    rosters = read_rosters_csv(rosters_path) if rosters_path else ()
    return build_panel(results, rosters, config)


def _spec_list(cfg: dict) -> list[ModelSpec]:
    raw = cfg.get("spec")
    if raw is None:
        return [
            ModelSpec(name="static", include_dynamics=False),
            ModelSpec(name="dynamic", include_dynamics=True),
        ]
    if isinstance(raw, dict):
        raw = [raw]
    specs = []
    for i, tab in enumerate(raw):
        _check_keys("spec", tab, _SPEC_KEYS)
        if "name" not in tab:
            raise ValidationError(f"[[spec]] entry {i + 1} has no name")
        kwargs = dict(tab)
        kwargs["predictors"] = tuple(tab.get("predictors", ()))
        specs.append(ModelSpec(**kwargs))
    names = [s.name for s in specs]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ValidationError(f"spec names must be unique: duplicate {dupes}")
    return specs


def _pick_spec(specs: Sequence[ModelSpec], name: str) -> ModelSpec:
    for s in specs:
        if s.name == name:
            return s
    raise ValidationError(
        f"unknown spec {name!r}: config defines {[s.name for s in specs]}"
    )


def _fit_options(cfg: dict, seed_override: int | None = None) -> FitOptions:
    tab = dict(cfg.get("fit", {}))
    _check_keys("fit", tab, _FIT_KEYS)
    if seed_override is not None:
        tab["seed"] = seed_override
    return FitOptions(**tab)


def _make_meta(command: str, config_path, seed) -> dict:
    return {
        "tool": "dynrank",
        "version": __version__,
        "command": command,
        "config_digest": config_digest(config_path),
        "seed": seed,
    }


def _meta_line(meta: dict) -> str:
    return " ".join(f"{k}={'none' if v is None else v}" for k, v in meta.items())


def _lam_tag(lam: float) -> str:
    """Shortest exact decimal for a grid value, fit for filenames (0.1, not
    the 17-digit canonical form)."""
    return repr(float(lam))


class _OutDir:
    """Creates the directory lazily so failed runs leave nothing behind."""

    def __init__(self, path: Path):
        self.path = path

    def json(self, name: str, doc: dict) -> Path:
        self.path.mkdir(parents=True, exist_ok=True)
        write_json(self.path / name, doc)
        return self.path / name

    def csv(self, name: str, header, rows, meta: dict) -> Path:
        self.path.mkdir(parents=True, exist_ok=True)
        write_csv(self.path / name, header, rows, meta=_meta_line(meta))
        return self.path / name


def _outdir(args, cfg: dict | None = None) -> _OutDir:
    raw = args.out_dir
    if raw is None and cfg is not None:
        output = cfg.get("output", {})
        _check_keys("output", output, _OUTPUT_KEYS)
        raw = output.get("dir")
    return _OutDir(Path(raw if raw is not None else "dynrank_out"))


def cmd_build(args) -> int:
    cfg = load_config(args.config)
    out = _outdir(args, cfg)
    panel, report = _load_panel(cfg, Path(args.config).parent)
    meta = _make_meta("build", args.config, args.seed)
    out.json("panel.json", {"meta": meta, "panel": panel_to_dict(panel)})
    out.json("build_report.json", {"meta": meta, "report": build_report_to_dict(report)})
    print(
        f"wrote panel.json, build_report.json to {out.path} "
        f"({panel.n_teams} teams, {report.n_ranked_editions} ranked editions)"
    )
    return 0


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    out = _outdir(args, cfg)
    specs = _spec_list(cfg)
    options = _fit_options(cfg, args.seed)
    if not args.all_specs:
        if not args.spec:
            raise ValidationError("pass --spec NAME or --all-specs")
        spec = _pick_spec(specs, args.spec)
    panel, _ = _load_panel(cfg, Path(args.config).parent)
    meta = _make_meta("fit", args.config, options.seed)

    if args.all_specs:
        comp = model_table(panel, specs, options=options)
        for col in comp.columns:
            if isinstance(col, FitResult):
                out.json(
                    f"fit_{col.spec.name}.json",
                    {"meta": meta, "fit": fit_result_to_dict(col)},
                )
        columns_doc = [
            fit_result_to_dict(c)
            if isinstance(c, FitResult)
            else {"name": c.name, "error": c.error}
            for c in comp.columns
        ]
        out.json(
            "model_table.json",
            {"meta": meta, "columns": columns_doc, "best_aic": comp.best_aic},
        )
        if args.format == "table":
            print(render_model_table(comp))
        else:
            fitted = sum(isinstance(c, FitResult) for c in comp.columns)
            print(f"wrote model_table.json and {fitted} fit documents to {out.path}")
        return 0

    res = fit(panel, spec, options=options)
    out.json(f"fit_{spec.name}.json", {"meta": meta, "fit": fit_result_to_dict(res)})
    if args.format == "table":
        print(render_model_table(ModelComparison(columns=(res,), best_aic=spec.name)))
    else:
        print(
            f"fit {spec.name}: loglik={res.loglik:.6f} aic={res.aic:.6f} "
            f"-> {out.path / f'fit_{spec.name}.json'}"
        )
    return 0


def cmd_forecast(args) -> int:
    cfg = load_config(args.config)
    out = _outdir(args, cfg)
    specs = _spec_list(cfg)
    tab = cfg.get("forecast", {})
    _check_keys("forecast", tab, _FORECAST_KEYS)
    spec = _pick_spec(specs, args.spec or tab.get("spec") or specs[0].name)
    holdout = args.holdout if args.holdout is not None else tab.get("holdout")
    if holdout is None:
        raise ValidationError("set holdout in [forecast] or pass --holdout")
    grid = tuple(float(g) for g in tab.get("lambda_grid", DEFAULT_LAMBDA_GRID))
    seed = args.seed if args.seed is not None else int(tab.get("seed", 0))
    workers = args.workers if args.workers is not None else tab.get("workers")
    options = _fit_options(cfg)
    panel, _ = _load_panel(cfg, Path(args.config).parent)

    search = lambda_grid_search(
        panel,
        spec,
        grid,
        holdout=int(holdout),
        k_playoff=tab.get("k_playoff"),
        options=options,
        mc_draws=int(tab.get("mc_draws", 1_000_000)),
        seed=seed,
        workers=workers,
    )
    meta = _make_meta("forecast", args.config, seed)
    files = {}
    for lam in grid:
        if lam not in search.reports:
            continue
        rep = search.reports[lam]
        stem = f"forecast_{spec.name}_lambda{_lam_tag(lam)}"
        out.json(stem + ".json", {"meta": meta, "forecast": forecast_report_to_dict(rep)})
        header, rows = forecast_report_rows(rep)
        out.csv(stem + ".csv", header, rows, meta)
        files[_lam_tag(lam)] = stem + ".json"
    out.json(
        "forecast_summary.json",
        {
            "meta": meta,
            "spec": spec.name,
            "holdout": int(holdout),
            "grid": list(grid),
            "best_lambda": search.best_lambda,
            "avg_logliks": {
                _lam_tag(lam): search.reports[lam].aggregates.avg_loglik
                for lam in grid
                if lam in search.reports
            },
            "failures": {
                _lam_tag(lam): msg for lam, msg in search.failures.items()
            },
            "files": files,
        },
    )
    if search.best_lambda is None:
        raise NumericalError(
            f"every penalty grid point failed: {sorted(search.failures.values())}"
        )
    print(
        f"evaluated {len(search.reports)} of {len(grid)} grid points; "
        f"best lambda {_lam_tag(search.best_lambda)} -> {out.path}"
    )
    return 0


def cmd_diagnose(args) -> int:
    cfg = load_config(args.config)
    out = _outdir(args, cfg)
    tab = cfg.get("diagnose", {})
    _check_keys("diagnose", tab, _DIAGNOSE_KEYS)
    lags = [int(x) for x in tab.get("lags", (1, 2, 3))]
    replications = int(tab.get("replications", 2000))
    seed = args.seed if args.seed is not None else int(tab.get("seed", 0))
    config_dir = Path(args.config).parent
    panel, _ = _load_panel(cfg, config_dir)
    meta = _make_meta("diagnose", args.config, seed)

    auto = rank_autocorrelation(panel, lags, replications=replications, seed=seed)
    out.json(
        "autocorrelation.json",
        {"meta": meta, "autocorrelation": correlation_report_to_dict(auto)},
    )
    header, rows = correlation_report_rows(auto)
    out.csv("autocorrelation.csv", header, rows, meta)
    written = ["autocorrelation.json", "autocorrelation.csv"]

    if panel.predictor_names:
        pc = predictor_rank_correlations(panel)
        out.json(
            "predictor_correlations.json",
            {"meta": meta, "correlations": predictor_correlations_to_dict(pc)},
        )
        written.append("predictor_correlations.json")

    cross_tab = tab.get("cross")
    if cross_tab:
        _check_keys("diagnose.cross", cross_tab, {"tournament_b"})
        if "tournament_b" not in cross_tab:
            raise ValidationError("[diagnose.cross] must set tournament_b")
        panel_b, _ = _load_panel(cfg, config_dir, tournament=cross_tab["tournament_b"])
        rep = cross_correlation(panel, panel_b, lags, replications=replications, seed=seed)
        out.json(
            "cross_correlation.json",
            {"meta": meta, "cross_correlation": correlation_report_to_dict(rep)},
        )
        header, rows = correlation_report_rows(rep)
        out.csv("cross_correlation.csv", header, rows, meta)
        written.extend(["cross_correlation.json", "cross_correlation.csv"])

    print(f"wrote {', '.join(written)} to {out.path}")
    return 0


def cmd_profile(args) -> int:
    cfg = load_config(args.config)
    out = _outdir(args, cfg)
    tab = cfg.get("profile", {})
    _check_keys("profile", tab, _PROFILE_KEYS)
    specs = _spec_list(cfg)
    name = args.spec or tab.get("spec")
    if name is None:
        raise ValidationError("set spec in [profile] or pass --spec")
    spec = _pick_spec(specs, name)
    grid = [float(a) for a in tab.get("alpha_grid", ())]
    if not grid:
        raise ValidationError("alpha grid is empty; set alpha_grid in [profile]")
    bad = [a for a in grid if not (np.isfinite(a) and a >= 0)]
    if bad:
        raise ValidationError(f"alpha grid values must be finite and >= 0, got {bad}")
    options = _fit_options(cfg, args.seed)
    panel, _ = _load_panel(cfg, Path(args.config).parent)

    res = fit(panel, spec, options=options)
    points = profile_score_coefficient(panel, spec, res.coef, grid)
    meta = _make_meta("profile", args.config, options.seed)
    out.csv(f"profile_{spec.name}.csv", ("alpha", "loglik"), points, meta)
    print(f"profiled alpha over {len(points)} points -> {out.path / f'profile_{spec.name}.csv'}")
    return 0


def cmd_simulate(args) -> int:
    if args.teams < 2:
        raise ValidationError(f"need at least 2 teams, got {args.teams}")
    if args.editions < 1:
        raise ValidationError(f"need at least 1 edition, got {args.editions}")
    if args.predictors < 0:
        raise ValidationError(f"predictor count must be >= 0, got {args.predictors}")
    seed = args.seed if args.seed is not None else 0
    rng = np.random.default_rng(seed)
    teams = [f"t{i + 1:02d}" for i in range(args.teams)]
    draw = rng.normal(0.0, 0.8, size=args.teams)
    omega = {t: float(v - draw.mean()) for t, v in zip(teams, draw)}
    beta = tuple(rng.normal(0.0, 0.5, size=args.predictors))
    coef = Coefficients(omega=omega, beta=beta, phi=0.9, alpha=0.3)
    sim = simulate_panel(teams, args.editions, coef, rng)

    meta = _make_meta("simulate", args.config, seed)
    out = _outdir(args)
    out.json("sim_panel.json", {"meta": meta, "panel": panel_to_dict(sim.dataset)})
    out.json(
        "sim_truth.json",
        {
            "meta": meta,
            "coefficients": {
                "omega": omega,
                "beta": dict(zip(sim.dataset.predictor_names, beta)),
                "phi": coef.phi,
                "alpha": coef.alpha,
            },
            "loglik": sim.loglik,
        },
    )
    print(
        f"simulated {args.teams} teams x {args.editions} editions (seed {seed}) "
        f"-> {out.path}"
    )
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="TOML run configuration")
    p.add_argument("--out-dir", metavar="DIR",
                   help="artifact directory (default: [output].dir or dynrank_out)")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--workers", type=int,
                   help="evaluate penalty grid points concurrently")
    p.add_argument("--format", choices=("json", "csv", "table"), default="json",
                   help="stdout rendering; files are always written")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynrank",
        description="Dynamic strength estimation and forecasting for ranked panels.",
    )
    parser.add_argument("--version", action="version", version=f"dynrank {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    p = sub.add_parser("build", help="assemble the panel from results/roster CSVs")
    _add_common(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("fit", help="estimate one spec or compare all of them")
    _add_common(p)
    p.add_argument("--spec", metavar="NAME", help="spec name from the config")
    p.add_argument("--all-specs", action="store_true",
                   help="fit every configured spec and write a comparison table")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("forecast", help="rolling out-of-sample evaluation over a penalty grid")
    _add_common(p)
    p.add_argument("--spec", metavar="NAME")
    p.add_argument("--holdout", type=int, help="number of held-out final editions")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("diagnose", help="rank autocorrelation and predictor correlations")
    _add_common(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("profile", help="sweep the score coefficient, holding the fit fixed")
    _add_common(p)
    p.add_argument("--spec", metavar="NAME")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("simulate", help="sample a synthetic panel with known coefficients")
    _add_common(p)
    p.add_argument("--teams", type=int, required=True)
    p.add_argument("--editions", type=int, required=True)
    p.add_argument("--predictors", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage/help
        code = exc.code
        if code is None:
            return 0
        return code if isinstance(code, int) else 2
    try:
        return args.func(args)
    except (ValidationError, CapacityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
