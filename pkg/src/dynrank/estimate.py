"""Maximum-likelihood and L2-penalized estimation of the filter coefficients.

Free parameters are the first N-1 fixed effects (the last is minus their sum),
the predictor loadings, and the dynamics pair (phi, alpha) per bounds regime:

    bounded     phi in [0,1) via logistic, alpha >= 0 via softplus
    persistent  phi fixed at 1, alpha free
    unbounded   both free
    static      include_dynamics=False, both fixed at 0

Optimization is derivative-free (adaptive Nelder-Mead simplex) with seeded
jittered restarts; standard errors come from a central finite-difference
observed information matrix on the natural parameterization.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, replace

import networkx as nx
import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit
from scipy.stats import norm

from .errors import DynrankError, NumericalError, ValidationError
from .filtering import Coefficients, PanelDataset, _loglik_arrays, filtered_loglik

__all__ = [
    "ConvergenceInfo",
    "FitFailure",
    "FitOptions",
    "FitResult",
    "ModelComparison",
    "ModelSpec",
    "PartitionReport",
    "SEReport",
    "check_partition_condition",
    "fit",
    "fit_result_to_dict",
    "hessian_standard_errors",
    "model_table",
    "profile_score_coefficient",
    "render_model_table",
    "standard_errors",
]

_REGIMES = ("bounded", "persistent", "unbounded")


@dataclass(frozen=True)
class ModelSpec:
    """What to estimate: predictor subset, dynamics on/off, bounds regime,
    and the L2 penalty weight."""

    name: str = "model"
    predictors: tuple[str, ...] = ()
    include_dynamics: bool = True
    bounds_regime: str = "bounded"
    penalty_lambda: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "predictors", tuple(self.predictors))
        if self.bounds_regime not in _REGIMES:
            raise ValidationError(
                f"bounds_regime must be one of {_REGIMES}, got {self.bounds_regime!r}"
            )
        if not (math.isfinite(self.penalty_lambda) and self.penalty_lambda >= 0):
            raise ValidationError(f"penalty_lambda must be >= 0, got {self.penalty_lambda}")

    def validate_for(self, dataset: PanelDataset) -> None:
        unknown = [p for p in self.predictors if p not in dataset.predictor_names]
        if unknown:
            raise ValidationError(
                f"spec {self.name!r} selects unknown predictors {unknown}"
            )


@dataclass(frozen=True)
class FitOptions:
    """Optimizer knobs. fatol is an absolute simplex function tolerance; at
    typical log-likelihood magnitudes 1e-9 is at or below 1e-9 relative."""

    restarts: int = 10
    maxfev: int = 100_000
    xatol: float = 1e-6
    fatol: float = 1e-9
    seed: int = 0
    jitter: float = 1.5


@dataclass(frozen=True)
class ConvergenceInfo:
    restarts: int
    converged_starts: int
    best_start: int
    nfev: int
    iterations: int
    xatol: float
    fatol: float
    maxfev: int
    success: bool


@dataclass(frozen=True)
class PartitionReport:
    passed: bool
    partition: tuple[tuple[str, ...], tuple[str, ...]] | None
    never_appearing: tuple[str, ...] = ()


@dataclass(frozen=True)
class SEReport:
    labels: tuple[str, ...]
    se: dict[str, float | None]
    p: dict[str, float | None]
    notes: tuple[str, ...] = ()


@dataclass(frozen=True)
class FitResult:
    spec: ModelSpec
    coef: Coefficients
    loglik: float
    penalized_objective: float
    aic: float
    n_free: int
    standard_errors: dict[str, float | None] | None
    p_values: dict[str, float | None] | None
    convergence: ConvergenceInfo
    partition: PartitionReport
    notes: tuple[str, ...] = ()


@dataclass(frozen=True)
class FitFailure:
    name: str
    error: str


@dataclass(frozen=True)
class ModelComparison:
    columns: tuple[FitResult | FitFailure, ...]
    best_aic: str | None


def check_partition_condition(dataset: PanelDataset) -> PartitionReport:
    """Strong connectivity of the beats digraph over teams that appear in at
    least one ranked edition; a failing 2-partition certifies the verdict."""
    seen: set[str] = set()
    for y in dataset.rankings:
        if y is not None:
            seen.update(y.ordering)
    appearing = [t for t in dataset.teams if t in seen]
    never = tuple(t for t in dataset.teams if t not in seen)
    if not appearing:
        return PartitionReport(passed=True, partition=None, never_appearing=never)

    g = nx.DiGraph()
    g.add_nodes_from(appearing)
    for y in dataset.rankings:
        if y is None:
            continue
        o = y.ordering
        for i in range(len(o)):
            for j in range(i + 1, len(o)):
                g.add_edge(o[i], o[j])
    if nx.is_strongly_connected(g):
        return PartitionReport(passed=True, partition=None, never_appearing=never)

    reg = {t: i for i, t in enumerate(dataset.teams)}
    cond = nx.condensation(g)
    sources = [n for n, d in cond.in_degree() if d == 0]
    src = min(sources, key=lambda n: min(reg[t] for t in cond.nodes[n]["members"]))
    top = sorted(cond.nodes[src]["members"], key=reg.__getitem__)
    rest = [t for t in appearing if t not in set(top)]
    return PartitionReport(
        passed=False, partition=(tuple(top), tuple(rest)), never_appearing=never
    )


def _inv_softplus(x: float) -> float:
    # inverse of log(1 + e^z); stable for both tails
    x = max(x, 1e-8)
    return x + math.log(-math.expm1(-x))


class _Packing:
    """Maps between optimizer coordinates, natural theta, and Coefficients."""

    def __init__(self, dataset: PanelDataset, spec: ModelSpec):
        self.teams = dataset.teams
        self.n = len(self.teams)
        self.m = len(spec.predictors)
        self.spec = spec
        self.regime = spec.bounds_regime if spec.include_dynamics else "static"
        labels = [f"omega[{t}]" for t in self.teams[:-1]]
        labels += [f"beta[{v}]" for v in spec.predictors]
        if self.regime in ("bounded", "unbounded"):
            labels += ["phi", "alpha"]
        elif self.regime == "persistent":
            labels += ["alpha"]
        self.labels = tuple(labels)
        self.dim = len(labels)

    def split(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray, float, float]:
        w = z[: self.n - 1]
        omega = np.concatenate([w, [-w.sum()]])
        beta = z[self.n - 1 : self.n - 1 + self.m]
        tail = z[self.n - 1 + self.m :]
        if self.regime == "bounded":
            phi, alpha = float(expit(tail[0])), float(np.logaddexp(0.0, tail[1]))
        elif self.regime == "unbounded":
            phi, alpha = float(tail[0]), float(tail[1])
        elif self.regime == "persistent":
            phi, alpha = 1.0, float(tail[0])
        else:
            phi, alpha = 0.0, 0.0
        return omega, beta, phi, alpha

    def split_natural(self, theta: np.ndarray):
        w = theta[: self.n - 1]
        omega = np.concatenate([w, [-w.sum()]])
        beta = theta[self.n - 1 : self.n - 1 + self.m]
        tail = theta[self.n - 1 + self.m :]
        if self.regime in ("bounded", "unbounded"):
            phi, alpha = float(tail[0]), float(tail[1])
        elif self.regime == "persistent":
            phi, alpha = 1.0, float(tail[0])
        else:
            phi, alpha = 0.0, 0.0
        return omega, beta, phi, alpha

    def _omega_head(self, coef: Coefficients) -> np.ndarray:
        w = np.array([coef.omega[t] for t in self.teams], dtype=float)
        return (w - w.mean())[: self.n - 1]

    def pack(self, coef: Coefficients) -> np.ndarray:
        head = [self._omega_head(coef), np.asarray(coef.beta, dtype=float)]
        if self.regime == "bounded":
            phi = min(max(coef.phi, 1e-8), 1.0 - 1e-8)
            head.append([float(logit(phi)), _inv_softplus(coef.alpha)])
        elif self.regime == "unbounded":
            head.append([coef.phi, coef.alpha])
        elif self.regime == "persistent":
            head.append([coef.alpha])
        return np.concatenate([np.atleast_1d(np.asarray(h, dtype=float)) for h in head if len(np.atleast_1d(h))])

    def natural_theta(self, coef: Coefficients) -> np.ndarray:
        head = [self._omega_head(coef), np.asarray(coef.beta, dtype=float)]
        if self.regime in ("bounded", "unbounded"):
            head.append([coef.phi, coef.alpha])
        elif self.regime == "persistent":
            head.append([coef.alpha])
        return np.concatenate([np.atleast_1d(np.asarray(h, dtype=float)) for h in head if len(np.atleast_1d(h))])

    def default_start(self) -> np.ndarray:
        z = np.zeros(self.dim)
        if self.regime == "bounded":
            z[-2] = 0.0  # phi = 0.5
            z[-1] = _inv_softplus(0.1)
        elif self.regime == "unbounded":
            z[-2] = 0.5
            z[-1] = 0.1
        elif self.regime == "persistent":
            z[-1] = 0.1
        return z

    def steps(self, dataset: PanelDataset) -> np.ndarray:
        s = np.full(self.dim, 0.25)
        part = dataset.participation_matrix
        for j in range(self.m):
            col = dataset.predictors[:, :, j][part]
            sd = float(col.std()) if col.size else 0.0
            s[self.n - 1 + j] = 0.25 / max(sd, 0.25)
        if self.regime == "bounded":
            s[-2:] = 0.75
        elif self.regime == "unbounded":
            s[-2] = 0.2
            s[-1] = 0.1
        elif self.regime == "persistent":
            s[-1] = 0.1
        return s

    def coefficients(self, z: np.ndarray) -> Coefficients:
        omega, beta, phi, alpha = self.split(z)
        mapping = {t: float(v) for t, v in zip(self.teams[:-1], omega[: self.n - 1])}
        mapping[self.teams[-1]] = -math.fsum(mapping.values())
        return Coefficients(omega=mapping, beta=tuple(beta), phi=phi, alpha=alpha)


def _penalty(omega: np.ndarray, beta: np.ndarray, phi: float, alpha: float) -> float:
    # literal sum over all N+M+2 coefficients, derived and fixed ones included
    return float(omega @ omega + beta @ beta + phi * phi + alpha * alpha)


def fit(
    dataset: PanelDataset,
    spec: ModelSpec,
    init: Coefficients | None = None,
    options: FitOptions | None = None,
) -> FitResult:
    """Maximize the (optionally penalized) filtered log-likelihood.

    At penalty_lambda = 0 the partition condition must pass and every registry
    team must appear in a ranked edition, otherwise the likelihood has flat or
    divergent directions and the request is refused with guidance.
    """
    options = options or FitOptions()
    spec.validate_for(dataset)
    sub = dataset.with_predictors(spec.predictors)
    partition = check_partition_condition(sub)
    lam = float(spec.penalty_lambda)
    if lam == 0.0:
        if partition.never_appearing:
            raise ValidationError(
                f"teams {list(partition.never_appearing)} never appear in a ranked "
                "edition; their fixed effects are unidentified at penalty_lambda=0. "
                "Set penalty_lambda > 0 or drop them from the registry."
            )
        if not partition.passed:
            top, rest = partition.partition
            raise ValidationError(
                f"partition condition fails: no team in {list(rest)} ever ranked "
                f"above any of {list(top)}, so the MLE diverges. Set "
                "penalty_lambda > 0 or drop the offending teams."
            )

    packing = _Packing(sub, spec)
    z0 = packing.pack(init) if init is not None else packing.default_start()
    steps = packing.steps(sub)

    def negobj(z: np.ndarray) -> float:
        omega, beta, phi, alpha = packing.split(z)
        ll, *_ = _loglik_arrays(sub, omega, beta, phi, alpha)
        val = ll - lam * _penalty(omega, beta, phi, alpha)
        return -val if math.isfinite(val) else 1e18

    rng = np.random.default_rng(options.seed)
    jitters = rng.normal(size=(options.restarts, packing.dim))
    jitters[0] = 0.0

    best = None
    best_key = None
    any_best = None
    total_nfev = 0
    converged = 0
    for k in range(options.restarts):
        zk = z0 + options.jitter * jitters[k] * steps
        simplex = np.vstack([zk, zk + np.diag(steps)])
        res = minimize(
            negobj,
            zk,
            method="Nelder-Mead",
            options=dict(
                initial_simplex=simplex,
                xatol=options.xatol,
                fatol=options.fatol,
                maxfev=options.maxfev,
                maxiter=options.maxfev,
                adaptive=True,
            ),
        )
        total_nfev += int(res.nfev)
        if any_best is None or res.fun < any_best[0]:
            any_best = (float(res.fun), res.x.copy())
        if not res.success:
            continue
        converged += 1
        key = (float(res.fun), k)
        if best_key is None or key < best_key:
            best_key = key
            best = (res, k)

    if best is None:
        raise NumericalError(
            f"no start converged within maxfev={options.maxfev} "
            f"({options.restarts} restarts)",
            payload={"best_objective": -any_best[0], "best_point": any_best[1]},
        )

    res, best_start = best
    coef = packing.coefficients(res.x)
    loglik = filtered_loglik(sub, coef)
    omega_v = coef.omega_vector(sub)
    pen_obj = loglik - lam * _penalty(
        omega_v, np.asarray(coef.beta), coef.phi, coef.alpha
    )
    n_free = packing.dim
    aic = 2.0 * n_free - 2.0 * loglik
    conv = ConvergenceInfo(
        restarts=options.restarts,
        converged_starts=converged,
        best_start=best_start,
        nfev=total_nfev,
        iterations=int(res.nit),
        xatol=options.xatol,
        fatol=options.fatol,
        maxfev=options.maxfev,
        success=True,
    )

    se_map = p_map = None
    notes: list[str] = []
    if lam == 0.0:
        try:
            rep = standard_errors(dataset, spec, coef)
            se_map, p_map = rep.se, rep.p
            notes.extend(rep.notes)
        except NumericalError as exc:
            notes.append(f"standard errors unavailable: {exc}")
    else:
        notes.append(
            "standard errors suppressed under L2 penalty (penalized estimates; "
            "asymptotic SEs are not informative)"
        )

    return FitResult(
        spec=spec,
        coef=coef,
        loglik=loglik,
        penalized_objective=pen_obj,
        aic=aic,
        n_free=n_free,
        standard_errors=se_map,
        p_values=p_map,
        convergence=conv,
        partition=partition,
        notes=tuple(notes),
    )


def _fd_hessian(fn, x: np.ndarray, h: np.ndarray) -> np.ndarray:
    n = x.size
    hess = np.empty((n, n))
    f0 = fn(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        hess[i, i] = (fn(x + ei) - 2.0 * f0 + fn(x - ei)) / h[i] ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h[j]
            mixed = (
                fn(x + ei + ej) - fn(x + ei - ej) - fn(x - ei + ej) + fn(x - ei - ej)
            ) / (4.0 * h[i] * h[j])
            hess[i, j] = hess[j, i] = mixed
    return hess


def hessian_standard_errors(
    loglik_fn, theta: np.ndarray, n_obs: int
) -> tuple[np.ndarray, np.ndarray]:
    """SEs from the observed information -T * H of the average log-likelihood,
    H by central finite differences with steps max(1e-4, 1e-4*|theta_k|)."""
    theta = np.asarray(theta, dtype=float)
    h = np.maximum(1e-4, 1e-4 * np.abs(theta))
    havg = _fd_hessian(lambda t: loglik_fn(t) / n_obs, theta, h)
    info = -n_obs * (havg + havg.T) / 2.0
    eigs = np.linalg.eigvalsh(info)
    if eigs.min() <= 0.0:
        raise NumericalError(
            "singular information matrix: eigenvalues "
            + np.array2string(eigs, precision=4)
        )
    cov = np.linalg.inv(info)
    return np.sqrt(np.diag(cov)), cov


def standard_errors(
    dataset: PanelDataset,
    spec: ModelSpec,
    coef: Coefficients,
    at_bound_tol: float = 1e-6,
    near_bound_tol: float = 1e-3,
) -> SEReport:
    """Observed-information SEs and two-sided normal p-values on the natural
    parameterization (omega head, betas, phi, alpha).

    Bounded-regime coefficients sitting at an active bound are suppressed
    (entry None) with a note; when alpha is at 0, phi is suppressed too since
    nothing identifies it there. Near-bound estimates keep their SE but carry
    a warning note.
    """
    sub = dataset.with_predictors(spec.predictors)
    coef.validate_for(sub)
    packing = _Packing(sub, spec)
    theta = packing.natural_theta(coef)
    labels = packing.labels
    n_obs = sum(1 for y in sub.rankings if y is not None)
    if n_obs == 0:
        raise ValidationError("no ranked editions: nothing to differentiate")

    notes: list[str] = []
    suppressed: set[str] = set()
    if packing.regime == "bounded":
        if coef.alpha <= at_bound_tol:
            suppressed.update(("alpha", "phi"))
            notes.append(
                "alpha at lower bound 0: standard error suppressed; phi is "
                "unidentified there and suppressed as well"
            )
        elif coef.alpha <= near_bound_tol:
            notes.append("alpha near lower bound 0: standard errors may be unreliable")
        if "phi" not in suppressed:
            if coef.phi <= at_bound_tol or coef.phi >= 1.0 - at_bound_tol:
                suppressed.add("phi")
                notes.append("phi at an active bound: standard error suppressed")
            elif coef.phi <= near_bound_tol or coef.phi >= 1.0 - near_bound_tol:
                notes.append("phi near a bound: standard errors may be unreliable")

    active = [i for i, lab in enumerate(labels) if lab not in suppressed]
    theta_act = theta[active]

    def ll_active(t_act: np.ndarray) -> float:
        full = theta.copy()
        full[active] = t_act
        omega, beta, phi, alpha = packing.split_natural(full)
        ll, *_ = _loglik_arrays(sub, omega, beta, phi, alpha)
        return ll

    se_act, _ = hessian_standard_errors(ll_active, theta_act, n_obs)
    se: dict[str, float | None] = {lab: None for lab in labels}
    p: dict[str, float | None] = {lab: None for lab in labels}
    for pos, i in enumerate(active):
        lab = labels[i]
        se[lab] = float(se_act[pos])
        z = theta[i] / se_act[pos]
        p[lab] = float(2.0 * norm.sf(abs(z)))
    return SEReport(labels=labels, se=se, p=p, notes=tuple(notes))


def profile_score_coefficient(
    dataset: PanelDataset,
    spec: ModelSpec,
    coef: Coefficients,
    alpha_grid: Sequence[float],
) -> list[tuple[float, float]]:
    """Unpenalized log-likelihood with alpha swept over `alpha_grid`, all
    other coefficients held at `coef`."""
    sub = dataset.with_predictors(spec.predictors)
    out = []
    for a in alpha_grid:
        c = replace(coef, alpha=float(a))
        out.append((float(a), filtered_loglik(sub, c)))
    return out


def model_table(
    dataset: PanelDataset,
    specs: Sequence[ModelSpec],
    options: FitOptions | None = None,
) -> ModelComparison:
    """Fit every spec; failures occupy their column without aborting others."""
    columns: list[FitResult | FitFailure] = []
    for spec in specs:
        try:
            columns.append(fit(dataset, spec, options=options))
        except DynrankError as exc:
            columns.append(FitFailure(name=spec.name, error=str(exc)))
    fitted = [c for c in columns if isinstance(c, FitResult)]
    best = min(fitted, key=lambda c: (c.aic, c.spec.name)).spec.name if fitted else None
    return ModelComparison(columns=tuple(columns), best_aic=best)


def significance_stars(p: float | None) -> str:
    if p is None:
        return ""
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    return "*" if p < 0.1 else ""


def _fmt_cell(est: float, se: float | None, p: float | None) -> str:
    stars = significance_stars(p)
    if se is None:
        return f"{est:.3f}{stars}"
    return f"{est:.3f}{stars} ({se:.3f})"


def render_model_table(comp: ModelComparison, include_omega: bool = False) -> str:
    """Plain-text comparison: one column per spec, coefficient rows with SEs
    in parentheses and significance stars, then log-lik / AIC / P."""
    names = [c.spec.name if isinstance(c, FitResult) else c.name for c in comp.columns]
    headers = [
        n + " [best AIC]" if n == comp.best_aic else n for n in names
    ]
    pred_rows: list[str] = []
    for col in comp.columns:
        if isinstance(col, FitResult):
            for v in col.spec.predictors:
                if v not in pred_rows:
                    pred_rows.append(v)
    rows: list[tuple[str, list[str]]] = []

    def cell_for(col, label, est) -> str:
        if est is None:
            return ""
        se = (col.standard_errors or {}).get(label)
        p = (col.p_values or {}).get(label)
        return _fmt_cell(est, se, p)

    if include_omega:
        teams = []
        for col in comp.columns:
            if isinstance(col, FitResult):
                teams = list(col.coef.omega)
                break
        for t in teams:
            cells = []
            for col in comp.columns:
                if isinstance(col, FitFailure):
                    cells.append("ERROR")
                else:
                    cells.append(cell_for(col, f"omega[{t}]", col.coef.omega.get(t)))
            rows.append((f"omega[{t}]", cells))
    for v in pred_rows:
        cells = []
        for col in comp.columns:
            if isinstance(col, FitFailure):
                cells.append("ERROR")
            elif v in col.spec.predictors:
                est = col.coef.beta[col.spec.predictors.index(v)]
                cells.append(cell_for(col, f"beta[{v}]", est))
            else:
                cells.append("")
        rows.append((v, cells))
    for label, attr in (("phi", "phi"), ("alpha", "alpha")):
        cells = []
        for col in comp.columns:
            if isinstance(col, FitFailure):
                cells.append("ERROR")
            elif col.spec.include_dynamics:
                cells.append(cell_for(col, label, getattr(col.coef, attr)))
            else:
                cells.append("")
        rows.append((label, cells))
    for label, getter in (
        ("Log-lik", lambda c: f"{c.loglik:.3f}"),
        ("AIC", lambda c: f"{c.aic:.3f}"),
        ("P", lambda c: str(c.n_free)),
    ):
        cells = [
            getter(col) if isinstance(col, FitResult) else "ERROR"
            for col in comp.columns
        ]
        rows.append((label, cells))

    width0 = max([len(r[0]) for r in rows] + [5])
    widths = [
        max([len(h)] + [len(r[1][i]) for r in rows])
        for i, h in enumerate(headers)
    ]
    lines = [
        " ".join(
            [" " * width0]
            + [h.rjust(w) for h, w in zip(headers, widths)]
        ).rstrip()
    ]
    lines.append("-" * len(lines[0]))
    for label, cells in rows:
        lines.append(
            " ".join(
                [label.ljust(width0)]
                + [c.rjust(w) for c, w in zip(cells, widths)]
            ).rstrip()
        )
    lines.append("significance: *** p<0.01, ** p<0.05, * p<0.1")
    if not include_omega:
        lines.append("fixed effects omitted here; see the fit JSON documents")
    return "\n".join(lines)


def fit_result_to_dict(fr: FitResult) -> dict:
    """JSON-ready view; field names and float formatting are a stable contract."""
    omega = {t: float(v) for t, v in fr.coef.omega.items()}
    teams = list(omega)
    doc = {
        "spec": {
            "name": fr.spec.name,
            "predictors": list(fr.spec.predictors),
            "include_dynamics": fr.spec.include_dynamics,
            "bounds_regime": fr.spec.bounds_regime,
            "penalty_lambda": float(fr.spec.penalty_lambda),
        },
        "coefficients": {
            "omega": omega,
            "beta": {
                v: float(b) for v, b in zip(fr.spec.predictors, fr.coef.beta)
            },
            "phi": float(fr.coef.phi),
            "alpha": float(fr.coef.alpha),
        },
        "derived_omega_team": teams[-1] if teams else None,
        "loglik": float(fr.loglik),
        "penalized_objective": float(fr.penalized_objective),
        "aic": float(fr.aic),
        "n_free": fr.n_free,
        "standard_errors": fr.standard_errors,
        "p_values": fr.p_values,
        "convergence": {
            "restarts": fr.convergence.restarts,
            "converged_starts": fr.convergence.converged_starts,
            "best_start": fr.convergence.best_start,
            "nfev": fr.convergence.nfev,
            "iterations": fr.convergence.iterations,
            "xatol": float(fr.convergence.xatol),
            "fatol": float(fr.convergence.fatol),
            "maxfev": fr.convergence.maxfev,
            "success": fr.convergence.success,
        },
        "partition_check": {
            "passed": fr.partition.passed,
            "partition": [list(p) for p in fr.partition.partition]
            if fr.partition.partition
            else None,
            "never_appearing": list(fr.partition.never_appearing),
        },
        "notes": list(fr.notes),
    }
    return doc
