"""Estimation: closed-form oracles, partition checks, recovery, SEs, tables."""

from __future__ import annotations

import itertools
import math
import textwrap

import numpy as np
import pytest

from dynrank.errors import NumericalError, ValidationError
from dynrank.estimate import (
    ConvergenceInfo,
    FitOptions,
    FitResult,
    ModelSpec,
    PartitionReport,
    check_partition_condition,
    fit,
    fit_result_to_dict,
    hessian_standard_errors,
    model_table,
    profile_score_coefficient,
    render_model_table,
    standard_errors,
)
from dynrank.filtering import Coefficients, PanelDataset, filtered_loglik
from dynrank.plackett import Ranking
from dynrank.serialize import canonical_json
from dynrank.simulate import simulate_panel

from test_filtering import panel_from_orderings, zero_sum_omega

FAST = FitOptions(restarts=2, seed=0)


def two_team_panel(wins=6, total=8):
    orderings = [("a", "b")] * wins + [("b", "a")] * (total - wins)
    return panel_from_orderings(["a", "b"], orderings)


def beats_edges(ds):
    edges = set()
    for y in ds.rankings:
        if y is None:
            continue
        o = y.ordering
        for i in range(len(o)):
            for j in range(i + 1, len(o)):
                edges.add((o[i], o[j]))
    return edges


def brute_force_partition_ok(ds):
    """Hunter condition by exhaustion: no subset may go unbeaten from outside."""
    appearing = sorted(
        {t for y in ds.rankings if y is not None for t in y.ordering}
    )
    edges = beats_edges(ds)
    for r in range(1, len(appearing)):
        for subset in itertools.combinations(appearing, r):
            inside = set(subset)
            outside = [t for t in appearing if t not in inside]
            if not any((b, a) in edges for b in outside for a in inside):
                return False
    return True


class TestPartitionCondition:
    def test_pass_on_reversed_orderings(self):
        ds = panel_from_orderings(["1", "2", "3"], [("1", "2", "3"), ("3", "2", "1")])
        assert check_partition_condition(ds).passed

    def test_fail_when_one_team_always_first(self):
        ds = panel_from_orderings(
            ["1", "2", "3"], [("1", "2", "3"), ("1", "3", "2")]
        )
        rep = check_partition_condition(ds)
        assert not rep.passed
        assert rep.partition is not None
        assert set(rep.partition[0]) == {"1"}
        assert set(rep.partition[1]) == {"2", "3"}

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(2025)
        for _ in range(40):
            n = int(rng.integers(2, 7))
            teams = [f"t{i}" for i in range(n)]
            orderings = []
            for _ in range(int(rng.integers(1, 7))):
                k = int(rng.integers(2, n + 1))
                orderings.append(tuple(rng.permutation(teams)[:k]))
            ds = panel_from_orderings(teams, orderings)
            assert check_partition_condition(ds).passed == brute_force_partition_ok(ds)

    def test_never_appearing_teams_reported(self):
        ds = panel_from_orderings(
            ["a", "b", "ghost"], [("a", "b"), ("b", "a")]
        )
        rep = check_partition_condition(ds)
        assert rep.passed
        assert rep.never_appearing == ("ghost",)


class TestFitClosedForm:
    def test_two_team_binomial_mle(self):
        """w = 6 of T = 8: omega_A = 0.5*ln(3), loglik = 6 ln .75 + 2 ln .25,
        se from observed information 4*T*p*(1-p)."""
        ds = two_team_panel()
        res = fit(ds, ModelSpec(name="static", include_dynamics=False), options=FAST)
        want_omega = 0.5 * math.log(3.0)
        want_ll = 6 * math.log(0.75) + 2 * math.log(0.25)
        assert abs(res.coef.omega["a"] - want_omega) <= 1e-4
        assert abs(res.coef.omega["b"] + want_omega) <= 1e-4
        assert abs(res.loglik - want_ll) <= 1e-6
        assert res.standard_errors is not None
        assert abs(res.standard_errors["omega[a]"] - 1.0 / math.sqrt(6.0)) <= 5e-3
        assert res.p_values["omega[a]"] is not None
        assert res.n_free == 1
        np.testing.assert_allclose(res.aic, 2.0 * 1 - 2.0 * res.loglik)

    def test_penalized_objective_equals_loglik_at_zero_lambda(self):
        ds = two_team_panel()
        res = fit(ds, ModelSpec(name="static", include_dynamics=False), options=FAST)
        assert res.penalized_objective == res.loglik

    def test_large_lambda_shrinks_everything(self):
        teams = [f"t{i}" for i in range(4)]
        coef = Coefficients(
            omega=zero_sum_omega(teams, np.random.default_rng(1)), phi=0.5, alpha=0.2
        )
        sim = simulate_panel(teams, 40, coef, rng=np.random.default_rng(2))
        spec = ModelSpec(name="dyn", include_dynamics=True, penalty_lambda=1e6)
        res = fit(sim.dataset, spec, options=FAST)
        for v in res.coef.omega.values():
            assert abs(v) <= 1e-2
        assert res.coef.alpha <= 1e-2
        assert res.coef.phi <= 1e-2
        assert res.standard_errors is None  # suppressed under penalty

    def test_refuses_partition_failure_at_zero_lambda(self):
        ds = panel_from_orderings(["1", "2", "3"], [("1", "2", "3"), ("1", "3", "2")])
        with pytest.raises(ValidationError, match="partition"):
            fit(ds, ModelSpec(name="s", include_dynamics=False), options=FAST)

    def test_refuses_never_appearing_team_at_zero_lambda(self):
        ds = panel_from_orderings(["a", "b", "ghost"], [("a", "b"), ("b", "a")])
        with pytest.raises(ValidationError, match="ghost"):
            fit(ds, ModelSpec(name="s", include_dynamics=False), options=FAST)
        # a positive penalty lifts the flat direction
        res = fit(
            ds,
            ModelSpec(name="s", include_dynamics=False, penalty_lambda=0.1),
            options=FAST,
        )
        assert res.coef.omega["ghost"] == pytest.approx(0.0, abs=1e-3)

    def test_nonconvergence_raises_with_payload(self):
        ds = two_team_panel()
        opts = FitOptions(restarts=1, maxfev=3, seed=0)
        with pytest.raises(NumericalError) as exc:
            fit(ds, ModelSpec(name="static", include_dynamics=False), options=opts)
        assert exc.value.payload is not None


class TestFitRecovery:
    def test_simulation_recovery_light(self):
        """Scaled-down version of the acceptance criterion: the full 20-rep
        budget lives in the acceptance suite."""
        teams = [f"t{i}" for i in range(8)]
        hits = 0
        reps = 5
        for rep in range(reps):
            rng = np.random.default_rng(5000 + rep)
            truth = Coefficients(
                omega=zero_sum_omega(teams, rng, scale=0.5),
                beta=(0.5,),
                phi=0.7,
                alpha=0.2,
            )
            sim = simulate_panel(teams, 300, truth, rng=rng, n_vars=1)
            res = fit(
                sim.dataset,
                ModelSpec(name="dyn", predictors=("x1",), include_dynamics=True),
                options=FitOptions(restarts=2, seed=rep),
            )
            ok = (
                abs(res.coef.phi - 0.7) <= 0.15
                and abs(res.coef.alpha - 0.2) <= 0.10
                and abs(res.coef.beta[0] - 0.5) <= 0.15
            )
            hits += ok
        assert hits >= reps - 1

    def test_init_is_respected(self):
        # warm-starting at the generator must converge and can only improve
        teams = [f"t{i}" for i in range(5)]
        rng = np.random.default_rng(8)
        truth = Coefficients(omega=zero_sum_omega(teams, rng), phi=0.6, alpha=0.3)
        sim = simulate_panel(teams, 120, truth, rng=rng)
        res = fit(
            sim.dataset,
            ModelSpec(name="dyn", include_dynamics=True),
            init=truth,
            options=FitOptions(restarts=1, seed=0),
        )
        assert res.convergence.success
        assert res.loglik >= filtered_loglik(sim.dataset, truth) - 1e-6
        assert 0.0 <= res.coef.phi <= 1.0 and res.coef.alpha >= 0.0

    def test_local_optimality_audit(self):
        ds = two_team_panel(wins=5, total=9)
        res = fit(ds, ModelSpec(name="static", include_dynamics=False), options=FAST)
        base = res.loglik
        w = res.coef.omega["a"]
        for delta in (-1e-3, 1e-3):
            coef = Coefficients(omega={"a": w + delta, "b": -(w + delta)})
            assert filtered_loglik(ds, coef) <= base + 1e-6

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(77)
        teams = ["a", "b", "c"]
        orderings = [tuple(rng.permutation(teams)) for _ in range(60)]
        ds1 = panel_from_orderings(teams, orderings)
        ds2 = panel_from_orderings(list(reversed(teams)), orderings)
        r1 = fit(ds1, ModelSpec(name="s", include_dynamics=False), options=FAST)
        r2 = fit(ds2, ModelSpec(name="s", include_dynamics=False), options=FAST)
        for t in teams:
            assert abs(r1.coef.omega[t] - r2.coef.omega[t]) <= 2e-4
        assert abs(r1.loglik - r2.loglik) <= 1e-6

    def test_shrinkage_monotonicity(self):
        teams = [f"t{i}" for i in range(4)]
        rng = np.random.default_rng(10)
        truth = Coefficients(omega=zero_sum_omega(teams, rng), beta=(0.8,))
        sim = simulate_panel(teams, 50, truth, rng=rng, n_vars=1)
        norms = []
        prev = None
        for lam in (0.0, 0.01, 0.1, 1.0, 10.0):
            spec = ModelSpec(
                name="s", predictors=("x1",), include_dynamics=False, penalty_lambda=lam
            )
            res = fit(sim.dataset, spec, init=prev, options=FAST)
            prev = res.coef
            theta = np.array(
                [*res.coef.omega.values(), *res.coef.beta, res.coef.phi, res.coef.alpha]
            )
            norms.append(float(np.linalg.norm(theta)))
        for a, b in zip(norms, norms[1:]):
            assert b <= a + 1e-6


class TestStandardErrors:
    def test_quadratic_unit_curvature(self):
        se, cov = hessian_standard_errors(lambda th: -0.5 * th[0] ** 2, np.array([0.0]), 1)
        np.testing.assert_allclose(se, [1.0], rtol=1e-6)
        np.testing.assert_allclose(cov, [[1.0]], rtol=1e-6)

    def test_singular_information_reports_eigenvalues(self):
        def flat(th):
            return -0.5 * th[0] ** 2  # second coordinate unidentified

        with pytest.raises(NumericalError, match="eigenvalue"):
            hessian_standard_errors(flat, np.array([0.0, 0.0]), 1)

    def test_se_halves_when_sample_quadruples(self):
        teams = [f"t{i}" for i in range(4)]
        spec = ModelSpec(name="static", include_dynamics=False)
        ses = {}
        for T in (100, 400):
            rng = np.random.default_rng(123)
            truth = Coefficients(omega=zero_sum_omega(teams, rng, scale=0.6))
            sim = simulate_panel(teams, T, truth, rng=rng)
            res = fit(sim.dataset, spec, options=FAST)
            ses[T] = res.standard_errors["omega[t0]"]
        ratio = ses[400] / ses[100]
        assert 0.4 <= ratio <= 0.6

    def test_boundary_alpha_suppressed_with_note(self):
        teams = ["a", "b", "c"]
        rng = np.random.default_rng(3)
        ds = panel_from_orderings(
            teams, [tuple(rng.permutation(teams)) for _ in range(30)]
        )
        coef = Coefficients(omega=zero_sum_omega(teams, rng), phi=0.5, alpha=0.0)
        rep = standard_errors(
            ds, ModelSpec(name="d", include_dynamics=True, bounds_regime="bounded"), coef
        )
        assert rep.se["alpha"] is None
        assert any("alpha" in n and "bound" in n for n in rep.notes)
        assert rep.se["omega[a]"] is not None


class TestProfile:
    def test_alpha_zero_point_matches_static_collapse(self):
        teams = ["a", "b", "c", "d"]
        rng = np.random.default_rng(14)
        ds = panel_from_orderings(
            teams, [tuple(rng.permutation(teams)) for _ in range(12)]
        )
        coef = Coefficients(omega=zero_sum_omega(teams, rng), phi=0.7, alpha=0.4)
        pts = profile_score_coefficient(
            ds, ModelSpec(name="d", include_dynamics=True), coef, [0.0, 0.4]
        )
        static = filtered_loglik(
            ds, Coefficients(omega=coef.omega, phi=0.7, alpha=0.0)
        )
        assert pts[0][0] == 0.0
        np.testing.assert_allclose(pts[0][1], static, atol=1e-12)
        np.testing.assert_allclose(
            pts[1][1], filtered_loglik(ds, coef), atol=1e-12
        )

    def test_profile_peaks_at_fitted_alpha(self):
        teams = [f"t{i}" for i in range(6)]
        rng = np.random.default_rng(15)
        truth = Coefficients(omega=zero_sum_omega(teams, rng), phi=0.75, alpha=0.35)
        sim = simulate_panel(teams, 200, truth, rng=rng)
        spec = ModelSpec(name="dyn", include_dynamics=True)
        res = fit(sim.dataset, spec, options=FAST)
        a_hat = res.coef.alpha
        grid = sorted({a_hat - 0.1, a_hat - 0.05, a_hat, a_hat + 0.05, a_hat + 0.1})
        pts = profile_score_coefficient(sim.dataset, spec, res.coef, grid)
        values = [v for _, v in pts]
        best = values.index(max(values))
        assert abs(pts[best][0] - a_hat) <= 0.05 + 1e-12

    def test_persistent_regime_profile_finite_on_negative_grid(self):
        teams = [f"t{i}" for i in range(5)]
        rng = np.random.default_rng(16)
        truth = Coefficients(omega=zero_sum_omega(teams, rng), phi=1.0, alpha=0.2)
        sim = simulate_panel(teams, 80, truth, rng=rng)
        coef = truth
        grid = np.linspace(-0.3, 0.5, 50)
        pts = profile_score_coefficient(
            sim.dataset,
            ModelSpec(name="p", include_dynamics=True, bounds_regime="persistent"),
            coef,
            grid,
        )
        assert len(pts) == 50
        assert all(math.isfinite(v) for _, v in pts)


class TestModelTable:
    def test_identical_specs_identical_columns(self):
        ds = two_team_panel()
        spec = ModelSpec(name="static", include_dynamics=False)
        comp = model_table(ds, [spec, spec], options=FAST)
        a, b = comp.columns
        assert fit_result_to_dict(a) == fit_result_to_dict(b)

    def test_dynamic_beats_static_on_autocorrelated_data(self):
        teams = [f"t{i}" for i in range(6)]
        rng = np.random.default_rng(20)
        truth = Coefficients(omega=zero_sum_omega(teams, rng, 0.3), phi=0.95, alpha=0.35)
        sim = simulate_panel(teams, 150, truth, rng=rng)
        comp = model_table(
            sim.dataset,
            [
                ModelSpec(name="static", include_dynamics=False),
                ModelSpec(name="dynamic", include_dynamics=True),
            ],
            options=FAST,
        )
        static, dynamic = comp.columns
        assert dynamic.loglik > static.loglik
        assert comp.best_aic == "dynamic"
        text = render_model_table(comp)
        assert "dynamic" in text and "AIC" in text

    def test_aic_prefers_smaller_without_signal(self):
        """An irrelevant extra predictor should lose on AIC most of the time."""
        teams = [f"t{i}" for i in range(5)]
        prefer_small = 0
        reps = 20
        for rep in range(reps):
            rng = np.random.default_rng(31_000 + rep)
            truth = Coefficients(omega=zero_sum_omega(teams, rng, 0.5), beta=(0.0,))
            sim = simulate_panel(teams, 60, truth, rng=rng, n_vars=1)
            small = fit(
                sim.dataset,
                ModelSpec(name="small", include_dynamics=False),
                options=FAST,
            )
            big = fit(
                sim.dataset,
                ModelSpec(name="big", predictors=("x1",), include_dynamics=False),
                options=FAST,
            )
            prefer_small += small.aic < big.aic
        # null rate of AIC picking the bigger model is P(chi2_1 > 2) ~ 0.16
        assert prefer_small >= 0.7 * reps

    def test_failed_column_isolated(self):
        ds = two_team_panel()
        specs = [
            ModelSpec(name="ok", include_dynamics=False),
            ModelSpec(name="broken", predictors=("nope",), include_dynamics=False),
        ]
        comp = model_table(ds, specs, options=FAST)
        assert isinstance(comp.columns[0], FitResult)
        assert comp.columns[1].error  # second column carries the failure
        assert comp.best_aic == "ok"


class TestFitResultJson:
    def make_result(self):
        spec = ModelSpec(
            name="demo",
            predictors=("x1",),
            include_dynamics=True,
            bounds_regime="bounded",
            penalty_lambda=0.0,
        )
        coef = Coefficients(
            omega={"a": 0.5, "b": -0.25, "c": -0.25}, beta=(2.0,), phi=0.5, alpha=0.125
        )
        return FitResult(
            spec=spec,
            coef=coef,
            loglik=-4.5,
            penalized_objective=-4.5,
            aic=19.0,
            n_free=5,
            standard_errors={
                "omega[a]": 0.5,
                "omega[b]": 0.25,
                "beta[x1]": 1.0,
                "phi": 0.125,
                "alpha": None,
            },
            p_values={
                "omega[a]": 0.5,
                "omega[b]": 0.0625,
                "beta[x1]": 0.25,
                "phi": 1.0,
                "alpha": None,
            },
            convergence=ConvergenceInfo(
                restarts=10,
                converged_starts=10,
                best_start=0,
                nfev=1234,
                iterations=789,
                xatol=0.001,
                fatol=0.25,
                maxfev=1000,
                success=True,
            ),
            partition=PartitionReport(passed=True, partition=None, never_appearing=()),
            notes=("alpha at lower bound: standard error suppressed",),
        )

    def test_golden_bytes(self):
        got = canonical_json(fit_result_to_dict(self.make_result()))
        want = textwrap.dedent(
            """\
            {
              "spec": {
                "name": "demo",
                "predictors": [
                  "x1"
                ],
                "include_dynamics": true,
                "bounds_regime": "bounded",
                "penalty_lambda": 0
              },
              "coefficients": {
                "omega": {
                  "a": 0.5,
                  "b": -0.25,
                  "c": -0.25
                },
                "beta": {
                  "x1": 2
                },
                "phi": 0.5,
                "alpha": 0.125
              },
              "derived_omega_team": "c",
              "loglik": -4.5,
              "penalized_objective": -4.5,
              "aic": 19,
              "n_free": 5,
              "standard_errors": {
                "omega[a]": 0.5,
                "omega[b]": 0.25,
                "beta[x1]": 1,
                "phi": 0.125,
                "alpha": null
              },
              "p_values": {
                "omega[a]": 0.5,
                "omega[b]": 0.0625,
                "beta[x1]": 0.25,
                "phi": 1,
                "alpha": null
              },
              "convergence": {
                "restarts": 10,
                "converged_starts": 10,
                "best_start": 0,
                "nfev": 1234,
                "iterations": 789,
                "xatol": 0.001,
                "fatol": 0.25,
                "maxfev": 1000,
                "success": true
              },
              "partition_check": {
                "passed": true,
                "partition": null,
                "never_appearing": []
              },
              "notes": [
                "alpha at lower bound: standard error suppressed"
              ]
            }"""
        )
        assert got == want

    def test_seventeen_digit_floats_roundtrip(self):
        import json

        fr = self.make_result()
        object.__setattr__(fr.coef, "phi", 1.0 / 3.0)
        doc = json.loads(canonical_json(fit_result_to_dict(fr)))
        assert doc["coefficients"]["phi"] == 1.0 / 3.0
