"""
Tests for the successive inner-approximation loop and the experiments.
"""

from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from lib.distflow.envelope import EnvelopeError
from lib.distflow.feeder import LoadProfile, parse_profile
from lib.distflow.loadflow import DeviceSetting, solve_loadflow
from lib.distflow.matrices import build_matrices
from lib.mip.branch_and_bound import MipSolution, MipStatus
from lib.mip.simplex import SimplexStallError
from lib.vpo.algorithm import (
    VpoOptions,
    VpoSolver,
    evaluate_objective,
    run_algorithm1,
    scale_study,
    schedule_horizon,
    sweep_alpha,
    sweep_vlow,
)
from lib.vpo.problem import P3InfeasibleError, P3SolverError
from tests.conftest import FIXTURES


def far_load(feeder, p, q):
    far = feeder.canonical_index(2)
    P_L = np.zeros(feeder.node_count)
    Q_L = np.zeros(feeder.node_count)
    P_L[far - 1] = p
    Q_L[far - 1] = q
    return P_L, Q_L


class TestVpoOptions:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"epsilon": 0.0},
            {"max_iters": 0},
            {"gap_limit": -1.0},
            {"objective_segments": 1},
            {"envelope_segments": 0},
            {"quad_mode": "cubic"},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            VpoOptions(**kwargs)

    def test_defaults(self):
        options = VpoOptions()
        assert options.quad_mode == "const"
        assert options.epsilon == 1e-6
        assert options.max_iters == 20


class TestEvaluateObjective:
    def test_no_load_is_free(self, single_branch):
        op = solve_loadflow(single_branch, np.zeros(1), np.zeros(1))
        assert evaluate_objective(single_branch, op, {}) == 0.0

    def test_der_cost_is_the_secant_value(self, cap_feeder):
        setting = DeviceSetting(q_g={1: 0.05})
        op = solve_loadflow(cap_feeder, np.zeros(1), np.zeros(1), setting)
        # 0.05 is the upper breakpoint; the voltage stays inside the tight band
        assert evaluate_objective(cap_feeder, op, {1: 0.05}) == pytest.approx(0.0025)

    def test_violation_is_weighted(self, three_node):
        P_L, Q_L = far_load(three_node, 0.5, 0.3)
        op = solve_loadflow(three_node, -P_L, -Q_L)
        feeder = three_node.with_alpha(2.0)
        expected = 2.0 * np.maximum(0.0, feeder.v_lo - op.V).sum()
        assert evaluate_objective(feeder, op, {}) == pytest.approx(expected)


class TestVpoSolver:
    def test_no_load_converges_at_once(self, single_branch):
        run = run_algorithm1(single_branch, np.zeros(1), np.zeros(1))
        assert run.converged
        assert run.stop_reason == "converged"
        assert len(run.iterates) == 1
        assert run.objective == pytest.approx(0.0, abs=1e-12)
        assert run.monotone
        assert run.all_feasible

    def test_der_support_under_heavy_load(self, three_node):
        feeder = three_node.with_alpha(10.0)
        far = feeder.canonical_index(2)
        P_L, Q_L = far_load(feeder, 0.5, 0.3)
        run = VpoSolver(feeder).run(P_L, Q_L)
        first = run.iterates[0]
        assert first.accepted
        assert first.feasibility.hard_feasible
        assert run.setting.q_g[far] > 0.09
        assert run.q_g[far - 1] == pytest.approx(run.setting.q_g[far])
        assert run.objective < run.initial_objective
        assert run.monotone
        assert run.all_feasible
        assert run.stop_reason in ("converged", "rejected", "max-iters")

    def test_run_dict(self, three_node):
        P_L, Q_L = far_load(three_node, 0.2, 0.1)
        data = run_algorithm1(three_node, P_L, Q_L).to_dict()
        assert data["feeder"] == three_node.name
        assert data["iterations"] == len(data["iterates"])
        first = data["iterates"][0]
        assert first["iteration"] == 1
        assert set(first["model"]) == {
            "variables",
            "binaries",
            "continuous",
            "rows",
            "nonzeros",
        }
        assert first["mip"]["status"] in ("optimal", "gap-limit")

    def test_infeasible_problem(self, three_node):
        P_L, Q_L = far_load(three_node, 1.0, 0.6)
        with pytest.raises(P3InfeasibleError) as info:
            run_algorithm1(three_node, P_L, Q_L)
        assert info.value.iteration == 1

    @pytest.mark.parametrize(
        "failure",
        [SimplexStallError("stalled"), np.linalg.LinAlgError("Singular matrix")],
    )
    def test_engine_failure_is_reported(self, three_node, monkeypatch, failure):
        def broken(*args, **kwargs):
            raise failure

        monkeypatch.setattr("lib.vpo.algorithm.solve_mip", broken)
        P_L, Q_L = far_load(three_node, 0.2, 0.1)
        with pytest.raises(P3SolverError, match=type(failure).__name__) as info:
            run_algorithm1(three_node, P_L, Q_L)
        assert info.value.iteration == 1
        assert info.value.__cause__ is failure

    def test_stalled_tree_without_incumbent(self, three_node, monkeypatch):
        stalled = MipSolution(status=MipStatus.ITERATION_LIMIT, lp_failures=2)
        monkeypatch.setattr(
            "lib.vpo.algorithm.solve_mip", lambda *args, **kwargs: stalled
        )
        P_L, Q_L = far_load(three_node, 0.2, 0.1)
        with pytest.raises(P3SolverError, match="2 node") as info:
            run_algorithm1(three_node, P_L, Q_L)
        assert info.value.iteration == 1

    def test_public_steps(self, three_node):
        solver = VpoSolver(three_node)
        P_L, Q_L = far_load(three_node, 0.2, 0.1)
        setting = DeviceSetting.neutral(three_node)
        op = solver.loadflow(-P_L, -Q_L, setting)
        np.testing.assert_allclose(op.V, solve_loadflow(three_node, -P_L, -Q_L).V)
        problem = solver.build_problem(op, setting)
        solution = solver.solve_problem(problem, 1)
        assert solution.is_success
        assert solution.lp_failures == 0

    def test_failed_certificate(self, three_node):
        m = build_matrices(three_node)
        H = m.H.copy()
        H[0, 1] = -1.0
        with pytest.raises(EnvelopeError, match="certificate"):
            VpoSolver(three_node, matrices=replace(m, H=H))

    def test_initial_setting_is_validated(self, single_branch):
        with pytest.raises(ValueError):
            VpoSolver(single_branch).run(
                np.zeros(1), np.zeros(1), initial=DeviceSetting(n_tr={0: 1})
            )

    def test_lp_dump(self, single_branch, tmp_path):
        options = VpoOptions(dump_lp_dir=tmp_path / "lp")
        run_algorithm1(single_branch, np.zeros(1), np.zeros(1), options)
        text = (tmp_path / "lp" / "p3_iter1.lp").read_text()
        assert "Minimize" in text
        assert text.rstrip().endswith("End")

    def test_pwl_mode(self, three_node):
        P_L, Q_L = far_load(three_node, 0.2, 0.1)
        run = run_algorithm1(three_node, P_L, Q_L, VpoOptions(quad_mode="pwl"))
        assert run.all_feasible
        assert run.iterates[0].sandwich_violation >= 0.0

    @pytest.mark.slow
    def test_ieee13_peak(self, ieee13):
        profile = parse_profile(FIXTURES / "ieee13_peak.csv", ieee13)
        P_L, Q_L = profile.period(0)
        run = run_algorithm1(ieee13, P_L, Q_L, VpoOptions(max_iters=5))
        assert run.monotone
        assert run.all_feasible
        for record in run.accepted:
            record.setting.validate(ieee13)


class TestSchedule:
    def test_offloading_with_caps(self, cap_feeder):
        profile = LoadProfile.from_arrays(
            cap_feeder, [[0.2], [1.0]], [[0.1], [0.5]], labels=["low", "high"]
        )
        result = schedule_horizon(cap_feeder, profile, compare_caps=True)
        assert result.failed == []
        frame = result.to_frame()
        assert isinstance(frame, pd.DataFrame)
        assert list(frame["label"]) == ["low", "high"]
        assert "cap_1" in frame
        assert "der_abs_total_no_caps" in frame
        assert result.offloading_holds() is True

    def test_failed_periods_are_reported(self, three_node):
        P_ok, Q_ok = far_load(three_node, 0.2, 0.1)
        P_bad, Q_bad = far_load(three_node, 1.0, 0.6)
        profile = LoadProfile.from_arrays(three_node, [P_ok, P_bad], [Q_ok, Q_bad])
        result = schedule_horizon(three_node, profile, max_workers=2)
        assert result.failed == [1]
        assert result.periods[0].ok
        assert "P3InfeasibleError" in result.periods[1].error
        assert result.offloading_holds() is None

    def test_cap_load_correlation_without_caps(self, three_node):
        P_L, Q_L = far_load(three_node, 0.2, 0.1)
        profile = LoadProfile.from_arrays(three_node, P_L, Q_L)
        result = schedule_horizon(three_node, profile)
        assert np.isnan(result.cap_load_correlation())


class TestSweeps:
    def test_alpha_sweep(self, three_node):
        P_L, Q_L = far_load(three_node, 0.5, 0.3)
        result = sweep_alpha(three_node, P_L, Q_L, [0.001, 0.1, 10.0])
        frame = result.to_frame()
        assert list(frame["value"]) == [0.001, 0.1, 10.0]
        assert list(frame["nominal"]) == [True, False, False]
        assert result.diagnostics() == {
            "slack_non_increasing": True,
            "der_non_decreasing": True,
        }

    @pytest.mark.parametrize("alphas", [[], [0.1, 0.01], [-1.0, 1.0]])
    def test_alpha_validation(self, three_node, alphas):
        with pytest.raises(ValueError):
            sweep_alpha(three_node, np.zeros(2), np.zeros(2), alphas)

    def test_vlow_sweep(self, three_node):
        P_L, Q_L = far_load(three_node, 0.2, 0.1)
        result = sweep_vlow(three_node, P_L, Q_L, [0.97, 0.98])
        frame = result.to_frame()
        assert result.parameter == "v_lo"
        assert len(frame) == 2
        assert frame["error"].isna().all()

    @pytest.mark.parametrize("v_lows", [[], [0.9], [1.03]])
    def test_vlow_validation(self, three_node, v_lows):
        with pytest.raises(ValueError):
            sweep_vlow(three_node, np.zeros(2), np.zeros(2), v_lows)


class TestScaleStudy:
    def test_binaries_grow_with_caps(self, cap_feeder):
        result = scale_study(cap_feeder, [0.5], [0.2], [0, 1])
        frame = result.to_frame()
        assert list(frame["cap_count"]) == [0, 1]
        assert list(frame["binaries"]) == [0, 3]
        assert set(frame["status"]) <= {"optimal", "gap-limit"}

    def test_count_out_of_range(self, cap_feeder):
        with pytest.raises(ValueError):
            scale_study(cap_feeder, [0.5], [0.2], [2])


def peak_load(feeder, name):
    return parse_profile(FIXTURES / name, feeder).period(0)


@pytest.mark.slow
class TestFeederRuns:
    """Full runs on the IEEE-13 and IEEE-37 fixtures."""

    @pytest.mark.parametrize(
        "feeder_name, profile_name",
        [("ieee13", "ieee13_peak.csv"), ("ieee37", "ieee37_peak.csv")],
    )
    def test_peak_converges(self, request, feeder_name, profile_name):
        feeder = request.getfixturevalue(feeder_name)
        P_L, Q_L = peak_load(feeder, profile_name)
        run = run_algorithm1(feeder, P_L, Q_L)
        assert run.converged
        assert len(run.iterates) <= 20
        assert run.final.error < 1e-6
        assert all(it.feasibility.hard_feasible for it in run.iterates)
        assert run.monotone
        assert run.objective <= run.initial_objective

    def test_second_iterate_improves_with_tap_held(self, ieee13):
        P_L, Q_L = peak_load(ieee13, "ieee13_peak.csv")
        run = run_algorithm1(ieee13, P_L, Q_L)
        assert len(run.accepted) >= 2
        first, second = run.accepted[:2]
        assert second.objective < first.objective
        assert second.setting.n_tr == first.setting.n_tr

    def test_reverse_flow_stays_feasible(self, ieee13):
        profile = parse_profile(FIXTURES / "ieee13_highpv.csv", ieee13)
        assert (profile.P_L < 0.0).any()
        result = schedule_horizon(ieee13, profile)
        assert result.failed == []
        for period in result.periods:
            assert all(it.feasibility.hard_feasible for it in period.run.iterates)
            assert period.run.monotone

    def test_daily_offloading(self, ieee13):
        profile = parse_profile(FIXTURES / "ieee13_daily.csv", ieee13)
        result = schedule_horizon(ieee13, profile, compare_caps=True)
        assert profile.horizon == 24
        assert result.failed == []
        assert result.offloading_holds() is True
        assert result.cap_load_correlation() > 0.0

    def test_alpha_sweep_brackets_default(self, ieee13):
        P_L, Q_L = peak_load(ieee13, "ieee13_peak.csv")
        result = sweep_alpha(ieee13, P_L, Q_L, [1e-4, 1e-3, 1e-2, 1e-1])
        frame = result.to_frame()
        assert frame["error"].isna().all()
        assert list(frame["nominal"]) == [False, True, False, False]
        assert result.diagnostics() == {
            "slack_non_increasing": True,
            "der_non_decreasing": True,
        }

    def test_scale_study_over_cap_counts(self, ieee37):
        P_L, Q_L = peak_load(ieee37, "ieee37_peak.csv")
        result = scale_study(ieee37, P_L, Q_L, range(1, 7))
        frame = result.to_frame()
        assert list(frame["cap_count"]) == [1, 2, 3, 4, 5, 6]
        assert list(frame["binaries"]) == sorted(frame["binaries"])
        assert set(frame["status"]) <= {"optimal", "gap-limit"}
        assert (frame["wall_time_s"] > 0.0).all()
