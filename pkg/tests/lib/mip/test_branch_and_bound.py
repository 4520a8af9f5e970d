"""
Unit tests for the branch-and-bound search.
"""

import math

import numpy as np
import pytest

from lib.mip.branch_and_bound import (
    BranchAndBound,
    MipStatus,
    enumerate_binaries,
    relative_gap,
    solve_mip,
)
from lib.mip.model import MipModel, MipModelError


def knapsack():
    """max 5a + 4b + 3c s.t. 2a + 3b + c <= 5, written as a minimization."""
    model = MipModel("knapsack")
    a, b, c = (model.add_binary(n) for n in "abc")
    model.add_constraint(2 * a + 3 * b + c, "<=", 5.0)
    model.set_objective(-5 * a - 4 * b - 3 * c)
    return model


def random_mip(rng, binaries=6, continuous=2, rows=4):
    model = MipModel("random")
    xs = [model.add_binary(f"b{j}") for j in range(binaries)]
    upper = rng.uniform(1.0, 5.0, size=continuous)
    xs += [model.add_var(f"x{j}", ub=float(upper[j])) for j in range(continuous)]
    for i in range(rows):
        coefs = rng.uniform(-1.0, 3.0, size=len(xs))
        model.add_constraint(
            sum(float(c) * x for c, x in zip(coefs, xs)),
            "<=",
            float(rng.uniform(1.0, 4.0)),
            name=f"r{i}",
        )
    cost = rng.uniform(-5.0, 5.0, size=len(xs))
    model.set_objective(sum(float(c) * x for c, x in zip(cost, xs)))
    return model


class TestSolveMip:
    def test_knapsack(self):
        model = knapsack()
        solution = solve_mip(model, gap_limit=0.0)
        assert solution.status is MipStatus.OPTIMAL
        assert solution.is_success
        assert solution.objective == pytest.approx(-9.0)
        assert [solution.value(model.variable(n)) for n in "abc"] == pytest.approx(
            [1.0, 1.0, 0.0]
        )
        assert solution.gap == 0.0
        assert solution.max_violation <= 1e-9

    def test_infeasible(self):
        model = MipModel()
        b1, b2 = model.add_binary("b1"), model.add_binary("b2")
        model.add_constraint(b1 + b2, ">=", 3.0)
        solution = solve_mip(model)
        assert solution.status is MipStatus.INFEASIBLE
        assert not solution.is_success
        with pytest.raises(MipModelError):
            solution.value(b1)

    def test_pure_lp(self):
        model = MipModel()
        x = model.add_var("x", ub=2.0)
        model.set_objective(-x)
        solution = solve_mip(model)
        assert solution.status is MipStatus.OPTIMAL
        assert solution.objective == pytest.approx(-2.0)
        assert solution.node_count == 0

    def test_unbounded_relaxation(self):
        model = MipModel()
        x = model.add_var("x")
        model.add_binary("b")
        model.set_objective(-x)
        with pytest.raises(MipModelError, match="unbounded"):
            solve_mip(model)

    def test_node_limit_keeps_the_incumbent(self):
        # the root relaxation is fractional in b; one branch gives the incumbent
        # a + c (value 8) and leaves the b = 1 child open at 9.5
        solution = solve_mip(knapsack(), gap_limit=0.0, node_limit=1)
        assert solution.status is MipStatus.ITERATION_LIMIT
        assert not solution.is_success
        assert solution.objective == pytest.approx(-8.0)
        assert solution.best_bound == pytest.approx(-9.5)
        assert solution.gap == pytest.approx(1.5 / 8.0)

    def test_gap_limit_stops_early(self):
        solution = solve_mip(knapsack(), gap_limit=0.5)
        assert solution.status is MipStatus.GAP_LIMIT
        assert solution.is_success
        assert solution.gap <= 0.5

    @pytest.mark.slow
    def test_matches_enumeration(self):
        rng = np.random.default_rng(9)
        for i in range(50):
            binaries = 2 + i % 11
            model = random_mip(rng, binaries=binaries)
            expected, _ = enumerate_binaries(model)
            solution = solve_mip(model, gap_limit=0.0)
            if math.isinf(expected):
                assert solution.status is MipStatus.INFEASIBLE
                continue
            assert solution.status is MipStatus.OPTIMAL
            assert solution.objective == pytest.approx(expected, abs=1e-6)
            x = solution.x
            assert np.all(np.abs(x[:binaries] - np.round(x[:binaries])) <= 1e-9)

    def test_to_dict(self):
        data = solve_mip(knapsack(), gap_limit=0.0).to_dict()
        assert data["status"] == "optimal"
        assert set(data) == {
            "status",
            "objective",
            "best_bound",
            "gap",
            "node_count",
            "lp_pivots",
            "lp_failures",
            "wall_time_s",
        }

    def test_stalled_relaxation_is_not_infeasible(self):
        solution = solve_mip(knapsack(), lp_options={"max_pivots": 1})
        assert solution.status is MipStatus.ITERATION_LIMIT
        assert solution.lp_failures == 1
        assert solution.x is None


class TestBranchAndBound:
    def test_invalid_options(self):
        with pytest.raises(ValueError):
            BranchAndBound(knapsack(), gap_limit=-1.0)
        with pytest.raises(ValueError):
            BranchAndBound(knapsack(), node_limit=0)

    def test_enumeration_limit(self):
        model = MipModel()
        for j in range(21):
            model.add_binary(f"b{j}")
        with pytest.raises(ValueError):
            enumerate_binaries(model)


class TestRelativeGap:
    def test_no_incumbent(self):
        assert relative_gap(math.inf, 0.0) == math.inf

    def test_relative(self):
        assert relative_gap(10.0, 9.0) == pytest.approx(0.1)
        assert relative_gap(-10.0, -11.0) == pytest.approx(0.1)

    def test_absolute_floor(self):
        assert relative_gap(1.0, 1.0 - 1e-12) == 0.0
        assert relative_gap(1.0, 2.0) == 0.0
