"""
Unit tests for the bounded-variable simplex.
"""

import math

import numpy as np
import pytest

from lib.mip.model import MipModel
from lib.mip.simplex import (
    BoundedSimplex,
    LpStatus,
    SimplexStallError,
    equilibrate,
    solve_lp,
)


def two_by_two():
    """min -x - y s.t. x + 2y <= 4, 3x + y <= 6."""
    model = MipModel("lp")
    x = model.add_var("x")
    y = model.add_var("y")
    model.add_constraint(x + 2 * y, "<=", 4.0)
    model.add_constraint(3 * x + y, "<=", 6.0)
    model.set_objective(-x - y)
    return model


class TestSolveLp:
    def test_textbook_optimum(self):
        result = solve_lp(two_by_two())
        assert result.status is LpStatus.OPTIMAL
        np.testing.assert_allclose(result.x, [1.6, 1.2], atol=1e-10)
        assert result.objective == pytest.approx(-2.8)
        assert result.dual_objective == pytest.approx(result.objective)
        assert result.pivots > 0

    def test_duals_have_the_right_sign(self):
        result = solve_lp(two_by_two())
        # both rows bind; a minimization with <= rows has non-positive duals
        assert np.all(result.duals <= 1e-12)
        np.testing.assert_allclose(result.reduced_costs, 0.0, atol=1e-10)

    def test_infeasible(self):
        model = MipModel()
        x = model.add_var("x")
        model.add_constraint(x, ">=", 2.0)
        model.add_constraint(x, "<=", 1.0)
        model.set_objective(x)
        result = solve_lp(model)
        assert result.status is LpStatus.INFEASIBLE
        assert result.x is None
        assert not result.is_optimal

    def test_unbounded(self):
        model = MipModel()
        x = model.add_var("x")
        y = model.add_var("y")
        model.add_constraint(x - y, "<=", 1.0)
        model.set_objective(-x)
        assert solve_lp(model).status is LpStatus.UNBOUNDED

    def test_free_variable_and_equality(self):
        model = MipModel()
        x = model.add_var("x", lb=-math.inf)
        y = model.add_var("y", ub=3.0)
        model.add_constraint(x + y, "=", 1.0)
        model.set_objective(x)
        result = solve_lp(model)
        assert result.is_optimal
        np.testing.assert_allclose(result.x, [-2.0, 3.0], atol=1e-10)

    def test_upper_bounded_only_variable(self):
        model = MipModel()
        x = model.add_var("x", lb=-math.inf, ub=5.0)
        model.add_constraint(x, ">=", -2.0)
        model.set_objective(-x)
        result = solve_lp(model)
        assert result.objective == pytest.approx(-5.0)

    def test_greater_equal_rows_need_phase_one(self):
        model = MipModel()
        x = model.add_var("x", ub=10.0)
        y = model.add_var("y", ub=10.0)
        model.add_constraint(x + y, ">=", 3.0)
        model.add_constraint(x - y, "=", 1.0)
        model.set_objective(2 * x + y + 7.0)
        result = solve_lp(model)
        assert result.is_optimal
        np.testing.assert_allclose(result.x, [2.0, 1.0], atol=1e-10)
        assert result.objective == pytest.approx(12.0)
        assert result.phase1_pivots > 0

    def test_bound_override(self):
        model = two_by_two()
        result = solve_lp(model, lb=np.array([0.0, 0.0]), ub=np.array([1.0, 1.0]))
        np.testing.assert_allclose(result.x, [1.0, 1.0], atol=1e-10)
        crossed = solve_lp(model, lb=np.array([2.0, 0.0]), ub=np.array([1.0, 1.0]))
        assert crossed.status is LpStatus.INFEASIBLE

    def test_no_constraints(self):
        model = MipModel()
        x = model.add_var("x", lb=-1.0, ub=4.0)
        model.set_objective(-x)
        result = solve_lp(model)
        assert result.x[0] == pytest.approx(4.0)

    def test_is_deterministic(self):
        first = solve_lp(two_by_two())
        second = solve_lp(two_by_two())
        assert first.pivots == second.pivots
        np.testing.assert_array_equal(first.x, second.x)


class TestBoundedSimplex:
    def test_pivot_limit(self):
        with pytest.raises(SimplexStallError):
            BoundedSimplex(two_by_two().to_arrays(), max_pivots=1).solve()

    def test_invalid_pivot_limit(self):
        with pytest.raises(ValueError):
            BoundedSimplex(two_by_two().to_arrays(), max_pivots=0)

    def test_random_feasible_lps_agree_with_duality(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            model = MipModel()
            upper = rng.uniform(1.0, 4.0, size=5)
            xs = [model.add_var(f"x{j}", ub=float(upper[j])) for j in range(5)]
            for i in range(4):
                coefs = rng.uniform(-1.0, 2.0, size=5)
                model.add_constraint(
                    sum(float(c) * x for c, x in zip(coefs, xs)),
                    "<=",
                    float(rng.uniform(0.5, 3.0)),
                    name=f"r{i}",
                )
            cost = rng.normal(size=5)
            model.set_objective(sum(float(c) * x for c, x in zip(cost, xs)))
            result = solve_lp(model)
            assert result.is_optimal
            assert model.max_violation(result.x) <= 1e-9
            assert result.dual_objective == pytest.approx(result.objective, abs=1e-8)

    def test_badly_scaled_rows(self):
        """Test that equilibration leaves the optimum and duals unchanged."""
        model = MipModel("scaled")
        x = model.add_var("x")
        y = model.add_var("y")
        model.add_constraint(1e-6 * x + 2e-6 * y, "<=", 4e-6)
        model.add_constraint(3e4 * x + 1e4 * y, "<=", 6e4)
        model.set_objective(-x - y)
        for scaling in (True, False):
            result = solve_lp(model, scaling=scaling)
            assert result.is_optimal
            np.testing.assert_allclose(result.x, [1.6, 1.2], atol=1e-9)
            assert result.dual_objective == pytest.approx(result.objective, abs=1e-9)

    def test_singular_refactor_rolls_back(self, monkeypatch):
        """Test that a failed refactor restores the last stable basis."""
        original = BoundedSimplex._refactor
        calls = {"count": 0}

        def fails_once(self):
            calls["count"] += 1
            if calls["count"] == 1:
                return False
            return original(self)

        monkeypatch.setattr(BoundedSimplex, "_refactor", fails_once)
        result = solve_lp(two_by_two(), refactor_every=1)
        assert result.is_optimal
        assert result.recoveries == 1
        np.testing.assert_allclose(result.x, [1.6, 1.2], atol=1e-10)

    def test_persistent_singular_basis_stalls(self, monkeypatch):
        monkeypatch.setattr(BoundedSimplex, "_refactor", lambda self: False)
        with pytest.raises(SimplexStallError):
            solve_lp(two_by_two(), refactor_every=1)

    def test_singular_basis_is_reported(self):
        """Test that a singular basis makes _refactor return False instead of raising."""
        simplex = BoundedSimplex(two_by_two().to_arrays())
        simplex.solve()
        simplex.basis[:] = simplex.basis[0]
        assert simplex._refactor() is False


class TestEquilibrate:
    def test_factors_are_powers_of_two(self):
        A = np.array([[1e-6, 2e-6], [3e4, 1e4]])
        rows, cols = equilibrate(A)
        np.testing.assert_array_equal(np.log2(rows), np.round(np.log2(rows)))
        np.testing.assert_array_equal(np.log2(cols), np.round(np.log2(cols)))
        scaled = np.abs(A * rows[:, None] * cols[None, :])
        assert scaled.max() <= 4.0
        assert scaled.min() >= 0.25

    def test_empty_rows_keep_unit_scale(self):
        A = np.array([[0.0, 0.0], [2.0, 8.0]])
        rows, cols = equilibrate(A)
        assert rows[0] == 1.0
        assert np.all(np.isfinite(cols))
