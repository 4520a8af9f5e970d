"""
Bounded-variable primal simplex on a dense tableau.

Variables are shifted so every column has lower bound 0 (free columns are split),
inequality rows get slack columns and rows whose initial residual cannot be
covered by their slack get an artificial column. Rows and structural columns are
equilibrated with power-of-two factors before the first pivot. Phase 1 minimizes
the sum of artificials, phase 2 the objective. Pricing is Dantzig's rule with a
switch to Bland's rule after a run of degenerate pivots; the ratio test is a
two-pass Harris test that prefers the largest pivot among near-ties. Every tie
goes to the lowest index, so identical inputs give identical pivot sequences.

The tableau is refactored from the basis columns every ``refactor_every`` pivots
and before optimality is declared. A refactor that finds a (numerically)
singular basis rolls back to the last basis that factored cleanly and tightens
the pivot tolerance.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from lib.mip.model import LpArrays, MipModel, Sense

logger = logging.getLogger(__name__)

PIVOT_TOLERANCE = 1e-9
MAX_PIVOT_TOLERANCE = 1e-7
FEASIBILITY_TOLERANCE = 1e-9
FACTOR_RESIDUAL = 1e-5


class SimplexStallError(Exception):
    """Raised when the pivot limit is reached or the basis cannot be kept regular."""

    pass


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class LpResult:
    """Result of an LP solve; ``x``, duals and costs are None unless optimal."""

    status: LpStatus
    x: Optional[np.ndarray] = None
    objective: float = math.nan
    duals: Optional[np.ndarray] = None
    reduced_costs: Optional[np.ndarray] = None
    dual_objective: float = math.nan
    pivots: int = 0
    phase1_pivots: int = 0
    recoveries: int = 0

    @property
    def is_optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def equilibrate(
    A: np.ndarray, passes: int = 4
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Geometric-mean row and column scale factors, rounded to powers of two.

    Returns:
        (row_scale, col_scale) such that row_scale[:, None] * A * col_scale has
        entries of magnitude close to 1. Empty rows and columns keep factor 1.
    """
    m, n = A.shape
    rows = np.ones(m)
    cols = np.ones(n)
    if A.size == 0:
        return rows, cols
    magnitude = np.abs(A)
    nonzero = magnitude > 0.0
    for _ in range(passes):
        scaled = magnitude * rows[:, None] * cols[None, :]
        big = scaled.max(axis=1, initial=0.0)
        small = np.where(nonzero, scaled, np.inf).min(axis=1, initial=np.inf)
        has = big > 0.0
        rows[has] /= np.sqrt(big[has] * small[has])
        scaled = magnitude * rows[:, None] * cols[None, :]
        big = scaled.max(axis=0, initial=0.0)
        small = np.where(nonzero, scaled, np.inf).min(axis=0, initial=np.inf)
        has = big > 0.0
        cols[has] /= np.sqrt(big[has] * small[has])
    # powers of two keep the scaled data exact
    return np.exp2(np.round(np.log2(rows))), np.exp2(np.round(np.log2(cols)))


class BoundedSimplex:
    """Two-phase bounded-variable primal simplex over an ``LpArrays`` instance."""

    def __init__(
        self,
        arrays: LpArrays,
        lb: Optional[np.ndarray] = None,
        ub: Optional[np.ndarray] = None,
        max_pivots: int = 50_000,
        refactor_every: int = 50,
        degenerate_limit: int = 30,
        tolerance: float = 1e-9,
        scaling: bool = True,
        max_recoveries: int = 4,
    ) -> None:
        self.log = logging.getLogger(self.__class__.__name__)
        if max_pivots < 1:
            raise ValueError("max_pivots must be positive")
        if refactor_every < 1:
            raise ValueError("refactor_every must be positive")
        self.arrays = arrays
        self.lb = np.array(arrays.lb if lb is None else lb, dtype=float)
        self.ub = np.array(arrays.ub if ub is None else ub, dtype=float)
        self.max_pivots = max_pivots
        self.refactor_every = refactor_every
        self.degenerate_limit = degenerate_limit
        self.tol = tolerance
        self.scaling = scaling
        self.max_recoveries = max_recoveries
        self.pivot_tol = PIVOT_TOLERANCE
        self.feas_tol = FEASIBILITY_TOLERANCE
        self.pivots = 0
        self.recoveries = 0

    # --- public ---

    def solve(self) -> LpResult:
        if np.any(self.lb > self.ub + 1e-12):
            return LpResult(status=LpStatus.INFEASIBLE)
        self._standardize()
        self._initial_basis()

        phase1_cost = np.zeros(self.n_total)
        phase1_cost[self.art_start :] = 1.0
        status = self._iterate(phase1_cost)
        if status is LpStatus.UNBOUNDED:
            # cannot happen for a sum of non-negative artificials
            raise SimplexStallError("Phase 1 reported an unbounded ray")
        infeasibility = float(
            sum(self.xB[r] for r, j in enumerate(self.basis) if j >= self.art_start)
        )
        scale = max(1.0, float(np.max(np.abs(self.b), initial=0.0)))
        phase1_pivots = self.pivots
        if infeasibility > 1e-7 * scale:
            self.log.debug(f"LP infeasible: phase 1 optimum {infeasibility:.3e}")
            return LpResult(
                status=LpStatus.INFEASIBLE,
                pivots=self.pivots,
                phase1_pivots=phase1_pivots,
                recoveries=self.recoveries,
            )

        self.u[self.art_start :] = 0.0
        self._drive_out_artificials()

        phase2_cost = np.zeros(self.n_total)
        phase2_cost[: self.n_z] = self.c
        status = self._iterate(phase2_cost)
        if status is LpStatus.UNBOUNDED:
            return LpResult(
                status=LpStatus.UNBOUNDED,
                pivots=self.pivots,
                phase1_pivots=phase1_pivots,
                recoveries=self.recoveries,
            )
        return self._result(phase2_cost, phase1_pivots)

    # --- setup ---

    def _standardize(self) -> None:
        a = self.arrays
        n = a.c.shape[0]
        offset = np.zeros(n)
        columns: List[Tuple[int, float]] = []
        z_upper: List[float] = []
        for j in range(n):
            lo, hi = self.lb[j], self.ub[j]
            if math.isfinite(lo):
                offset[j] = lo
                columns.append((j, 1.0))
                z_upper.append(hi - lo)
            elif math.isfinite(hi):
                offset[j] = hi
                columns.append((j, -1.0))
                z_upper.append(math.inf)
            else:
                columns.append((j, 1.0))
                z_upper.append(math.inf)
                columns.append((j, -1.0))
                z_upper.append(math.inf)
        self.n_x = n
        self.n_z = len(columns)
        self.transform = np.zeros((n, self.n_z))
        for k, (j, sign) in enumerate(columns):
            self.transform[j, k] = sign
        self.offset = offset

        A_z = a.A @ self.transform
        b_z = a.b - a.A @ offset
        c_z = self.transform.T @ a.c
        m = a.A.shape[0]
        self.m = m

        if self.scaling:
            row_scale, col_scale = equilibrate(A_z)
        else:
            row_scale, col_scale = np.ones(m), np.ones(self.n_z)
        self.row_scale = row_scale
        A_s = A_z * row_scale[:, None] * col_scale[None, :]
        self.b = b_z * row_scale
        self.c = c_z * col_scale
        upper = np.array(z_upper, dtype=float) / col_scale

        slack_rows = [i for i, s in enumerate(a.senses) if s is not Sense.EQ]
        slack = np.zeros((m, len(slack_rows)))
        self.slack_sign = np.zeros(m)
        self.slack_col = np.full(m, -1, dtype=int)
        for k, i in enumerate(slack_rows):
            sign = 1.0 if a.senses[i] is Sense.LE else -1.0
            slack[i, k] = sign
            self.slack_sign[i] = sign
            self.slack_col[i] = self.n_z + k
        self.n_slack = len(slack_rows)
        self.art_start = self.n_z + self.n_slack

        self.art_rows = [
            i
            for i in range(m)
            if self.slack_col[i] < 0 or self.b[i] * self.slack_sign[i] < 0.0
        ]
        art = np.zeros((m, len(self.art_rows)))
        for k, i in enumerate(self.art_rows):
            art[i, k] = 1.0 if self.b[i] >= 0.0 else -1.0
        self.M = np.hstack([A_s, slack, art])
        self.n_total = self.M.shape[1]
        self.col_scale = np.concatenate(
            [col_scale, np.ones(self.n_total - self.n_z)]
        )
        self.u = np.concatenate(
            [
                upper,
                np.full(self.n_slack, math.inf),
                np.full(len(self.art_rows), math.inf),
            ]
        )

    def _initial_basis(self) -> None:
        m = self.m
        basis = np.empty(m, dtype=int)
        art_of_row = {i: self.art_start + k for k, i in enumerate(self.art_rows)}
        for i in range(m):
            basis[i] = art_of_row.get(i, self.slack_col[i])
        self.basis = basis
        self.at_upper = np.zeros(self.n_total, dtype=bool)
        # every initial basic column is +-e_i, so B^-1 is diagonal
        signs = self.M[np.arange(m), basis] if m else np.zeros(0)
        self.T = self.M / signs[:, None] if m else np.zeros((0, self.n_total))
        self.xB = np.abs(self.b).astype(float)
        self.is_basic = np.zeros(self.n_total, dtype=bool)
        self.is_basic[basis] = True
        self._checkpoint()

    # --- core loop ---

    def _iterate(self, cost: np.ndarray) -> LpStatus:
        degenerate_run = 0
        use_bland = False
        since_refactor = 0
        dirty = False
        while True:
            if self.m:
                d = cost - cost[self.basis] @ self.T
            else:
                d = cost.copy()
            entering = self._price(d, use_bland)
            if entering < 0:
                if not dirty:
                    return LpStatus.OPTIMAL
                # confirm optimality on a fresh factorization
                self._refactor_or_restore()
                since_refactor = 0
                dirty = False
                continue

            sigma = -1.0 if self.at_upper[entering] else 1.0
            alpha = self.T[:, entering] if self.m else np.zeros(0)
            theta_row, row, to_upper = self._ratio_test(alpha * sigma, use_bland)
            theta_flip = self.u[entering]
            if math.isinf(theta_row) and math.isinf(theta_flip):
                if dirty:
                    self._refactor_or_restore()
                    since_refactor = 0
                    dirty = False
                    continue
                return LpStatus.UNBOUNDED

            if theta_flip <= theta_row:
                theta = theta_flip
                self.xB -= theta * sigma * alpha
                self.at_upper[entering] = not self.at_upper[entering]
            else:
                theta = theta_row
                self._pivot(entering, row, theta, sigma, alpha, to_upper)
                since_refactor += 1
            dirty = True

            self.pivots += 1
            if self.pivots >= self.max_pivots:
                raise SimplexStallError(
                    f"Simplex reached the pivot limit ({self.max_pivots})"
                )
            if theta <= 1e-12:
                degenerate_run += 1
                if degenerate_run >= self.degenerate_limit and not use_bland:
                    self.log.debug(
                        f"Switching to Bland's rule after {degenerate_run} degenerate pivots"
                    )
                    use_bland = True
            else:
                degenerate_run = 0
                use_bland = False
            if since_refactor >= self.refactor_every:
                if not self._refactor_or_restore():
                    degenerate_run = 0
                since_refactor = 0
                dirty = False

    def _price(self, d: np.ndarray, use_bland: bool) -> int:
        movable = ~self.is_basic & (self.u > 0.0)
        improving_up = movable & ~self.at_upper & (d < -self.tol)
        improving_down = movable & self.at_upper & (d > self.tol)
        candidates = np.flatnonzero(improving_up | improving_down)
        if candidates.size == 0:
            return -1
        if use_bland:
            return int(candidates[0])
        # argmax returns the first maximum, i.e. the lowest index on ties
        return int(candidates[np.argmax(np.abs(d[candidates]))])

    def _ratio_test(
        self, direction: np.ndarray, use_bland: bool
    ) -> Tuple[float, int, bool]:
        """Returns (step, row, leaves at upper); ties follow the pricing mode."""
        if self.m == 0:
            return math.inf, -1, False
        upper_bounds = self.u[self.basis]
        decreasing = direction > self.pivot_tol
        increasing = (direction < -self.pivot_tol) & np.isfinite(upper_bounds)
        ratios = np.full(self.m, math.inf)
        ratios[decreasing] = np.maximum(self.xB[decreasing], 0.0) / direction[decreasing]
        ratios[increasing] = (
            np.maximum(upper_bounds[increasing] - self.xB[increasing], 0.0)
            / -direction[increasing]
        )
        to_upper = increasing.copy()
        best = float(ratios.min())
        if math.isinf(best):
            return math.inf, -1, False

        if use_bland:
            ties = np.flatnonzero(ratios <= best + 1e-12)
        else:
            # bounds relaxed by the feasibility tolerance give the longest
            # admissible step; the largest pivot inside it is taken
            relaxed = np.full(self.m, math.inf)
            relaxed[decreasing] = (
                self.xB[decreasing] + self.feas_tol
            ) / direction[decreasing]
            relaxed[increasing] = (
                upper_bounds[increasing] - self.xB[increasing] + self.feas_tol
            ) / -direction[increasing]
            limit = max(float(relaxed.min()), best)
            ties = np.flatnonzero(ratios <= limit)
            magnitude = np.abs(direction[ties])
            ties = ties[magnitude >= magnitude.max() * (1.0 - 1e-12)]
        row = int(ties[np.argmin(self.basis[ties])])
        return float(ratios[row]), row, bool(to_upper[row])

    def _pivot(
        self,
        entering: int,
        row: int,
        theta: float,
        sigma: float,
        alpha: np.ndarray,
        to_upper: bool,
    ) -> None:
        leaving = self.basis[row]
        start = self.u[entering] if self.at_upper[entering] else 0.0
        self.xB -= theta * sigma * alpha
        self.xB[row] = start + sigma * theta
        self._exchange(row, entering)
        self.at_upper[leaving] = to_upper

    def _exchange(self, row: int, entering: int) -> None:
        leaving = self.basis[row]
        pivot_row = self.T[row] / self.T[row, entering]
        column = self.T[:, entering].copy()
        column[row] = 0.0
        self.T -= np.outer(column, pivot_row)
        self.T[row] = pivot_row
        self.basis[row] = entering
        self.is_basic[entering] = True
        self.is_basic[leaving] = False
        self.at_upper[entering] = False

    # --- factorization ---

    def _checkpoint(self) -> None:
        self._saved = (self.basis.copy(), self.at_upper.copy())

    def _refactor(self) -> bool:
        """Rebuild T and xB from the basis columns; False if the basis is singular."""
        if not self.m:
            return True
        B = self.M[:, self.basis]
        nonbasic_upper = np.flatnonzero(self.at_upper & ~self.is_basic)
        rhs = self.b - self.M[:, nonbasic_upper] @ self.u[nonbasic_upper]
        try:
            with np.errstate(all="ignore"):
                solved = np.linalg.solve(B, np.column_stack([self.M, rhs]))
        except np.linalg.LinAlgError:
            return False
        T, xB = solved[:, :-1], solved[:, -1]
        if not (np.all(np.isfinite(T)) and np.all(np.isfinite(xB))):
            return False
        residual = float(np.max(np.abs(T[:, self.basis] - np.eye(self.m))))
        if residual > FACTOR_RESIDUAL:
            return False
        self.T, self.xB = T, xB
        self._checkpoint()
        return True

    def _refactor_or_restore(self) -> bool:
        """Refactor; on a singular basis roll back and return False."""
        if self._refactor():
            return True
        self.recoveries += 1
        if self.recoveries > self.max_recoveries:
            raise SimplexStallError(
                f"Basis became singular {self.recoveries} times after {self.pivots} pivots"
            )
        basis, at_upper = self._saved
        self.basis = basis.copy()
        self.at_upper = at_upper.copy()
        self.is_basic[:] = False
        self.is_basic[self.basis] = True
        self.pivot_tol = min(self.pivot_tol * 10.0, MAX_PIVOT_TOLERANCE)
        self.refactor_every = max(5, self.refactor_every // 2)
        self.log.warning(
            f"Singular basis after {self.pivots} pivots; restored the last stable "
            f"basis (pivot tolerance {self.pivot_tol:.0e})"
        )
        if not self._refactor():
            raise SimplexStallError("The last stable basis no longer factors")
        return False

    def _drive_out_artificials(self) -> None:
        changed = False
        for row in range(self.m):
            if self.basis[row] < self.art_start:
                continue
            weights = np.abs(self.T[row, : self.art_start])
            weights[self.is_basic[: self.art_start]] = 0.0
            entering = int(np.argmax(weights)) if weights.size else -1
            if entering < 0 or weights[entering] <= 1e-7:
                continue  # redundant row, the artificial stays basic at zero
            value = self.u[entering] if self.at_upper[entering] else 0.0
            leaving = self.basis[row]
            self._exchange(row, entering)
            self.at_upper[leaving] = False
            self.xB[row] = value
            changed = True
        if changed:
            self._refactor_or_restore()
        else:
            self._checkpoint()

    # --- result ---

    def _result(self, cost: np.ndarray, phase1_pivots: int) -> LpResult:
        z_all = np.zeros(self.n_total)
        z_all[self.at_upper] = self.u[self.at_upper]
        z_all[self.basis] = self.xB
        z_all *= self.col_scale
        x = self.offset + self.transform @ z_all[: self.n_z]
        x = np.clip(x, self.lb, self.ub)
        a = self.arrays

        if self.m:
            B = self.M[:, self.basis]
            try:
                y_scaled = np.linalg.solve(B.T, cost[self.basis])
            except np.linalg.LinAlgError:
                y_scaled = np.linalg.lstsq(B.T, cost[self.basis], rcond=None)[0]
            y = y_scaled * self.row_scale
        else:
            y = np.zeros(0)
        reduced = a.c - a.A.T @ y
        objective = float(a.c @ x + a.objective_constant)
        dual_objective = float(y @ a.b + reduced @ x + a.objective_constant)
        self.log.debug(
            f"LP optimal: objective {objective:.6g} after {self.pivots} pivots "
            f"({phase1_pivots} in phase 1, {self.recoveries} recoveries)"
        )
        return LpResult(
            status=LpStatus.OPTIMAL,
            x=x,
            objective=objective,
            duals=y,
            reduced_costs=reduced,
            dual_objective=dual_objective,
            pivots=self.pivots,
            phase1_pivots=phase1_pivots,
            recoveries=self.recoveries,
        )


def solve_lp_arrays(
    arrays: LpArrays,
    lb: Optional[np.ndarray] = None,
    ub: Optional[np.ndarray] = None,
    **options: float,
) -> LpResult:
    """Solve the LP relaxation of array data, optionally overriding bounds."""
    return BoundedSimplex(arrays, lb=lb, ub=ub, **options).solve()  # type: ignore[arg-type]


def solve_lp(
    model: MipModel,
    lb: Optional[np.ndarray] = None,
    ub: Optional[np.ndarray] = None,
    **options: float,
) -> LpResult:
    """
    Solve the LP relaxation of a model (binaries treated as [0, 1]).

    Args:
        model: The model.
        lb: Optional lower-bound override per variable.
        ub: Optional upper-bound override per variable.
        **options: Passed to BoundedSimplex (max_pivots, refactor_every, scaling, ...).

    Returns:
        The LP result.

    Raises:
        SimplexStallError: If the pivot limit is reached or the basis cannot be
            kept regular.
    """
    return solve_lp_arrays(model.to_arrays(), lb=lb, ub=ub, **options)
