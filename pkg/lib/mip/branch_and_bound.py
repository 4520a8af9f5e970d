"""
Best-first branch-and-bound over the binary variables of a MipModel.

Open nodes live in a heap keyed by their LP bound (insertion counter as the tie
breaker). The most fractional binary is branched on, lowest index first on ties.
"""

import heapq
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from lib.mip.model import MipModel, MipModelError, Variable
from lib.mip.simplex import LpResult, LpStatus, SimplexStallError, solve_lp_arrays

logger = logging.getLogger(__name__)

ABSOLUTE_GAP = 1e-10
INTEGRALITY_TOLERANCE = 1e-6


class MipStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    GAP_LIMIT = "gap-limit"
    ITERATION_LIMIT = "iteration-limit"


@dataclass
class MipSolution:
    """
    Result of a branch-and-bound solve.

    OPTIMAL means the tree was exhausted; GAP_LIMIT means open nodes remained but
    the relative gap met the limit. Both carry a polished incumbent.
    """

    status: MipStatus
    x: Optional[np.ndarray] = None
    objective: float = math.inf
    best_bound: float = -math.inf
    gap: float = math.inf
    node_count: int = 0
    lp_pivots: int = 0
    wall_time_s: float = 0.0
    max_violation: float = math.nan
    lp_failures: int = 0

    @property
    def is_success(self) -> bool:
        return (
            self.status in (MipStatus.OPTIMAL, MipStatus.GAP_LIMIT) and self.x is not None
        )

    def value(self, var: Variable) -> float:
        if self.x is None:
            raise MipModelError("Solution has no primal values")
        return float(self.x[var.index])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.status.value,
            "objective": self.objective,
            "best_bound": self.best_bound,
            "gap": self.gap,
            "node_count": self.node_count,
            "lp_pivots": self.lp_pivots,
            "lp_failures": self.lp_failures,
            "wall_time_s": self.wall_time_s,
        }


@dataclass(order=True)
class _Node:
    bound: float
    counter: int
    lb: np.ndarray = field(compare=False)
    ub: np.ndarray = field(compare=False)
    result: LpResult = field(compare=False)


def relative_gap(incumbent: float, bound: float, absolute_gap: float = ABSOLUTE_GAP) -> float:
    """Relative MIP gap with an absolute floor: gaps below ``absolute_gap`` are 0."""
    if math.isinf(incumbent):
        return math.inf
    difference = max(incumbent - bound, 0.0)
    if difference <= absolute_gap:
        return 0.0
    return difference / max(abs(incumbent), 1e-10)


class BranchAndBound:
    """Best-first branch-and-bound with most-fractional branching."""

    def __init__(
        self,
        model: MipModel,
        gap_limit: float = 1e-4,
        node_limit: int = 10_000,
        absolute_gap: float = ABSOLUTE_GAP,
        integrality_tol: float = INTEGRALITY_TOLERANCE,
        lp_options: Optional[Dict[str, float]] = None,
    ) -> None:
        self.log = logging.getLogger(self.__class__.__name__)
        if gap_limit < 0:
            raise ValueError("gap_limit must be non-negative")
        if node_limit < 1:
            raise ValueError("node_limit must be positive")
        self.model = model
        self.gap_limit = gap_limit
        self.node_limit = node_limit
        self.absolute_gap = absolute_gap
        self.integrality_tol = integrality_tol
        self.lp_options = lp_options or {}
        self.arrays = model.to_arrays()
        self.binaries = np.flatnonzero(self.arrays.binary)
        self.lp_pivots = 0
        self.lp_failures = 0
        self._counter = 0
        self.incumbent: Optional[np.ndarray] = None
        self.incumbent_objective = math.inf

    def solve(self) -> MipSolution:
        started = time.perf_counter()
        heap: List[_Node] = []
        nodes = 0
        status: Optional[MipStatus] = None

        root = self._lp(self.arrays.lb.copy(), self.arrays.ub.copy())
        if root.status is LpStatus.UNBOUNDED:
            raise MipModelError("LP relaxation is unbounded")
        if root.is_optimal:
            self._consider(self.arrays.lb.copy(), self.arrays.ub.copy(), root, heap)

        while heap:
            best = heap[0].bound
            if self.incumbent is not None:
                if self.incumbent_objective - best <= self.absolute_gap:
                    heap.clear()
                    break
                if relative_gap(self.incumbent_objective, best, self.absolute_gap) <= self.gap_limit:
                    status = MipStatus.GAP_LIMIT
                    break
            if nodes >= self.node_limit:
                status = MipStatus.ITERATION_LIMIT
                self.log.warning(f"Node limit {self.node_limit} reached")
                break
            node = heapq.heappop(heap)
            if node.bound >= self.incumbent_objective - self.absolute_gap:
                continue
            nodes += 1
            j = self._branching_variable(node.result.x)  # type: ignore[arg-type]
            for value in (0.0, 1.0):
                lb = node.lb.copy()
                ub = node.ub.copy()
                lb[j] = ub[j] = value
                child = self._lp(lb, ub)
                if child.is_optimal:
                    self._consider(lb, ub, child, heap)
        if self.lp_failures:
            # a dropped node leaves the tree unproven
            status = MipStatus.ITERATION_LIMIT

        wall = time.perf_counter() - started
        open_bounds = [n.bound for n in heap if n.bound < self.incumbent_objective]
        if self.incumbent is None:
            final = status or MipStatus.INFEASIBLE
            return MipSolution(
                status=final,
                best_bound=min(open_bounds) if open_bounds else math.inf,
                node_count=nodes,
                lp_pivots=self.lp_pivots,
                wall_time_s=wall,
                lp_failures=self.lp_failures,
            )

        best_bound = min(open_bounds + [self.incumbent_objective])
        gap = relative_gap(self.incumbent_objective, best_bound, self.absolute_gap)
        if status is None:
            status = MipStatus.OPTIMAL
        solution = MipSolution(
            status=status,
            x=self.incumbent,
            objective=self.incumbent_objective,
            best_bound=best_bound,
            gap=gap,
            node_count=nodes,
            lp_pivots=self.lp_pivots,
            wall_time_s=wall,
            lp_failures=self.lp_failures,
            max_violation=self.model.max_violation(self.incumbent),
        )
        self.log.debug(
            f"MIP {status.value}: objective {solution.objective:.6g}, gap {gap:.2e}, "
            f"{nodes} nodes, {self.lp_pivots} pivots, {wall:.2f}s"
        )
        return solution

    # --- internals ---

    def _lp(self, lb: np.ndarray, ub: np.ndarray) -> LpResult:
        """LP relaxation of a node; a stalled node is dropped and counted."""
        try:
            result = solve_lp_arrays(self.arrays, lb=lb, ub=ub, **self.lp_options)
        except SimplexStallError as e:
            self.lp_failures += 1
            self.log.warning(f"Dropping node after LP failure: {e}")
            return LpResult(status=LpStatus.INFEASIBLE)
        self.lp_pivots += result.pivots
        return result

    def _fractionality(self, x: np.ndarray) -> np.ndarray:
        values = x[self.binaries]
        return np.abs(values - np.round(values))

    def _branching_variable(self, x: np.ndarray) -> int:
        # argmax picks the lowest index among equally fractional binaries
        return int(self.binaries[int(np.argmax(self._fractionality(x)))])

    def _consider(
        self, lb: np.ndarray, ub: np.ndarray, result: LpResult, heap: List[_Node]
    ) -> None:
        if result.objective >= self.incumbent_objective - self.absolute_gap:
            return
        x = result.x
        assert x is not None
        if self.binaries.size == 0 or np.all(self._fractionality(x) <= self.integrality_tol):
            self._update_incumbent(x, result.objective)
            return
        self._counter += 1
        heapq.heappush(heap, _Node(result.objective, self._counter, lb, ub, result))

    def _update_incumbent(self, x: np.ndarray, objective: float) -> None:
        """Round the binaries and re-solve the LP with them fixed."""
        rounded = np.round(x[self.binaries])
        lb = self.arrays.lb.copy()
        ub = self.arrays.ub.copy()
        lb[self.binaries] = rounded
        ub[self.binaries] = rounded
        polished = self._lp(lb, ub)
        if polished.is_optimal and polished.x is not None:
            x, objective = polished.x, polished.objective
        else:
            x = x.copy()
            x[self.binaries] = rounded
        if objective < self.incumbent_objective:
            self.log.debug(f"New incumbent {objective:.8g}")
            self.incumbent = x
            self.incumbent_objective = objective


def solve_mip(
    model: MipModel,
    gap_limit: float = 1e-4,
    node_limit: int = 10_000,
    **options: Any,
) -> MipSolution:
    """
    Solve a MIP by best-first branch-and-bound.

    Args:
        model: The model to minimize.
        gap_limit: Relative gap at which the search stops (1e-4 is 0.01 %).
        node_limit: Maximum number of branched nodes.
        **options: absolute_gap, integrality_tol, lp_options.

    Returns:
        The solution with status, incumbent, bound and statistics.
    """
    return BranchAndBound(model, gap_limit=gap_limit, node_limit=node_limit, **options).solve()


def enumerate_binaries(model: MipModel) -> Tuple[float, Optional[np.ndarray]]:
    """
    Brute-force optimum over every binary assignment (LP for the continuous part).

    Only meant for small models; used as a reference for the tree search.
    """
    arrays = model.to_arrays()
    binaries = np.flatnonzero(arrays.binary)
    if binaries.size > 20:
        raise ValueError("Enumeration is limited to 20 binaries")
    best, best_x = math.inf, None
    for pattern in range(2 ** binaries.size):
        bits = np.array([(pattern >> k) & 1 for k in range(binaries.size)], dtype=float)
        lb = arrays.lb.copy()
        ub = arrays.ub.copy()
        lb[binaries] = bits
        ub[binaries] = bits
        result = solve_lp_arrays(arrays, lb=lb, ub=ub)
        if result.is_optimal and result.objective < best:
            best, best_x = result.objective, result.x
    return best, best_x
