"""
Successive inner-approximation runs and the experiments built on them.

Every iterate re-linearizes around the oracle point of the current dispatch,
solves the inner approximation, and moves to its solution. Because the previous
dispatch is feasible in the next problem, accepted objectives never increase and
every accepted dispatch is verified against the exact load flow.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, TypeVar

import numpy as np
import pandas as pd

from lib.distflow.envelope import (
    EnvelopeError,
    build_envelopes,
    delta_box,
    sandwich_violation,
    taylor_at,
)
from lib.distflow.feeder import DEFAULT_ALPHA, Feeder, LoadProfile
from lib.distflow.loadflow import (
    DeviceSetting,
    FeasibilityReport,
    LoadFlowError,
    feasibility_report,
    solve_loadflow,
)
from lib.distflow.matrices import (
    DistFlowMatrices,
    OperatingPoint,
    build_matrices,
    certify_h_nonneg,
)
from lib.mip.branch_and_bound import MipSolution, MipStatus, solve_mip
from lib.mip.model import MipModelError, secant_breakpoints, secant_value
from lib.mip.simplex import SimplexStallError
from lib.vpo.problem import (
    P3InfeasibleError,
    P3Options,
    P3Result,
    P3SolverError,
    VpoError,
    VpoProblem,
    assemble_p3,
)

logger = logging.getLogger(__name__)

MONOTONE_TOLERANCE = 1e-9

T = TypeVar("T")


@dataclass(frozen=True)
class VpoOptions:
    """Options of a single run."""

    epsilon: float = 1e-6
    max_iters: int = 20
    gap_limit: float = 1e-4
    node_limit: int = 10_000
    objective_segments: int = 16
    quad_mode: str = "const"
    envelope_segments: int = 8
    loss_allowance: bool = True
    loadflow_tol: float = 1e-8
    loadflow_max_iter: int = 100
    dump_lp_dir: Optional[Path] = None

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.gap_limit < 0:
            raise ValueError("gap_limit must be non-negative")
        if self.objective_segments < 2:
            raise ValueError("objective_segments must be at least 2")
        if self.envelope_segments < 1:
            raise ValueError("envelope_segments must be at least 1")
        if self.quad_mode not in ("const", "pwl"):
            raise ValueError(f"Unknown quad mode '{self.quad_mode}'")


@dataclass
class IterateRecord:
    """One pass of the loop: the P3 solution and its oracle check."""

    iteration: int
    objective: float
    error: float
    setting: DeviceSetting
    op: OperatingPoint
    feasibility: FeasibilityReport
    p3: P3Result
    sandwich_violation: float
    model_summary: Dict[str, int]
    accepted: bool = True
    rejection: Optional[str] = None
    wall_time_s: float = 0.0

    @property
    def mip(self) -> MipSolution:
        return self.p3.solution

    def to_dict(self, feeder: Feeder) -> Dict[str, Any]:
        return {
            "iteration": self.iteration,
            "objective": self.objective,
            "error": self.error,
            "accepted": self.accepted,
            "rejection": self.rejection,
            "setting": self.setting.to_dict(feeder),
            "der_total": self.p3.der_total,
            "cap_total": float(self.op.cap_injection().sum()),
            "slack_total": self.feasibility.tight_violation_total,
            "hard_feasible": self.feasibility.hard_feasible,
            "sandwich_violation": self.sandwich_violation,
            "model": self.model_summary,
            "mip": self.mip.to_dict(),
            "wall_time_s": self.wall_time_s,
        }


@dataclass
class VpoRun:
    """History of one run, starting from the neutral dispatch."""

    feeder: Feeder
    initial_objective: float
    initial_setting: DeviceSetting
    initial_op: OperatingPoint
    initial_feasibility: FeasibilityReport
    iterates: List[IterateRecord] = field(default_factory=list)
    converged: bool = False
    stop_reason: str = ""
    wall_time_s: float = 0.0

    @property
    def accepted(self) -> List[IterateRecord]:
        return [it for it in self.iterates if it.accepted]

    @property
    def final(self) -> Optional[IterateRecord]:
        accepted = self.accepted
        return accepted[-1] if accepted else None

    @property
    def setting(self) -> DeviceSetting:
        last = self.final
        return last.setting if last else self.initial_setting

    @property
    def op(self) -> OperatingPoint:
        last = self.final
        return last.op if last else self.initial_op

    @property
    def feasibility(self) -> FeasibilityReport:
        last = self.final
        return last.feasibility if last else self.initial_feasibility

    @property
    def objective(self) -> float:
        last = self.final
        return last.objective if last else self.initial_objective

    @property
    def objectives(self) -> List[float]:
        return [it.objective for it in self.accepted]

    @property
    def monotone(self) -> bool:
        values = self.objectives
        return all(b <= a + MONOTONE_TOLERANCE for a, b in zip(values, values[1:]))

    @property
    def all_feasible(self) -> bool:
        return all(it.feasibility.hard_feasible for it in self.accepted)

    @property
    def q_g(self) -> np.ndarray:
        return self.setting.der_injection(self.feeder)

    @property
    def der_total(self) -> float:
        return float(self.q_g.sum())

    @property
    def der_abs_total(self) -> float:
        return float(np.abs(self.q_g).sum())

    @property
    def cap_total(self) -> float:
        return float(self.op.cap_injection().sum())

    @property
    def slack_total(self) -> float:
        return self.feasibility.tight_violation_total

    def to_dict(self) -> Dict[str, Any]:
        return {
            "feeder": self.feeder.name,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "iterations": len(self.iterates),
            "initial_objective": self.initial_objective,
            "objective": self.objective,
            "monotone": self.monotone,
            "all_feasible": self.all_feasible,
            "setting": self.setting.to_dict(self.feeder),
            "der_total": self.der_total,
            "der_abs_total": self.der_abs_total,
            "cap_total": self.cap_total,
            "slack_total": self.slack_total,
            "iterates": [it.to_dict(self.feeder) for it in self.iterates],
            "wall_time_s": self.wall_time_s,
        }


def evaluate_objective(
    feeder: Feeder,
    op: OperatingPoint,
    q_g: Dict[int, float],
    segments: int = 16,
) -> float:
    """
    Surrogate objective of an oracle point: secant value of every q_g² plus the
    α-weighted tight-bound violation of the oracle voltages.
    """
    total = 0.0
    for der in feeder.ders:
        bp = secant_breakpoints(der.q_min, der.q_max, segments, anchor=0.0)
        total += float(secant_value(q_g.get(der.node, 0.0), bp))
    violation = np.maximum(0.0, feeder.v_lo - op.V)
    violation += np.maximum(0.0, op.V - feeder.v_hi)
    return total + float(feeder.alpha @ violation)


class VpoSolver:
    """Runs the successive inner-approximation loop for one feeder."""

    def __init__(
        self,
        feeder: Feeder,
        options: Optional[VpoOptions] = None,
        matrices: Optional[DistFlowMatrices] = None,
    ) -> None:
        self.log = logging.getLogger(self.__class__.__name__)
        self.feeder = feeder
        self.options = options or VpoOptions()
        self.matrices = matrices or build_matrices(feeder)
        self.certificate = certify_h_nonneg(self.matrices)
        if not self.certificate.passed:
            raise EnvelopeError(
                f"H certificate FAIL: {'; '.join(self.certificate.reasons)}"
            )

    def loadflow(
        self, p: np.ndarray, q: np.ndarray, setting: DeviceSetting
    ) -> OperatingPoint:
        """Oracle point for net injections ``p``, ``q`` (demand with sign flipped)."""
        return solve_loadflow(
            self.feeder,
            p,
            q,
            setting,
            tol=self.options.loadflow_tol,
            max_iter=self.options.loadflow_max_iter,
        )

    def build_problem(self, op: OperatingPoint, setting: DeviceSetting) -> VpoProblem:
        """Linearize around ``op`` and assemble the problem of one iterate."""
        opts = self.options
        taylor = taylor_at(op)
        box = delta_box(
            self.feeder, self.matrices, op, setting, loss_allowance=opts.loss_allowance
        )
        envelopes = build_envelopes(
            taylor, box, mode=opts.quad_mode, segments=opts.envelope_segments
        )
        return assemble_p3(
            self.feeder,
            self.matrices,
            taylor,
            envelopes,
            op,
            setting,
            P3Options(objective_segments=opts.objective_segments),
            certificate=self.certificate,
        )

    def solve_problem(self, problem: VpoProblem, iteration: int) -> MipSolution:
        """
        Branch-and-bound on an assembled problem.

        Raises:
            P3SolverError: If the engine fails (unbounded relaxation, stalled or
                singular LP) or stalled nodes left it without an incumbent.
        """
        try:
            solution = solve_mip(
                problem.model,
                gap_limit=self.options.gap_limit,
                node_limit=self.options.node_limit,
            )
        except (MipModelError, SimplexStallError, np.linalg.LinAlgError) as e:
            raise P3SolverError(iteration, f"{type(e).__name__}: {e}") from e
        if solution.x is None and solution.lp_failures:
            raise P3SolverError(
                iteration,
                f"LP relaxation failed on {solution.lp_failures} node(s) "
                f"before an incumbent was found",
            )
        return solution

    def run(
        self,
        P_L: np.ndarray,
        Q_L: np.ndarray,
        initial: Optional[DeviceSetting] = None,
    ) -> VpoRun:
        """
        Run the loop for one period of net demand.

        Args:
            P_L: Active net demand per node.
            Q_L: Reactive net demand per node.
            initial: Starting device setting; neutral when omitted.

        Returns:
            The run history.

        Raises:
            P3InfeasibleError: If a problem instance has no feasible point.
            P3SolverError: If the MIP engine fails on an iterate.
            VpoError: If the node limit is hit without an incumbent.
            LoadFlowError: If the oracle fails.
        """
        opts = self.options
        feeder = self.feeder
        started = time.perf_counter()
        p = -np.asarray(P_L, dtype=float)
        q_unc = -np.asarray(Q_L, dtype=float)
        setting = (initial or DeviceSetting.neutral(feeder)).complete(feeder)
        setting.validate(feeder)
        op = self.loadflow(p, q_unc, setting)
        report = feasibility_report(feeder, op)
        f_prev = evaluate_objective(
            feeder, op, dict(setting.q_g), opts.objective_segments
        )
        run = VpoRun(
            feeder=feeder,
            initial_objective=f_prev,
            initial_setting=setting,
            initial_op=op,
            initial_feasibility=report,
        )
        self.log.info(
            f"Starting run on '{feeder.name}': f0={f_prev:.6e}, "
            f"hard feasible={report.hard_feasible}"
        )

        for k in range(1, opts.max_iters + 1):
            iter_started = time.perf_counter()
            problem = self.build_problem(op, setting)
            if opts.dump_lp_dir is not None:
                opts.dump_lp_dir.mkdir(parents=True, exist_ok=True)
                path = opts.dump_lp_dir / f"p3_iter{k}.lp"
                path.write_text(problem.model.dump_lp(), encoding="utf-8")
                self.log.debug(f"Wrote {path}")

            solution = self.solve_problem(problem, k)
            if solution.x is None:
                if solution.status is MipStatus.INFEASIBLE:
                    raise P3InfeasibleError(k)
                raise VpoError(
                    f"P3 at iteration {k} stopped ({solution.status.value}) "
                    f"without a feasible incumbent"
                )
            if solution.status is MipStatus.ITERATION_LIMIT:
                self.log.warning(
                    f"Iteration {k}: node limit reached, using incumbent "
                    f"(gap {solution.gap:.2e})"
                )
            result = problem.decode(solution)
            new_setting = result.setting.complete(feeder)
            new_op = self.loadflow(p, q_unc, new_setting)
            new_report = feasibility_report(feeder, new_op)
            f_k = result.objective
            error = abs(f_k - f_prev)
            record = IterateRecord(
                iteration=k,
                objective=f_k,
                error=error,
                setting=new_setting,
                op=new_op,
                feasibility=new_report,
                p3=result,
                sandwich_violation=sandwich_violation(
                    new_op.V, result.v_plus, result.v_minus
                ),
                model_summary=problem.model.summary(),
                wall_time_s=time.perf_counter() - iter_started,
            )
            run.iterates.append(record)

            if not new_report.hard_feasible:
                record.accepted = False
                record.rejection = (
                    f"oracle violates hard limits at node {new_report.worst_node} "
                    f"(margin {new_report.worst_margin:.3e})"
                )
            elif k > 1 and f_k > f_prev + MONOTONE_TOLERANCE:
                record.accepted = False
                record.rejection = f"objective increased from {f_prev:.9e} to {f_k:.9e}"
            if not record.accepted:
                self.log.warning(f"Iteration {k} rejected: {record.rejection}")
                run.stop_reason = "rejected"
                break

            self.log.info(
                f"Iteration {k}: f={f_k:.6e}, error={error:.3e}, "
                f"taps={dict(new_setting.n_tr)}, caps={dict(new_setting.n_cp)}"
            )
            setting, op, f_prev = new_setting, new_op, f_k
            if error < opts.epsilon:
                run.converged = True
                run.stop_reason = "converged"
                break
        else:
            run.stop_reason = "max-iters"
            self.log.warning(f"No convergence within {opts.max_iters} iterations")

        run.wall_time_s = time.perf_counter() - started
        return run


def run_algorithm1(
    feeder: Feeder,
    P_L: np.ndarray,
    Q_L: np.ndarray,
    options: Optional[VpoOptions] = None,
    matrices: Optional[DistFlowMatrices] = None,
) -> VpoRun:
    """Run the successive inner-approximation loop for one period."""
    return VpoSolver(feeder, options, matrices).run(P_L, Q_L)


# --- horizon schedule ---


@dataclass
class PeriodResult:
    """Outcome of one period; ``error`` is set when the run failed."""

    period: int
    label: Any
    load_total: float
    run: Optional[VpoRun] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.run is not None

    def row(self) -> Dict[str, Any]:
        row: Dict[str, Any] = {
            "period": self.period,
            "label": self.label,
            "load_total": self.load_total,
            "error": self.error,
        }
        if self.run is None:
            return row
        run = self.run
        feeder = run.feeder
        row.update(
            {
                "iterations": len(run.iterates),
                "converged": run.converged,
                "objective": run.objective,
                "der_total": run.der_total,
                "der_abs_total": run.der_abs_total,
                "cap_total": run.cap_total,
                "slack_total": run.slack_total,
                "hard_feasible": run.feasibility.hard_feasible,
                "wall_time_s": run.wall_time_s,
            }
        )
        for branch, tap in run.setting.n_tr.items():
            row[f"tap_{feeder.branches[branch].original_id}"] = int(tap)
        for node, units in run.setting.n_cp.items():
            row[f"cap_{feeder.original_id(node)}"] = int(units)
        for node, q in run.setting.q_g.items():
            row[f"qg_{feeder.original_id(node)}"] = float(q)
        return row


@dataclass
class ScheduleResult:
    periods: List[PeriodResult]
    without_caps: Optional[List[PeriodResult]] = None

    @property
    def failed(self) -> List[int]:
        return [r.period for r in self.periods if not r.ok]

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([r.row() for r in self.periods])
        if self.without_caps is not None:
            other = pd.DataFrame([r.row() for r in self.without_caps])
            for column in ("der_abs_total", "slack_total"):
                values = other[column] if column in other else np.nan
                frame[f"{column}_no_caps"] = values
        return frame

    def cap_load_correlation(self) -> float:
        """Spearman rank correlation between period load and cap dispatch."""
        frame = self.to_frame()
        if "cap_total" not in frame or frame["cap_total"].nunique() < 2:
            return math.nan
        return float(frame["load_total"].corr(frame["cap_total"], method="spearman"))

    def offloading_holds(self, tolerance: float = 1e-9) -> Optional[bool]:
        """True when the runs with caps never use more DER reactive power."""
        if self.without_caps is None:
            return None
        pairs = [
            (a.run.der_abs_total, b.run.der_abs_total)
            for a, b in zip(self.periods, self.without_caps)
            if a.run is not None and b.run is not None
        ]
        return all(with_caps <= without + tolerance for with_caps, without in pairs)


def _parallel_map(
    func: Callable[[int], T], count: int, max_workers: Optional[int]
) -> List[T]:
    if max_workers is None or max_workers <= 1:
        return [func(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(func, range(count)))


def _run_period(
    feeder: Feeder,
    matrices: DistFlowMatrices,
    profile: LoadProfile,
    t: int,
    options: VpoOptions,
) -> PeriodResult:
    P_L, Q_L = profile.period(t)
    result = PeriodResult(
        period=t, label=profile.labels[t], load_total=float(P_L.sum())
    )
    try:
        result.run = VpoSolver(feeder, options, matrices).run(P_L, Q_L)
    except (VpoError, LoadFlowError, EnvelopeError) as e:
        logger.error(f"Period {t} failed: {e}")
        result.error = f"{type(e).__name__}: {e}"
    return result


def schedule_horizon(
    feeder: Feeder,
    profile: LoadProfile,
    options: Optional[VpoOptions] = None,
    compare_caps: bool = False,
    max_workers: Optional[int] = None,
) -> ScheduleResult:
    """
    Independent runs for every period of a profile.

    Args:
        feeder: The feeder.
        profile: Net demand per period.
        options: Run options.
        compare_caps: Also solve every period with all capacitor banks removed.
        max_workers: Thread count; periods are reported in order either way.

    Returns:
        Per-period results; failed periods carry their error.
    """
    options = options or VpoOptions()
    matrices = build_matrices(feeder)
    started = time.perf_counter()
    periods = _parallel_map(
        lambda t: _run_period(feeder, matrices, profile, t, options),
        profile.horizon,
        max_workers,
    )
    without_caps = None
    if compare_caps:
        bare = feeder.without_caps()
        without_caps = _parallel_map(
            lambda t: _run_period(bare, matrices, profile, t, options),
            profile.horizon,
            max_workers,
        )
    result = ScheduleResult(periods=periods, without_caps=without_caps)
    logger.info(
        f"Schedule of {profile.horizon} periods finished in "
        f"{time.perf_counter() - started:.1f}s ({len(result.failed)} failed)"
    )
    return result


# --- parameter sweeps ---


@dataclass
class SweepPoint:
    value: float
    der_abs_total: float = math.nan
    slack_total: float = math.nan
    model_slack_total: float = math.nan
    objective: float = math.nan
    converged: bool = False
    error: Optional[str] = None

    def row(self) -> Dict[str, Any]:
        return {
            "value": self.value,
            "der_abs_total": self.der_abs_total,
            "slack_total": self.slack_total,
            "model_slack_total": self.model_slack_total,
            "objective": self.objective,
            "converged": self.converged,
            "error": self.error,
        }


@dataclass
class SweepResult:
    """Totals per swept value, in the order the values were given."""

    parameter: str
    points: List[SweepPoint]
    nominal: Optional[float] = None

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([p.row() for p in self.points])
        frame.insert(0, "parameter", self.parameter)
        frame["nominal"] = [
            self.nominal is not None and math.isclose(p.value, self.nominal)
            for p in self.points
        ]
        return frame

    def _ok(self) -> List[SweepPoint]:
        return [p for p in self.points if p.error is None]

    def slack_non_increasing(self, tolerance: float = 1e-9) -> bool:
        values = [p.slack_total for p in self._ok()]
        return all(b <= a + tolerance for a, b in zip(values, values[1:]))

    def der_non_decreasing(self, tolerance: float = 1e-9) -> bool:
        values = [p.der_abs_total for p in self._ok()]
        return all(b >= a - tolerance for a, b in zip(values, values[1:]))

    def diagnostics(self) -> Dict[str, bool]:
        return {
            "slack_non_increasing": self.slack_non_increasing(),
            "der_non_decreasing": self.der_non_decreasing(),
        }


def _sweep_point(
    value: float, feeder: Feeder, P_L: np.ndarray, Q_L: np.ndarray, options: VpoOptions
) -> SweepPoint:
    point = SweepPoint(value=value)
    try:
        run = VpoSolver(feeder, options).run(P_L, Q_L)
    except (VpoError, LoadFlowError, EnvelopeError) as e:
        logger.error(f"Sweep point {value} failed: {e}")
        point.error = f"{type(e).__name__}: {e}"
        return point
    point.der_abs_total = run.der_abs_total
    point.slack_total = run.slack_total
    final = run.final
    point.model_slack_total = final.p3.slack_total if final else 0.0
    point.objective = run.objective
    point.converged = run.converged
    return point


def sweep_alpha(
    feeder: Feeder,
    P_L: np.ndarray,
    Q_L: np.ndarray,
    alphas: Sequence[float],
    options: Optional[VpoOptions] = None,
    max_workers: Optional[int] = None,
) -> SweepResult:
    """
    Re-solve one period for every penalty weight α (applied to every node).

    Raises:
        ValueError: If the α values are not positive and strictly increasing.
    """
    values = [float(a) for a in alphas]
    if not values or any(a <= 0 for a in values):
        raise ValueError("alphas must be positive")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError("alphas must be sorted in increasing order")
    options = options or VpoOptions()
    points = _parallel_map(
        lambda i: _sweep_point(
            values[i], feeder.with_alpha(values[i]), P_L, Q_L, options
        ),
        len(values),
        max_workers,
    )
    return SweepResult(parameter="alpha", points=points, nominal=DEFAULT_ALPHA)


def sweep_vlow(
    feeder: Feeder,
    P_L: np.ndarray,
    Q_L: np.ndarray,
    v_lows: Sequence[float],
    options: Optional[VpoOptions] = None,
    max_workers: Optional[int] = None,
) -> SweepResult:
    """
    Re-solve one period for every lower tight bound (voltage magnitudes in pu).

    Raises:
        ValueError: If a value leaves the hard window or crosses the upper
            tight bound of some node.
    """
    values = [float(v) for v in v_lows]
    if not values:
        raise ValueError("v_lows must not be empty")
    for v in values:
        squared = v**2
        if np.any(squared < feeder.v_min) or np.any(squared > feeder.v_hi):
            raise ValueError(f"Lower tight bound {v} pu outside [v_min, v_hi]")
    options = options or VpoOptions()
    points = _parallel_map(
        lambda i: _sweep_point(
            values[i], feeder.with_tight_bounds(v_lo=values[i] ** 2), P_L, Q_L, options
        ),
        len(values),
        max_workers,
    )
    return SweepResult(parameter="v_lo", points=points)


# --- scaling study ---


@dataclass
class ScaleRow:
    cap_count: int
    binaries: int
    variables: int
    rows: int
    nodes: int
    lp_pivots: int
    status: str
    objective: float
    wall_time_s: float

    def row(self) -> Dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class ScaleResult:
    rows: List[ScaleRow]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.row() for r in self.rows])

    def time_weakly_increasing(self, slack: float = 0.0) -> bool:
        times = [r.wall_time_s for r in self.rows]
        return all(b >= a - slack for a, b in zip(times, times[1:]))


def scale_study(
    feeder: Feeder,
    P_L: np.ndarray,
    Q_L: np.ndarray,
    cap_counts: Sequence[int],
    options: Optional[VpoOptions] = None,
) -> ScaleResult:
    """
    Time a single problem solve with the first ``count`` cap banks enabled.

    Raises:
        ValueError: If a count exceeds the available cap sites.
        P3SolverError: If the MIP engine fails on a problem.
    """
    options = options or VpoOptions()
    for count in cap_counts:
        if count < 0 or count > len(feeder.caps):
            raise ValueError(
                f"Cap count {count} outside 0..{len(feeder.caps)} available sites"
            )
    p = -np.asarray(P_L, dtype=float)
    q_unc = -np.asarray(Q_L, dtype=float)
    rows: List[ScaleRow] = []
    for count in cap_counts:
        limited = feeder.with_caps_limited(count)
        solver = VpoSolver(limited, replace(options, max_iters=1))
        setting = DeviceSetting.neutral(limited)
        op = solver.loadflow(p, q_unc, setting)
        started = time.perf_counter()
        problem = solver.build_problem(op, setting)
        solution = solver.solve_problem(problem, 1)
        wall = time.perf_counter() - started
        summary = problem.model.summary()
        rows.append(
            ScaleRow(
                cap_count=count,
                binaries=summary["binaries"],
                variables=summary["variables"],
                rows=summary["rows"],
                nodes=solution.node_count,
                lp_pivots=solution.lp_pivots,
                status=solution.status.value,
                objective=solution.objective,
                wall_time_s=wall,
            )
        )
        logger.info(
            f"Scale study: {count} caps, {summary['binaries']} binaries, "
            f"{solution.node_count} nodes, {wall:.2f}s"
        )
    return ScaleResult(rows=rows)
