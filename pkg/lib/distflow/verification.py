"""
Property suites for the current envelopes, run by the ``verify`` subcommand.

Every suite compares the envelopes built at a base operating point with exact
load-flow solutions or with the closed form of l = (P² + Q²) / v.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from lib.distflow.envelope import (
    EnvelopeBounds,
    IntervalBox,
    TaylorData,
    build_envelopes,
    delta_box,
    oracle_delta,
    quad_grid_max,
    relative_error,
    sandwich_violation,
    taylor_at,
    voltage_envelopes,
)
from lib.distflow.feeder import Feeder
from lib.distflow.loadflow import (
    DeviceSetting,
    LoadFlowError,
    feasibility_report,
    solve_loadflow,
)
from lib.distflow.matrices import OperatingPoint, build_matrices, certify_h_nonneg

logger = logging.getLogger(__name__)

SANDWICH_TOLERANCE = 1e-8
MIN_CHECKED_SHARE = 0.999
UNDERBOUND_TOLERANCE = 1e-10
ORACLE_TOLERANCE = 1e-11
ORACLE_MAX_ITER = 300
KVAR_SWEEP_LIMIT = 1000.0
KVAR_TRACKING_WINDOW = 100.0


@dataclass
class SandwichCheck:
    """Monte-Carlo samples of random device settings against the envelopes."""

    samples: int
    solved: int = 0
    hard_feasible: int = 0
    checked: int = 0
    skipped: int = 0
    max_violation: float = 0.0
    max_current_violation: float = 0.0

    @property
    def checked_share(self) -> float:
        """Share of hard-feasible samples whose δ fell in the box and was checked."""
        return self.checked / self.hard_feasible if self.hard_feasible else 1.0

    @property
    def passed(self) -> bool:
        return (
            self.checked_share >= MIN_CHECKED_SHARE
            and self.max_violation <= SANDWICH_TOLERANCE
            and self.max_current_violation <= SANDWICH_TOLERANCE
        )


@dataclass
class UnderboundCheck:
    samples: int
    grid_points: int
    max_violation: float = 0.0
    max_upper_violation: float = 0.0

    @property
    def passed(self) -> bool:
        return (
            self.max_violation <= UNDERBOUND_TOLERANCE
            and self.max_upper_violation <= UNDERBOUND_TOLERANCE
        )


@dataclass
class QuadBoundCheck:
    grid_points: int
    max_excess: float = 0.0

    @property
    def passed(self) -> bool:
        return self.max_excess <= 1e-12


@dataclass
class SpectralCheck:
    max_abs_zero_eigenvalue: float = 0.0
    min_positive_eigenvalue: float = float("inf")

    @property
    def passed(self) -> bool:
        return self.max_abs_zero_eigenvalue <= 1e-10 and self.min_positive_eigenvalue > 0


@dataclass
class TrackingCheck:
    """Second-order prediction of one branch current while a node's q is swept."""

    node: int
    branch: int
    kvar: List[float] = field(default_factory=list)
    l_true: List[float] = field(default_factory=list)
    l_second_order: List[float] = field(default_factory=list)
    relative_error: List[float] = field(default_factory=list)
    max_error_in_window: float = 0.0
    tolerance: float = 0.05

    @property
    def passed(self) -> bool:
        return self.max_error_in_window <= self.tolerance


@dataclass
class VerificationReport:
    feeder: str
    seed: int
    quad_mode: str
    certificate: str
    sandwich: SandwichCheck
    underbound: UnderboundCheck
    quad_bound: QuadBoundCheck
    spectral: SpectralCheck
    tracking: Optional[TrackingCheck] = None

    @property
    def passed(self) -> bool:
        checks = [self.sandwich, self.underbound, self.quad_bound, self.spectral]
        if self.tracking is not None:
            checks.append(self.tracking)
        return self.certificate == "PASS" and all(c.passed for c in checks)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["passed"] = self.passed
        for name in ("sandwich", "underbound", "quad_bound", "spectral", "tracking"):
            check = getattr(self, name)
            if check is not None:
                data[name]["passed"] = check.passed
        data["sandwich"]["checked_share"] = self.sandwich.checked_share
        return data


def random_setting(feeder: Feeder, rng: np.random.Generator) -> DeviceSetting:
    """Uniformly random taps, cap unit counts and DER outputs."""
    return DeviceSetting(
        n_tr={
            o.branch: int(rng.integers(o.n_min, o.n_max + 1)) for o in feeder.oltcs
        },
        n_cp={c.node: int(rng.integers(c.n_min, c.n_max + 1)) for c in feeder.caps},
        q_g={d.node: float(rng.uniform(d.q_min, d.q_max)) for d in feeder.ders},
    )


def sample_box(box: IntervalBox, rng: np.random.Generator, samples: int) -> np.ndarray:
    """Uniform δ samples of shape (samples, n, 3)."""
    u = rng.uniform(size=(samples,) + box.lower.shape)
    return box.lower + u * box.width


def check_sandwich(
    feeder: Feeder,
    base: OperatingPoint,
    envelopes: EnvelopeBounds,
    p: np.ndarray,
    q_uncontrolled: np.ndarray,
    samples: int,
    rng: np.random.Generator,
) -> SandwichCheck:
    """
    Solve random device settings and check V⁻ <= V <= V⁺ at their oracle δ.

    Only hard-feasible oracle points are held to the sandwich. Those whose δ falls
    outside the box are counted as skipped, and the check fails when fewer than
    99.9 % of the hard-feasible samples were checked.
    """
    m = build_matrices(feeder)
    certificate = certify_h_nonneg(m)
    check = SandwichCheck(samples=samples)
    for _ in range(samples):
        setting = random_setting(feeder, rng)
        try:
            op = solve_loadflow(
                feeder, p, q_uncontrolled, setting, ORACLE_TOLERANCE, ORACLE_MAX_ITER
            )
        except LoadFlowError as e:
            logger.debug(f"Sample skipped: {e}")
            continue
        check.solved += 1
        if not feasibility_report(feeder, op).hard_feasible:
            continue
        check.hard_feasible += 1
        delta = oracle_delta(base, op)
        if not np.all(envelopes.box.contains(delta)):
            check.skipped += 1
            continue
        check.checked += 1
        l_min, l_max = envelopes.evaluate(delta)
        current_gap = max(
            float(np.max(l_min - op.l, initial=0.0)),
            float(np.max(op.l - l_max, initial=0.0)),
        )
        check.max_current_violation = max(check.max_current_violation, current_gap)
        v_plus, v_minus = voltage_envelopes(
            m, op.p, op.q, l_min, l_max, op.gain(), certificate
        )
        check.max_violation = max(
            check.max_violation, sandwich_violation(op.V, v_plus, v_minus)
        )
    logger.info(
        f"Sandwich: {check.checked} checked, {check.skipped} skipped of "
        f"{check.hard_feasible} hard-feasible samples, max violation "
        f"{check.max_violation:.3e}"
    )
    return check


def check_underbound(
    envelopes: EnvelopeBounds,
    samples: int,
    rng: np.random.Generator,
    grid_points: int = 101,
) -> UnderboundCheck:
    """
    l_min <= l_true <= l_max on random δ in the box and on per-axis grids.

    The grid moves one component of one branch at a time across its box range,
    with every other component at zero.
    """
    taylor = envelopes.taylor
    box = envelopes.box
    check = UnderboundCheck(samples=samples, grid_points=grid_points)

    deltas = sample_box(box, rng, samples) if samples else np.zeros((0, box.n, 3))
    grid: List[np.ndarray] = []
    for k in range(box.n):
        for c in range(3):
            line = np.zeros((grid_points, box.n, 3))
            line[:, k, c] = np.linspace(box.lower[k, c], box.upper[k, c], grid_points)
            grid.append(line)
    if grid:
        deltas = np.concatenate([deltas] + grid, axis=0)

    l_true = taylor.exact(deltas)
    l_min, l_max = envelopes.evaluate(deltas)
    check.max_violation = float(np.max(l_min - l_true, initial=0.0))
    check.max_upper_violation = float(np.max(l_true - l_max, initial=0.0))
    return check


def check_quad_bound(
    taylor: TaylorData, envelopes: EnvelopeBounds, points: int = 21
) -> QuadBoundCheck:
    """Grid maximum of δᵀH_eδ never exceeds the vertex maximum."""
    vertex_max = np.max(taylor.quadratic(envelopes.box.all_vertices()), axis=0)
    check = QuadBoundCheck(grid_points=points)
    for k in range(taylor.n):
        excess = quad_grid_max(taylor, envelopes.box, k, points) - vertex_max[k]
        check.max_excess = max(check.max_excess, float(excess))
    return check


def check_spectrum(taylor: TaylorData) -> SpectralCheck:
    eig = taylor.eigenvalues
    if eig.size == 0:
        return SpectralCheck()
    return SpectralCheck(
        max_abs_zero_eigenvalue=float(np.max(np.abs(eig[:, 0]))),
        min_positive_eigenvalue=float(np.min(eig[:, 1:])),
    )


def check_tracking(
    feeder: Feeder,
    p: np.ndarray,
    q_uncontrolled: np.ndarray,
    node: int,
    points: int = 41,
    tolerance: float = 0.05,
) -> TrackingCheck:
    """
    Sweep an extra reactive injection at ``node`` over ±1000 kVAr and compare
    l on the branch into the node with its second-order Taylor prediction.

    The error is held to ``tolerance`` inside ±100 kVAr.

    Raises:
        ValueError: If ``node`` is the substation or not in the feeder.
    """
    if not 1 <= node <= feeder.node_count:
        raise ValueError(f"Node index {node} is not a load node")
    branch = node - 1
    kvar_base = feeder.base_mva * 1000.0
    base = solve_loadflow(feeder, p, q_uncontrolled)
    taylor = taylor_at(base)
    check = TrackingCheck(node=node, branch=branch, tolerance=tolerance)
    for kvar in np.linspace(-KVAR_SWEEP_LIMIT, KVAR_SWEEP_LIMIT, points):
        q = q_uncontrolled.copy()
        q[branch] += kvar / kvar_base
        try:
            op = solve_loadflow(feeder, p, q)
        except LoadFlowError as e:
            logger.warning(f"Tracking sweep stops at {kvar:.0f} kVAr: {e}")
            continue
        delta = oracle_delta(base, op)[branch]
        J = taylor.J[branch]
        H = taylor.H_e[branch]
        predicted = taylor.l0[branch] + J @ delta + 0.5 * delta @ H @ delta
        error = float(relative_error(np.array([predicted]), np.array([op.l[branch]]))[0])
        check.kvar.append(float(kvar))
        check.l_true.append(float(op.l[branch]))
        check.l_second_order.append(float(predicted))
        check.relative_error.append(error)
        if abs(kvar) <= KVAR_TRACKING_WINDOW + 1e-9:
            check.max_error_in_window = max(check.max_error_in_window, error)
    return check


def run_verification(
    feeder: Feeder,
    P_L: Optional[np.ndarray] = None,
    Q_L: Optional[np.ndarray] = None,
    samples: int = 1000,
    seed: int = 0,
    quad_mode: str = "const",
    grid_points: int = 101,
    tracking_node: Optional[int] = None,
) -> VerificationReport:
    """
    Run every property suite around the neutral dispatch of one period.

    Args:
        feeder: The feeder.
        P_L: Active net demand per node (zero when omitted).
        Q_L: Reactive net demand per node (zero when omitted).
        samples: Monte-Carlo sample count for the sandwich and underbound suites.
        seed: Seed of the random generator.
        quad_mode: Envelope mode under test.
        grid_points: Points per axis of the underbound grid.
        tracking_node: Canonical node for the ±1000 kVAr tracking sweep; skipped
            when omitted.

    Returns:
        The report; ``passed`` is the conjunction of every suite.
    """
    n = feeder.node_count
    p = -np.asarray(P_L if P_L is not None else np.zeros(n), dtype=float)
    q_unc = -np.asarray(Q_L if Q_L is not None else np.zeros(n), dtype=float)
    rng = np.random.default_rng(seed)

    m = build_matrices(feeder)
    certificate = certify_h_nonneg(m)
    setting = DeviceSetting.neutral(feeder)
    base = solve_loadflow(feeder, p, q_unc, setting, ORACLE_TOLERANCE, ORACLE_MAX_ITER)
    taylor = taylor_at(base)
    box = delta_box(feeder, m, base, setting)
    envelopes = build_envelopes(taylor, box, mode=quad_mode)

    report = VerificationReport(
        feeder=feeder.name,
        seed=seed,
        quad_mode=quad_mode,
        certificate=certificate.status,
        sandwich=check_sandwich(feeder, base, envelopes, p, q_unc, samples, rng),
        underbound=check_underbound(envelopes, samples, rng, grid_points),
        quad_bound=check_quad_bound(taylor, envelopes),
        spectral=check_spectrum(taylor),
    )
    if tracking_node is not None:
        report.tracking = check_tracking(feeder, p, q_unc, tracking_node)
    logger.info(f"Verification of '{feeder.name}': {'PASS' if report.passed else 'FAIL'}")
    return report
