"""
Assembly of the inner-approximation problem solved at every iterate.

Decision variables are changes relative to the current oracle point. The linear
current change y = Jᵀδ feeds back into the flows (δP = -D_R y, δQ = C Δq - D_X y)
and the voltages, so the envelopes V⁺ (with l0 + y) and V⁻ (with l0 + t, where t
bounds the current increase from above) enclose every dispatch the model admits
inside the δ box.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from lib.distflow.envelope import EnvelopeBounds, TaylorData, voltage_envelopes
from lib.distflow.feeder import Feeder
from lib.distflow.loadflow import DeviceSetting
from lib.distflow.matrices import (
    Certificate,
    DistFlowMatrices,
    OperatingPoint,
    certify_h_nonneg,
)
from lib.mip.branch_and_bound import MipSolution
from lib.mip.model import (
    LinExpr,
    MipModel,
    Sense,
    Variable,
    add_epigraph_quadratic,
    add_secant_epigraph,
    lin_matvec,
)
from lib.vpo.devices import CapEncoding, OltcEncoding, encode_oltc

logger = logging.getLogger(__name__)


class VpoError(Exception):
    """Base class for optimization failures."""

    pass


class P3InfeasibleError(VpoError):
    """Raised when the problem of an iterate has no feasible point."""

    def __init__(self, iteration: int, message: str = "") -> None:
        self.iteration = iteration
        super().__init__(message or f"P3 is infeasible at iteration {iteration}")


class P3SolverError(VpoError):
    """Raised when the MIP engine fails on the problem of an iterate."""

    def __init__(self, iteration: int, message: str) -> None:
        self.iteration = iteration
        super().__init__(f"P3 solve failed at iteration {iteration}: {message}")


@dataclass(frozen=True)
class P3Options:
    """Discretization choices of the assembled model."""

    objective_segments: int = 16

    def __post_init__(self) -> None:
        if self.objective_segments < 2:
            raise ValueError("objective_segments must be at least 2")


@dataclass
class P3Result:
    """Decoded solution of one problem instance."""

    objective: float
    setting: DeviceSetting
    q_g: np.ndarray
    q_cap: np.ndarray
    v_plus: np.ndarray
    v_minus: np.ndarray
    v_estimate: np.ndarray
    slack_plus: np.ndarray
    slack_minus: np.ndarray
    current_change: np.ndarray
    current_bound: np.ndarray
    solution: MipSolution

    @property
    def der_total(self) -> float:
        return float(self.q_g.sum())

    @property
    def cap_total(self) -> float:
        return float(self.q_cap.sum())

    @property
    def slack_total(self) -> float:
        return float(self.slack_plus.sum() + self.slack_minus.sum())


@dataclass
class VpoProblem:
    """An assembled model together with the handles needed to decode it."""

    model: MipModel
    feeder: Feeder
    matrices: DistFlowMatrices
    envelopes: EnvelopeBounds
    base: OperatingPoint
    setting: DeviceSetting
    q_g: Dict[int, Variable] = field(default_factory=dict)
    oltcs: Dict[int, OltcEncoding] = field(default_factory=dict)
    caps: Dict[int, CapEncoding] = field(default_factory=dict)
    y: List[Variable] = field(default_factory=list)
    t: List[Variable] = field(default_factory=list)
    v_estimate: List[LinExpr] = field(default_factory=list)
    v_plus: List[LinExpr] = field(default_factory=list)
    v_minus: List[LinExpr] = field(default_factory=list)
    slack_plus: List[Variable] = field(default_factory=list)
    slack_minus: List[Variable] = field(default_factory=list)

    def decode(self, solution: MipSolution) -> P3Result:
        """Read the device setting and envelope values out of a MIP solution."""
        if solution.x is None:
            raise VpoError(f"Cannot decode a {solution.status.value} solution")
        x = solution.x
        n = self.feeder.node_count
        q_g = np.zeros(n)
        for node, var in self.q_g.items():
            q_g[node - 1] = x[var.index]
        q_cap = np.zeros(n)
        for node, enc in self.caps.items():
            q_cap[node - 1] = enc.injection_value(x)
        setting = DeviceSetting(
            n_tr={branch: enc.tap_position(x) for branch, enc in self.oltcs.items()},
            n_cp={node: enc.unit_count(x) for node, enc in self.caps.items()},
            q_g={node: float(x[var.index]) for node, var in self.q_g.items()},
        )

        def values(items: Sequence[LinExpr]) -> np.ndarray:
            return np.array([expr.value(x) for expr in items])

        return P3Result(
            objective=solution.objective,
            setting=setting,
            q_g=q_g,
            q_cap=q_cap,
            v_plus=values(self.v_plus),
            v_minus=values(self.v_minus),
            v_estimate=values(self.v_estimate),
            slack_plus=np.array([x[v.index] for v in self.slack_plus]),
            slack_minus=np.array([x[v.index] for v in self.slack_minus]),
            current_change=np.array([x[v.index] for v in self.y]),
            current_bound=np.array([x[v.index] for v in self.t]),
            solution=solution,
        )


def assemble_p3(
    feeder: Feeder,
    matrices: DistFlowMatrices,
    taylor: TaylorData,
    envelopes: Optional[EnvelopeBounds],
    base: OperatingPoint,
    setting: Optional[DeviceSetting] = None,
    options: Optional[P3Options] = None,
    certificate: Optional[Certificate] = None,
) -> VpoProblem:
    """
    Build the problem around the oracle point ``base``.

    Args:
        feeder: The feeder.
        matrices: Its DistFlow matrices.
        taylor: Taylor data at ``base``.
        envelopes: Current bounds built on the δ box around ``base``.
        base: Oracle operating point of the current device setting.
        setting: Device setting that produced ``base``; neutral when omitted.
        options: Discretization options.
        certificate: H certificate; computed when omitted.

    Returns:
        The assembled problem.

    Raises:
        VpoError: If the envelopes are missing or belong to other Taylor data.
        EnvelopeError: If the H certificate fails.
    """
    if envelopes is None:
        raise VpoError("Envelope bounds are required to assemble P3")
    if envelopes.taylor is not taylor:
        raise VpoError("Envelope bounds were built on different Taylor data")
    options = options or P3Options()
    certificate = certificate or certify_h_nonneg(matrices)
    setting = (setting or DeviceSetting()).complete(feeder)
    m = matrices
    n = feeder.node_count
    V0 = base.V
    gain0 = base.gain()
    q_cap0 = base.cap_injection()
    model = MipModel(name=f"p3_{feeder.name}")
    problem = VpoProblem(
        model=model,
        feeder=feeder,
        matrices=m,
        envelopes=envelopes,
        base=base,
        setting=setting,
    )
    label = feeder.original_id

    # reactive injection changes
    dq: List[LinExpr] = [LinExpr() for _ in range(n)]
    for der in feeder.ders:
        var = model.add_var(f"qg_{label(der.node)}", lb=der.q_min, ub=der.q_max)
        add_epigraph_quadratic(model, var, segments=options.objective_segments)
        problem.q_g[der.node] = var
        dq[der.node - 1].add(var).add(-float(setting.q_g.get(der.node, 0.0)))
    for cap in feeder.caps:
        k = cap.node - 1
        v_max = float(feeder.v_max[k])
        enc = CapEncoding.create(
            model,
            cap,
            max(v_max, float(V0[k])),
            prefix=f"n{label(cap.node)}_",
            v_max=v_max,
        )
        problem.caps[cap.node] = enc
        dq[k].add(enc.injection).add(-float(q_cap0[k]))

    # linear current changes and their bounds
    lo_y, hi_y = _linear_range(taylor, envelopes)
    y = [model.add_var(f"y_{k}", lb=lo_y[k], ub=hi_y[k]) for k in range(n)]
    problem.y = y

    # voltage estimate built top-down through the tap changers
    base_v = _add_all(
        [LinExpr(constant=float(V0[i])) for i in range(n)],
        lin_matvec(m.M_q, dq),
        lin_matvec(-m.H, y),
    )
    gain_change: List[LinExpr] = [LinExpr() for _ in range(n)]
    v_est: List[LinExpr] = [LinExpr() for _ in range(n)]
    for branch in feeder.branches:
        k = branch.index
        parent = branch.from_node
        change = gain_change[parent - 1].copy() if parent > 0 else LinExpr()
        if feeder.oltc_on(k) is not None:
            if parent > 0:
                v_in: LinExpr = v_est[parent - 1]
                v_bar = max(float(feeder.v_max[parent - 1]), float(V0[parent - 1]))
                own0 = gain0[k] - gain0[parent - 1]
            else:
                v_in = LinExpr(constant=feeder.v0)
                v_bar = feeder.v0
                own0 = gain0[k]
            enc = encode_oltc(
                model, feeder, k, v_in, v_bar, prefix=f"b{branch.original_id}_"
            )
            problem.oltcs[k] = enc
            change.add(enc.output).add(v_in, -1.0).add(-float(own0))
        gain_change[k] = change
        v_est[k] = base_v[k].copy().add(change)
    problem.v_estimate = v_est

    for node, enc in problem.caps.items():
        enc.link(model, v_est[node - 1])

    # deviations, current bounds and the δ box
    dP = lin_matvec(-m.D_R, y)
    dQ = _add_all(lin_matvec(m.C, dq), lin_matvec(-m.D_X, y))
    box = envelopes.box
    t_vars: List[Variable] = []
    for k in range(n):
        delta = (
            LinExpr.of(dP[k]),
            LinExpr.of(dQ[k]),
            v_est[k].copy().add(-float(V0[k])),
        )
        row = LinExpr.of(y[k]).copy()
        for c in range(3):
            row.add(delta[c], -float(taylor.J[k, c]))
        model.add_constraint(row, Sense.EQ, 0.0, name=f"taylor_{k}")
        for c, tag in enumerate(("P", "Q", "v")):
            lo, hi = float(box.lower[k, c]), float(box.upper[k, c])
            if math.isfinite(lo):
                model.add_constraint(delta[c], Sense.GE, lo, name=f"box{tag}lo_{k}")
            if math.isfinite(hi):
                model.add_constraint(delta[c], Sense.LE, hi, name=f"box{tag}hi_{k}")

        a = model.add_var(f"a_{k}", lb=0.0)
        model.add_constraint(a - y[k], Sense.GE, 0.0, name=f"abs_pos_{k}")
        model.add_constraint(a + y[k], Sense.GE, 0.0, name=f"abs_neg_{k}")
        if envelopes.mode == "const":
            t = model.add_var(f"t_{k}", lb=float(envelopes.quad_bound[k]))
        else:
            t = model.add_var(f"t_{k}", lb=0.0)
            P0, Q0, v = taylor.P0[k], taylor.Q0[k], taylor.v0[k]
            u1 = delta[0].copy().add(delta[2], -float(P0 / v))
            u2 = delta[1].copy().add(delta[2], -float(Q0 / v))
            bp1, bp2 = envelopes.u_breakpoints[k]
            e1 = add_secant_epigraph(model, u1, bp1, f"u1sq_{k}")
            e2 = add_secant_epigraph(model, u2, bp2, f"u2sq_{k}")
            scale = float(envelopes.kappa[k] * 2.0 / v)
            model.add_constraint(t - scale * (e1 + e2), Sense.GE, 0.0, name=f"quad_{k}")
        model.add_constraint(t - 2.0 * a, Sense.GE, 0.0, name=f"lmax_{k}")
        t_vars.append(t)
    problem.t = t_vars

    # envelopes and voltage limits
    l0 = taylor.l0
    q_new = [dq[i].copy().add(float(base.q[i])) for i in range(n)]
    l_min = [LinExpr.of(y[k]).copy().add(float(l0[k])) for k in range(n)]
    l_max = [LinExpr.of(t_vars[k]).copy().add(float(l0[k])) for k in range(n)]
    gain_new = [gain_change[i].copy().add(float(gain0[i])) for i in range(n)]
    v_plus, v_minus = voltage_envelopes(
        m, base.p, q_new, l_min, l_max, tap_gain=gain_new, certificate=certificate
    )
    problem.v_plus = list(v_plus)  # type: ignore[arg-type]
    problem.v_minus = list(v_minus)  # type: ignore[arg-type]

    for i in range(n):
        node = label(i + 1)
        sp = model.add_var(f"vv_plus_{node}", lb=0.0)
        sm = model.add_var(f"vv_minus_{node}", lb=0.0)
        vp, vm = problem.v_plus[i], problem.v_minus[i]
        model.add_constraint(vm, Sense.GE, float(feeder.v_min[i]), name=f"vmin_{node}")
        model.add_constraint(vp, Sense.LE, float(feeder.v_max[i]), name=f"vmax_{node}")
        model.add_constraint(vm + sm, Sense.GE, float(feeder.v_lo[i]), name=f"vlo_{node}")
        model.add_constraint(vp - sp, Sense.LE, float(feeder.v_hi[i]), name=f"vhi_{node}")
        model.add_objective_term(sp, float(feeder.alpha[i]))
        model.add_objective_term(sm, float(feeder.alpha[i]))
        problem.slack_plus.append(sp)
        problem.slack_minus.append(sm)

    logger.debug(f"Assembled P3: {model.summary()}")
    return problem


def _linear_range(
    taylor: TaylorData, envelopes: EnvelopeBounds
) -> Tuple[np.ndarray, np.ndarray]:
    """Range of Jᵀδ over the box, per branch."""
    lower = envelopes.box.lower
    upper = envelopes.box.upper
    products = np.stack([taylor.J * lower, taylor.J * upper])
    return products.min(axis=0).sum(axis=1), products.max(axis=0).sum(axis=1)


def _add_all(*vectors: Sequence) -> List[LinExpr]:
    """Elementwise sum of vectors of numbers or expressions."""
    n = len(vectors[0])
    out = [LinExpr() for _ in range(n)]
    for vector in vectors:
        for i in range(n):
            out[i].add(vector[i])
    return out
