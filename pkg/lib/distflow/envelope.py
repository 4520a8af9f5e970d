"""
Second-order Taylor bounds on the branch currents and the voltage envelopes.

For every branch the squared current l = (P² + Q²) / v is expanded around the
current operating point. With δ = (dP, dQ, dv):

    l - l0 - Jᵀδ = ½ δᵀ H_e δ · v / (v + dv)

so the linear term under-estimates l and ``l0 + max(2|Jᵀδ|, κ q)`` over-estimates
it whenever q bounds δᵀ H_e δ on the admissible box and κ bounds v / (v + dv).
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from lib.distflow.feeder import Feeder
from lib.distflow.loadflow import DeviceSetting
from lib.distflow.matrices import (
    Certificate,
    DistFlowMatrices,
    OperatingPoint,
    certify_h_nonneg,
)
from lib.mip.model import LinExpr, lin_matvec, secant_breakpoints, secant_value

logger = logging.getLogger(__name__)

PSD_TOLERANCE = 1e-10
QUAD_MODES = ("const", "pwl")

VectorLike = Union[np.ndarray, Sequence[Union[float, LinExpr]]]


class EnvelopeError(Exception):
    """Raised when the Taylor bounds cannot be built around an operating point."""

    pass


@dataclass(frozen=True, eq=False)
class TaylorData:
    """
    Taylor data of every branch current at one operating point.

    Arrays are indexed by branch; ``J`` has shape (n, 3), ``H_e`` (n, 3, 3) and the
    deviation order is (dP, dQ, dv).
    """

    P0: np.ndarray
    Q0: np.ndarray
    v0: np.ndarray
    l0: np.ndarray
    J: np.ndarray
    H_e: np.ndarray
    eigenvalues: np.ndarray

    @property
    def n(self) -> int:
        return int(self.l0.shape[0])

    def linear(self, delta: np.ndarray) -> np.ndarray:
        """Jᵀδ per branch for ``delta`` of shape (..., n, 3)."""
        return np.einsum("kj,...kj->...k", self.J, delta)

    def quadratic(self, delta: np.ndarray) -> np.ndarray:
        """δᵀ H_e δ per branch for ``delta`` of shape (..., n, 3)."""
        return np.einsum("...ki,kij,...kj->...k", delta, self.H_e, delta)

    def exact(self, delta: np.ndarray) -> np.ndarray:
        """The current l at P0 + dP, Q0 + dQ, v0 + dv."""
        delta = np.asarray(delta, dtype=float)
        P = self.P0 + delta[..., 0]
        Q = self.Q0 + delta[..., 1]
        v = self.v0 + delta[..., 2]
        return (P**2 + Q**2) / v


def taylor_at(op: OperatingPoint) -> TaylorData:
    """
    Jacobian and Hessian of l = (P² + Q²) / v at every branch of ``op``.

    Raises:
        EnvelopeError: If a base voltage is not positive or a Hessian fails the
            spectral check (two positive eigenvalues, one zero).
    """
    P = np.asarray(op.P, dtype=float)
    Q = np.asarray(op.Q, dtype=float)
    v = np.asarray(op.V, dtype=float)
    if np.any(v <= 0.0):
        bad = int(np.argmin(v))
        raise EnvelopeError(
            f"Base squared voltage {v[bad]:.4g} on branch {bad} is not positive"
        )
    s = P**2 + Q**2
    l0 = s / v
    J = np.column_stack([2.0 * P / v, 2.0 * Q / v, -s / v**2])

    a = P / v
    b = Q / v
    H = np.zeros((v.shape[0], 3, 3))
    H[:, 0, 0] = 1.0
    H[:, 1, 1] = 1.0
    H[:, 0, 2] = H[:, 2, 0] = -a
    H[:, 1, 2] = H[:, 2, 1] = -b
    H[:, 2, 2] = a**2 + b**2
    H *= (2.0 / v)[:, None, None]

    eigenvalues = np.linalg.eigvalsh(H)
    for k in range(v.shape[0]):
        scale = max(1.0, float(np.linalg.norm(H[k])))
        lam = eigenvalues[k]
        if abs(lam[0]) > PSD_TOLERANCE * scale or lam[1] <= PSD_TOLERANCE * scale:
            raise EnvelopeError(
                f"Hessian of branch {k} fails the spectral check: eigenvalues {lam.tolist()}"
            )
    return TaylorData(P0=P, Q0=Q, v0=v, l0=l0, J=J, H_e=H, eigenvalues=eigenvalues)


@dataclass(frozen=True, eq=False)
class IntervalBox:
    """Per-branch interval bounds on δ; ``lower`` and ``upper`` have shape (n, 3)."""

    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def zero(cls, n: int) -> "IntervalBox":
        return cls(np.zeros((n, 3)), np.zeros((n, 3)))

    @property
    def n(self) -> int:
        return int(self.lower.shape[0])

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, delta: np.ndarray, tolerance: float = 1e-9) -> np.ndarray:
        """Boolean per branch (and per sample for batched ``delta``)."""
        delta = np.asarray(delta, dtype=float)
        inside = (delta >= self.lower - tolerance) & (delta <= self.upper + tolerance)
        return np.all(inside, axis=-1)

    def vertices(self, branch: int) -> np.ndarray:
        """The 8 corners of the box of one branch, shape (8, 3)."""
        lo, hi = self.lower[branch], self.upper[branch]
        corners = np.array(
            [[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)], dtype=float
        )
        return lo + corners * (hi - lo)

    def all_vertices(self) -> np.ndarray:
        """Corners of every branch box, shape (8, n, 3)."""
        return np.stack([self.vertices(k) for k in range(self.n)], axis=1)

    def padded(self, lower: np.ndarray, upper: np.ndarray) -> "IntervalBox":
        return IntervalBox(self.lower - lower, self.upper + upper)


def interval_matvec(
    matrix: np.ndarray, lo: np.ndarray, hi: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Exact range of matrix @ x for x in the box [lo, hi]."""
    pos = np.maximum(matrix, 0.0)
    neg = np.minimum(matrix, 0.0)
    return pos @ lo + neg @ hi, pos @ hi + neg @ lo


def delta_box(
    feeder: Feeder,
    m: DistFlowMatrices,
    op: OperatingPoint,
    setting: Optional[DeviceSetting] = None,
    loss_allowance: bool = True,
) -> IntervalBox:
    """
    Admissible range of δ = (dP, dQ, dv) per branch over all device positions.

    DER ranges are taken relative to the current output in ``setting``, cap
    injections range over every unit count and the hard voltage window (widened to
    the current voltage), and tap changes are propagated down the tree. Without
    the loss allowance the flows move only through C and M_q; with it the box is
    widened by the current change the box itself permits.

    Args:
        feeder: The feeder.
        m: Its DistFlow matrices.
        op: The operating point the box is centred on.
        setting: Device positions of ``op``; neutral when omitted.
        loss_allowance: Pad the box for the loss terms.

    Returns:
        The box, containing δ = 0.
    """
    n = feeder.node_count
    setting = (setting or DeviceSetting()).complete(feeder)
    V = np.asarray(op.V, dtype=float)
    dq_lo = np.zeros(n)
    dq_hi = np.zeros(n)
    for der in feeder.ders:
        current = float(setting.q_g.get(der.node, 0.0))
        dq_lo[der.node - 1] += der.q_min - current
        dq_hi[der.node - 1] += der.q_max - current
    q_cap = op.cap_injection()
    for cap in feeder.caps:
        k = cap.node - 1
        low = cap.susceptance(cap.n_min) * min(feeder.v_min[k], V[k])
        high = cap.susceptance(cap.n_max) * max(feeder.v_max[k], V[k])
        current = float(q_cap[k])
        dq_lo[k] += min(low, current) - current
        dq_hi[k] += max(high, current) - current

    dQ_lo, dQ_hi = interval_matvec(m.C, dq_lo, dq_hi)
    dv_lo, dv_hi = interval_matvec(m.M_q, dq_lo, dq_hi)
    gain_lo, gain_hi = _tap_gain_range(feeder, op, setting)
    dv_lo = dv_lo + gain_lo
    dv_hi = dv_hi + gain_hi

    base = IntervalBox(
        lower=np.column_stack([np.zeros(n), dQ_lo, dv_lo]),
        upper=np.column_stack([np.zeros(n), dQ_hi, dv_hi]),
    )
    if not loss_allowance:
        return base

    taylor = taylor_at(op)
    t2_max = max(
        [1.0] + [o.ratio(n) ** 2 for o in feeder.oltcs for n in (o.n_min, o.n_max)]
    )
    box = base
    for _ in range(2):
        dl = _current_change_bound(taylor, box)
        pad_P = np.abs(m.D_R) @ dl
        pad_Q = np.abs(m.D_X) @ dl
        pad_v = t2_max * (np.abs(m.H) @ dl)
        pad = np.column_stack([pad_P, pad_Q, pad_v])
        box = base.padded(pad, pad)
    logger.debug(
        f"Delta box: max widths dQ {box.width[:, 1].max(initial=0.0):.3e}, "
        f"dv {box.width[:, 2].max(initial=0.0):.3e}"
    )
    return box


def _tap_gain_range(
    feeder: Feeder, op: OperatingPoint, setting: DeviceSetting
) -> Tuple[np.ndarray, np.ndarray]:
    """Range of the change in accumulated tap gain, walked top-down."""
    n = feeder.node_count
    lo = np.zeros(n)
    hi = np.zeros(n)
    if not feeder.oltcs:
        return lo, hi
    V = np.asarray(op.V, dtype=float)
    gain = op.gain()
    for branch in feeder.branches:
        k = branch.index
        parent = branch.from_node
        if parent > 0:
            lo[k] = lo[parent - 1]
            hi[k] = hi[parent - 1]
        oltc = feeder.oltc_on(k)
        if oltc is None:
            continue
        if parent == 0:
            v_range = (feeder.v0, feeder.v0)
        else:
            j = parent - 1
            v_range = (min(feeder.v_min[j], V[j]), max(feeder.v_max[j], V[j]))
        t2 = [oltc.ratio(oltc.n_min) ** 2 - 1.0, oltc.ratio(oltc.n_max) ** 2 - 1.0]
        corners = [a * v for a in t2 for v in v_range]
        own = gain[k] - (gain[parent - 1] if parent > 0 else 0.0)
        lo[k] += min(min(corners), own) - own
        hi[k] += max(max(corners), own) - own
    return lo, hi


def _current_change_bound(taylor: TaylorData, box: IntervalBox) -> np.ndarray:
    """Bound on |l - l0| over the box: max |Jᵀδ| plus half the scaled quadratic."""
    vertices = box.all_vertices()
    linear = np.max(np.abs(taylor.linear(vertices)), axis=0)
    quad = np.max(taylor.quadratic(vertices), axis=0)
    kappa = _kappa(taylor, box)
    return linear + 0.5 * kappa * quad


def _kappa(taylor: TaylorData, box: IntervalBox) -> np.ndarray:
    dv_lo = box.lower[:, 2]
    reach = taylor.v0 + dv_lo
    if np.any(reach <= 0.0):
        bad = int(np.argmin(reach))
        raise EnvelopeError(
            f"Delta box of branch {bad} reaches a non-positive voltage ({reach[bad]:.4g})"
        )
    return np.where(dv_lo < 0.0, taylor.v0 / reach, 1.0)


@dataclass(frozen=True, eq=False)
class EnvelopeBounds:
    """
    Current bounds l_min = l0 + Jᵀδ and l_max = l0 + max(2|Jᵀδ|, quadratic term).

    In ``const`` mode the quadratic term is the constant ``quad_bound`` (κ times
    the box-vertex maximum of δᵀH_eδ). In ``pwl`` mode it is κ (2/v) (s(u1) +
    s(u2)) with s the secant interpolant of x² over ``u_breakpoints`` and
    u1 = dP - P0 dv / v, u2 = dQ - Q0 dv / v.
    """

    taylor: TaylorData
    box: IntervalBox
    kappa: np.ndarray
    quad_bound: np.ndarray
    mode: str = "const"
    u_breakpoints: Tuple[Tuple[np.ndarray, np.ndarray], ...] = ()

    @property
    def n(self) -> int:
        return self.taylor.n

    @property
    def l0(self) -> np.ndarray:
        return self.taylor.l0

    def eigen_coordinates(self, delta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        t = self.taylor
        delta = np.asarray(delta, dtype=float)
        u1 = delta[..., 0] - (t.P0 / t.v0) * delta[..., 2]
        u2 = delta[..., 1] - (t.Q0 / t.v0) * delta[..., 2]
        return u1, u2

    def quad_term(self, delta: np.ndarray) -> np.ndarray:
        delta = np.asarray(delta, dtype=float)
        if self.mode == "const":
            return np.broadcast_to(self.quad_bound, delta.shape[:-1]).copy()
        u1, u2 = self.eigen_coordinates(delta)
        out = np.empty(delta.shape[:-1])
        for k, (bp1, bp2) in enumerate(self.u_breakpoints):
            out[..., k] = (
                self.kappa[k]
                * (2.0 / self.taylor.v0[k])
                * (secant_value(u1[..., k], bp1) + secant_value(u2[..., k], bp2))
            )
        return out

    def l_min(self, delta: np.ndarray) -> np.ndarray:
        return self.taylor.l0 + self.taylor.linear(np.asarray(delta, dtype=float))

    def l_max(self, delta: np.ndarray) -> np.ndarray:
        linear = self.taylor.linear(np.asarray(delta, dtype=float))
        return self.taylor.l0 + np.maximum(2.0 * np.abs(linear), self.quad_term(delta))

    def evaluate(self, delta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(l_min, l_max) for ``delta`` of shape (..., n, 3)."""
        return self.l_min(delta), self.l_max(delta)


def build_envelopes(
    taylor: TaylorData,
    box: IntervalBox,
    mode: str = "const",
    segments: int = 8,
) -> EnvelopeBounds:
    """
    Build the current bounds on a δ box.

    Args:
        taylor: Taylor data at the operating point.
        box: Admissible δ range.
        mode: ``const`` (vertex bound) or ``pwl`` (secant bound per eigendirection).
        segments: Secant segments per eigendirection in ``pwl`` mode.

    Raises:
        EnvelopeError: If the box reaches a non-positive voltage.
        ValueError: On an unknown mode or fewer than 1 segment.
    """
    if mode not in QUAD_MODES:
        raise ValueError(f"Unknown quad mode '{mode}', expected one of {QUAD_MODES}")
    if segments < 1:
        raise ValueError("segments must be at least 1")
    if box.n != taylor.n:
        raise EnvelopeError(f"Box has {box.n} branches, Taylor data {taylor.n}")

    kappa = _kappa(taylor, box)
    vertices = box.all_vertices()
    quad_bound = kappa * np.max(taylor.quadratic(vertices), axis=0)

    breakpoints: List[Tuple[np.ndarray, np.ndarray]] = []
    if mode == "pwl":
        for k in range(taylor.n):
            ranges = []
            for component, flow in enumerate((taylor.P0[k], taylor.Q0[k])):
                coef = -flow / taylor.v0[k]
                shift = (coef * box.lower[k, 2], coef * box.upper[k, 2])
                lo = box.lower[k, component] + min(shift)
                hi = box.upper[k, component] + max(shift)
                ranges.append(
                    secant_breakpoints(min(lo, 0.0), max(hi, 0.0), segments, anchor=0.0)
                )
            breakpoints.append((ranges[0], ranges[1]))
    logger.debug(
        f"Envelopes ({mode}): max quad bound {quad_bound.max(initial=0.0):.3e}, "
        f"max kappa {kappa.max(initial=1.0):.4f}"
    )
    return EnvelopeBounds(
        taylor=taylor,
        box=box,
        kappa=kappa,
        quad_bound=quad_bound,
        mode=mode,
        u_breakpoints=tuple(breakpoints),
    )


def voltage_envelopes(
    m: DistFlowMatrices,
    p: VectorLike,
    q: VectorLike,
    l_min: VectorLike,
    l_max: VectorLike,
    tap_gain: Optional[VectorLike] = None,
    certificate: Optional[Certificate] = None,
) -> Tuple[VectorLike, VectorLike]:
    """
    Upper and lower voltage envelopes V⁺ (from l_min) and V⁻ (from l_max).

    Inputs may be numeric vectors or lists of affine expressions; the result is
    numeric only when every input is.

    Raises:
        EnvelopeError: If H is not certified non-negative.
    """
    certificate = certificate or certify_h_nonneg(m)
    if not certificate.passed:
        raise EnvelopeError(
            f"H certificate FAIL, voltage envelopes are not valid: {'; '.join(certificate.reasons)}"
        )
    gain: VectorLike = np.zeros(m.n) if tap_gain is None else tap_gain
    items = [p, q, l_min, l_max, gain]
    if all(_is_numeric(item) for item in items):
        base = (
            m.v0
            + m.M_p @ np.asarray(p, dtype=float)
            + m.M_q @ np.asarray(q, dtype=float)
            + np.asarray(gain, dtype=float)
        )
        v_plus = base - m.H @ np.asarray(l_min, dtype=float)
        v_minus = base - m.H @ np.asarray(l_max, dtype=float)
        return v_plus, v_minus

    base_terms = [
        lin_matvec(m.M_p, list(p)),
        lin_matvec(m.M_q, list(q)),
    ]
    h_min = lin_matvec(m.H, list(l_min))
    h_max = lin_matvec(m.H, list(l_max))
    plus: List[LinExpr] = []
    minus: List[LinExpr] = []
    for i in range(m.n):
        base = LinExpr(constant=m.v0)
        for term in base_terms:
            base.add(term[i])
        base.add(gain[i])
        plus.append(base.copy().add(h_min[i], -1.0))
        minus.append(base.copy().add(h_max[i], -1.0))
    return plus, minus


def _is_numeric(values: VectorLike) -> bool:
    if isinstance(values, np.ndarray):
        return True
    return all(isinstance(v, (int, float, np.floating)) for v in values)


def oracle_delta(before: OperatingPoint, after: OperatingPoint) -> np.ndarray:
    """δ between two oracle points, shape (n, 3)."""
    return np.column_stack([after.P - before.P, after.Q - before.Q, after.V - before.V])


def sandwich_violation(
    v_oracle: np.ndarray, v_plus: np.ndarray, v_minus: np.ndarray
) -> float:
    """Largest amount by which V_oracle leaves [V⁻, V⁺] (0 when inside)."""
    above = np.asarray(v_oracle) - np.asarray(v_plus)
    below = np.asarray(v_minus) - np.asarray(v_oracle)
    return float(max(0.0, np.max(above, initial=0.0), np.max(below, initial=0.0)))


def quad_grid_max(taylor: TaylorData, box: IntervalBox, branch: int, points: int = 21) -> float:
    """Brute-force max of δᵀH_eδ on a points³ grid of one branch box."""
    axes = [
        np.linspace(box.lower[branch, c], box.upper[branch, c], points) for c in range(3)
    ]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    H = taylor.H_e[branch]
    return float(np.max(np.einsum("si,ij,sj->s", grid, H, grid)))


def relative_error(approx: np.ndarray, exact: np.ndarray) -> np.ndarray:
    scale = np.maximum(np.abs(exact), 1e-12)
    return np.abs(np.asarray(approx) - np.asarray(exact)) / scale
