"""
Exact mixed-integer encodings of tap changers and switched capacitor banks.

Both devices use a chain of binaries with adjacency (s_{p+1} <= s_p), so the only
feasible patterns are "the first k binaries on". Products of a binary with a
voltage are linearized with big-M rows that are exact while the voltage stays in
[0, v_bar].
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from lib.distflow.feeder import CapBank, Feeder, OltcUnit
from lib.mip.model import ExprLike, LinExpr, MipModel, Sense, Variable, lin_sum

logger = logging.getLogger(__name__)


class DeviceEncodingError(Exception):
    """Raised when a device cannot be encoded exactly (bad tap table, big-M, admittance)."""

    pass


def _check_big_m(v_bar: float, floor: float, device: str) -> None:
    """The big-M must be positive and cover the hard upper voltage limit."""
    if not v_bar > 0.0 or v_bar < floor:
        raise DeviceEncodingError(
            f"Invalid big-M {v_bar} for {device} (needs a positive value >= {floor:.6g})"
        )


def tap_ratio_table(oltc: OltcUnit) -> np.ndarray:
    """
    Ratios t_0..t_K for taps n_min..n_max.

    Raises:
        DeviceEncodingError: If the squared ratios are not strictly increasing or a
            ratio is not positive.
    """
    table = np.array([oltc.ratio(n) for n in oltc.positions], dtype=float)
    if np.any(table <= 0.0):
        raise DeviceEncodingError(f"OLTC on branch {oltc.branch} has a non-positive ratio")
    if np.any(np.diff(table**2) <= 0.0):
        raise DeviceEncodingError(
            f"OLTC on branch {oltc.branch} has a non-monotone tap ratio table"
        )
    return table


@dataclass
class OltcEncoding:
    """
    Binaries ``s`` and product pieces ``dv`` of one tap changer.

    ``output`` is t_0² v_in + Σ dv_p, the squared voltage behind the ideal
    transformer.
    """

    oltc: OltcUnit
    ratios: np.ndarray
    increments: np.ndarray
    v_in: LinExpr
    v_bar: float
    s: List[Variable] = field(default_factory=list)
    dv: List[Variable] = field(default_factory=list)
    output: LinExpr = field(default_factory=LinExpr)

    def tap_position(self, x: np.ndarray) -> int:
        return self.oltc.n_min + int(round(sum(float(x[v.index]) for v in self.s)))

    def ratio(self, x: np.ndarray) -> float:
        return self.oltc.ratio(self.tap_position(x))


def encode_oltc(
    model: MipModel,
    feeder: Feeder,
    branch: int,
    v_in: ExprLike,
    v_bar: float,
    prefix: str = "",
) -> OltcEncoding:
    """
    Encode v_out = t² v_in for the tap changer on ``branch``.

    Per step p (Δt_p = t_p² - t_{p-1}²):
    0 <= dv_p <= s_p v_bar Δt_p and Δt_p (v_in - (1 - s_p) v_bar) <= dv_p <= Δt_p v_in.

    Args:
        model: Model receiving the variables and rows.
        feeder: The feeder holding the OLTC.
        branch: Canonical branch index.
        v_in: Squared voltage on the supply side (expression or constant).
        v_bar: Big-M, an upper bound on v_in.
        prefix: Name prefix for the variables.

    Raises:
        DeviceEncodingError: If there is no OLTC on the branch, the tap table is
            not monotone, or v_bar is not positive or below the upstream v_max.
    """
    oltc = feeder.oltc_on(branch)
    if oltc is None:
        raise DeviceEncodingError(f"No OLTC on branch index {branch}")
    upstream = feeder.branches[branch].from_node
    floor = feeder.v0 if upstream == 0 else float(feeder.v_max[upstream - 1])
    _check_big_m(v_bar, floor, f"OLTC on branch {branch}")
    ratios = tap_ratio_table(oltc)
    increments = np.diff(ratios**2)
    v_expr = LinExpr.of(v_in)
    name = f"{prefix}oltc{branch}"
    enc = OltcEncoding(
        oltc=oltc, ratios=ratios, increments=increments, v_in=v_expr, v_bar=float(v_bar)
    )

    v_bar = float(v_bar)
    for p, dt in enumerate(increments.tolist(), start=1):
        s = model.add_binary(f"{name}_s{p}")
        dv = model.add_var(f"{name}_dv{p}", lb=0.0, ub=v_bar * dt)
        model.add_constraint(dv - v_bar * dt * s, Sense.LE, 0.0, name=f"{name}_on{p}")
        model.add_constraint(dv - dt * v_expr, Sense.LE, 0.0, name=f"{name}_up{p}")
        model.add_constraint(
            dv - dt * v_expr - v_bar * dt * s, Sense.GE, -v_bar * dt, name=f"{name}_lo{p}"
        )
        if enc.s:
            model.add_constraint(s - enc.s[-1], Sense.LE, 0.0, name=f"{name}_adj{p}")
        enc.s.append(s)
        enc.dv.append(dv)

    enc.output = (float(ratios[0]) ** 2) * v_expr + lin_sum(enc.dv)
    return enc


@dataclass
class CapEncoding:
    """
    Unit binaries ``u`` and injection pieces ``qs`` of one capacitor bank.

    ``injection`` is Σ qs_p; ``link`` ties the pieces to the node voltage.
    """

    cap: CapBank
    v_bar: float
    u: List[Variable] = field(default_factory=list)
    qs: List[Variable] = field(default_factory=list)
    injection: LinExpr = field(default_factory=LinExpr)
    v_node: Optional[LinExpr] = None
    name: str = ""

    def unit_count(self, x: np.ndarray) -> int:
        return int(round(sum(float(x[v.index]) for v in self.u)))

    def injection_value(self, x: np.ndarray) -> float:
        return self.injection.value(x)

    @classmethod
    def create(
        cls,
        model: MipModel,
        cap: CapBank,
        v_bar: float,
        prefix: str = "",
        v_max: Optional[float] = None,
    ) -> "CapEncoding":
        """Variables, per-unit bounds, adjacency and the minimum unit count."""
        _check_big_m(v_bar, 0.0 if v_max is None else v_max, f"cap at node {cap.node}")
        if any(b <= 0.0 for b in cap.steps):
            raise DeviceEncodingError(
                f"Capacitor bank at node {cap.node} has a non-positive unit admittance"
            )
        name = f"{prefix}cap{cap.node}"
        v_bar = float(v_bar)
        enc = cls(cap=cap, v_bar=v_bar, name=name)
        for p, b in enumerate(cap.steps, start=1):
            u = model.add_binary(f"{name}_u{p}")
            qs = model.add_var(f"{name}_q{p}", lb=0.0, ub=v_bar * b)
            model.add_constraint(qs - v_bar * b * u, Sense.LE, 0.0, name=f"{name}_on{p}")
            if enc.u:
                model.add_constraint(u - enc.u[-1], Sense.LE, 0.0, name=f"{name}_adj{p}")
            enc.u.append(u)
            enc.qs.append(qs)
        if cap.n_min > 0:
            model.add_constraint(lin_sum(enc.u), Sense.GE, cap.n_min, name=f"{name}_min")
        enc.injection = lin_sum(enc.qs)
        return enc

    def link(self, model: MipModel, v_node: ExprLike) -> None:
        """b_p (v - (1 - u_p) v_bar) <= qs_p <= b_p v for every unit."""
        v_expr = LinExpr.of(v_node)
        name = self.name or f"cap{self.cap.node}"
        for p, (b, u, qs) in enumerate(zip(self.cap.steps, self.u, self.qs), start=1):
            model.add_constraint(qs - b * v_expr, Sense.LE, 0.0, name=f"{name}_up{p}")
            model.add_constraint(
                qs - b * v_expr - self.v_bar * b * u,
                Sense.GE,
                -self.v_bar * b,
                name=f"{name}_lo{p}",
            )
        self.v_node = v_expr


def encode_cap(
    model: MipModel,
    feeder: Feeder,
    node: int,
    v_node: ExprLike,
    v_bar: float,
) -> CapEncoding:
    """
    Encode Q_cp = v b(n_cp) for the bank at canonical ``node``.

    Raises:
        DeviceEncodingError: If there is no bank at the node, a unit admittance is
            not positive, or v_bar is not positive or below the node v_max.
    """
    cap = feeder.cap_at(node)
    if cap is None:
        raise DeviceEncodingError(f"No capacitor bank at node {node}")
    enc = CapEncoding.create(model, cap, v_bar, v_max=float(feeder.v_max[node - 1]))
    enc.link(model, v_node)
    return enc
