"""
Backward/forward sweep load flow for radial feeders.

The oracle is the exact DistFlow model: the backward sweep aggregates flows with
loss terms, the forward sweep updates squared voltages. OLTCs are ideal ratio
transformers at the upstream end of their branch (w = t² v_parent) and capacitor
banks inject Q = b v at the current voltage, updated every sweep.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from lib.distflow.feeder import Feeder
from lib.distflow.matrices import OperatingPoint

logger = logging.getLogger(__name__)


class LoadFlowError(Exception):
    """Base class for load-flow failures."""

    pass


class LoadFlowDivergenceError(LoadFlowError):
    """Raised when the sweep does not reach the tolerance within max_iter."""

    pass


class VoltageCollapseError(LoadFlowError):
    """Raised when a squared voltage becomes non-positive during the sweep."""

    pass


class SettingValidationError(ValueError):
    """Raised when a device setting refers to unknown devices or leaves their range."""

    pass


@dataclass(frozen=True)
class DeviceSetting:
    """
    Discrete and continuous device positions.

    ``n_tr`` maps OLTC branch index to tap position, ``n_cp`` maps cap node to the
    number of switched-in units and ``q_g`` maps DER node to its reactive output.
    Missing entries mean the neutral position.
    """

    n_tr: Mapping[int, int] = field(default_factory=dict)
    n_cp: Mapping[int, int] = field(default_factory=dict)
    q_g: Mapping[int, float] = field(default_factory=dict)

    @classmethod
    def neutral(cls, feeder: Feeder) -> "DeviceSetting":
        """Zero DER output, caps at their minimum, taps at 0 (clipped to range)."""
        return cls(
            n_tr={o.branch: o.clip(0) for o in feeder.oltcs},
            n_cp={c.node: c.n_min for c in feeder.caps},
            q_g={d.node: float(min(max(0.0, d.q_min), d.q_max)) for d in feeder.ders},
        )

    def complete(self, feeder: Feeder) -> "DeviceSetting":
        """Fill in neutral values for devices the setting does not mention."""
        base = DeviceSetting.neutral(feeder)
        return DeviceSetting(
            n_tr={**base.n_tr, **self.n_tr},
            n_cp={**base.n_cp, **self.n_cp},
            q_g={**base.q_g, **self.q_g},
        )

    def validate(self, feeder: Feeder, tolerance: float = 1e-9) -> None:
        """
        Check every value against the feeder's declared device ranges.

        Raises:
            SettingValidationError: On unknown devices, non-integral counts or
                out-of-range values.
        """
        for branch, tap in self.n_tr.items():
            oltc = feeder.oltc_on(branch)
            if oltc is None:
                raise SettingValidationError(f"No OLTC on branch index {branch}")
            if int(tap) != tap or not oltc.n_min <= tap <= oltc.n_max:
                raise SettingValidationError(
                    f"Tap {tap} on branch index {branch} outside {oltc.n_min}..{oltc.n_max}"
                )
        for node, units in self.n_cp.items():
            cap = feeder.cap_at(node)
            if cap is None:
                raise SettingValidationError(f"No capacitor bank at node {node}")
            if int(units) != units or not cap.n_min <= units <= cap.n_max:
                raise SettingValidationError(
                    f"Cap units {units} at node {node} outside {cap.n_min}..{cap.n_max}"
                )
        for node, value in self.q_g.items():
            der = feeder.der_at(node)
            if der is None:
                raise SettingValidationError(f"No DER at node {node}")
            if not der.q_min - tolerance <= value <= der.q_max + tolerance:
                raise SettingValidationError(
                    f"DER output {value} at node {node} outside [{der.q_min}, {der.q_max}]"
                )

    def tap_ratios(self, feeder: Feeder) -> np.ndarray:
        """Per-branch tap ratio t (1 on branches without an OLTC)."""
        ratios = np.ones(feeder.node_count)
        for oltc in feeder.oltcs:
            ratios[oltc.branch] = oltc.ratio(int(self.n_tr.get(oltc.branch, 0)))
        return ratios

    def cap_susceptance(self, feeder: Feeder) -> np.ndarray:
        """Per-node switched-in cap admittance b."""
        b = np.zeros(feeder.node_count)
        for cap in feeder.caps:
            b[cap.node - 1] = cap.susceptance(int(self.n_cp.get(cap.node, cap.n_min)))
        return b

    def der_injection(self, feeder: Feeder) -> np.ndarray:
        q = np.zeros(feeder.node_count)
        for der in feeder.ders:
            q[der.node - 1] = float(self.q_g.get(der.node, 0.0))
        return q

    def to_dict(self, feeder: Feeder) -> Dict[str, Dict[str, float]]:
        """Setting keyed by original ids, for reporting."""
        return {
            "n_tr": {
                str(feeder.branches[b].original_id): int(v) for b, v in self.n_tr.items()
            },
            "n_cp": {str(feeder.original_id(k)): int(v) for k, v in self.n_cp.items()},
            "q_g": {str(feeder.original_id(k)): float(v) for k, v in self.q_g.items()},
        }


@dataclass(frozen=True, eq=False)
class FeasibilityReport:
    """Per-node voltage margins (pu²) against the hard and tight bounds."""

    node_ids: np.ndarray
    margin_min: np.ndarray
    margin_max: np.ndarray
    margin_lo: np.ndarray
    margin_hi: np.ndarray
    hard_feasible: bool
    tight_feasible: bool
    worst_node: int
    worst_margin: float
    tight_violation_total: float
    tolerance: float

    def to_dict(self) -> Dict[str, object]:
        return {
            "hard_feasible": self.hard_feasible,
            "tight_feasible": self.tight_feasible,
            "worst_node": self.worst_node,
            "worst_margin": self.worst_margin,
            "tight_violation_total": self.tight_violation_total,
            "tolerance": self.tolerance,
            "margins": {
                str(int(node)): {
                    "v_min": float(self.margin_min[k]),
                    "v_max": float(self.margin_max[k]),
                    "v_lo": float(self.margin_lo[k]),
                    "v_hi": float(self.margin_hi[k]),
                }
                for k, node in enumerate(self.node_ids)
            },
        }


def solve_loadflow(
    feeder: Feeder,
    p: np.ndarray,
    q_uncontrolled: np.ndarray,
    setting: Optional[DeviceSetting] = None,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> OperatingPoint:
    """
    Solve the DistFlow equations by backward/forward sweep.

    Args:
        feeder: The feeder.
        p: Active injections per node (-P_L).
        q_uncontrolled: Uncontrolled reactive injections per node (-Q_L).
        setting: Device positions; neutral when omitted.
        tol: Bound on max |l v - (P² + Q²)| and on the cap injection update.
        max_iter: Maximum number of sweeps.

    Returns:
        The converged operating point.

    Raises:
        LoadFlowDivergenceError: If the tolerance is not met within max_iter.
        VoltageCollapseError: If a squared voltage becomes non-positive.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    n = feeder.node_count
    p = np.asarray(p, dtype=float)
    q_uncontrolled = np.asarray(q_uncontrolled, dtype=float)
    if p.shape != (n,) or q_uncontrolled.shape != (n,):
        raise ValueError(f"Injection vectors must have shape ({n},)")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q_uncontrolled))):
        raise ValueError("Injections must be finite")

    setting = (setting or DeviceSetting()).complete(feeder)
    setting.validate(feeder)
    t2 = setting.tap_ratios(feeder) ** 2
    b = setting.cap_susceptance(feeder)
    q_der = setting.der_injection(feeder)

    r = feeder.r
    x = feeder.x
    z2 = r**2 + x**2
    parent = np.array([br.from_node for br in feeder.branches], dtype=int)

    V = np.full(n, feeder.v0)
    l = np.zeros(n)
    history = []
    for iteration in range(1, max_iter + 1):
        q_cap = b * V
        q = q_uncontrolled + q_der + q_cap

        # backward sweep: children have larger indices than their parent
        P = p.copy()
        Q = q.copy()
        for k in range(n - 1, -1, -1):
            f = parent[k]
            if f > 0:
                P[f - 1] += P[k] - r[k] * l[k]
                Q[f - 1] += Q[k] - x[k] * l[k]

        # forward sweep
        V_new = np.empty(n)
        gain = np.zeros(n)
        for k in range(n):
            f = parent[k]
            v_parent = feeder.v0 if f == 0 else V_new[f - 1]
            gain_parent = 0.0 if f == 0 else gain[f - 1]
            V_new[k] = (
                t2[k] * v_parent
                + 2.0 * (r[k] * P[k] + x[k] * Q[k])
                - z2[k] * l[k]
            )
            gain[k] = gain_parent + (t2[k] - 1.0) * v_parent
            if V_new[k] <= 0.0:
                raise VoltageCollapseError(
                    f"Squared voltage {V_new[k]:.4g} at node "
                    f"{feeder.original_id(k + 1)} in sweep {iteration}"
                )

        current_residual = float(np.max(np.abs(l * V_new - (P**2 + Q**2))))
        cap_residual = float(np.max(np.abs(b * (V_new - V)), initial=0.0))
        residual = max(current_residual, cap_residual)
        history.append(residual)
        logger.debug(f"Sweep {iteration}: residual {residual:.3e}")
        V = V_new
        if residual <= tol:
            return OperatingPoint(
                p=p.copy(),
                q=q,
                P=P,
                Q=Q,
                V=V,
                l=l.copy(),
                tap_gain=gain,
                q_cap=q_cap,
                iterations=iteration,
                residual_history=tuple(history),
            )
        l = (P**2 + Q**2) / V

    raise LoadFlowDivergenceError(
        f"Load flow did not converge in {max_iter} sweeps (last residual {history[-1]:.3e})"
    )


def feasibility_report(
    feeder: Feeder, op: OperatingPoint, tolerance: float = 1e-6
) -> FeasibilityReport:
    """Margins of the oracle voltages to the hard and tight bounds."""
    margin_min = op.V - feeder.v_min
    margin_max = feeder.v_max - op.V
    margin_lo = op.V - feeder.v_lo
    margin_hi = feeder.v_hi - op.V
    hard = np.minimum(margin_min, margin_max)
    worst = int(np.argmin(hard))
    violation = np.maximum(0.0, -margin_lo) + np.maximum(0.0, -margin_hi)
    return FeasibilityReport(
        node_ids=np.array(feeder.node_ids[1:]),
        margin_min=margin_min,
        margin_max=margin_max,
        margin_lo=margin_lo,
        margin_hi=margin_hi,
        hard_feasible=bool(hard.min() >= -tolerance),
        tight_feasible=bool(min(margin_lo.min(), margin_hi.min()) >= -tolerance),
        worst_node=int(feeder.original_id(worst + 1)),
        worst_margin=float(hard[worst]),
        tight_violation_total=float(violation.sum()),
        tolerance=tolerance,
    )
