"""
DistFlow operator matrices and their structural certificate.

Branch k is identified with its downstream node k + 1. Flows P_k, Q_k are measured
at that node in the injection direction (positive toward the substation) and the
squared current satisfies l_k * v_{k+1} = P_k² + Q_k². With this convention

    P = C p - D_R l,   Q = C q - D_X l,   V = v0 1 + M_p p + M_q q - H l + G

hold exactly, where G is the accumulated tap-changer gain (zero at neutral taps).
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from lib.distflow.feeder import Feeder, NetworkClass

logger = logging.getLogger(__name__)

NONNEG_TOLERANCE = 1e-12


class MatrixBuildError(Exception):
    """Raised when the incidence structure does not yield a valid DistFlow operator."""

    pass


@dataclass(frozen=True, eq=False)
class DistFlowMatrices:
    """Dense DistFlow operators of a feeder (all n x n except ``B``)."""

    v0: float
    B: np.ndarray
    B_n: np.ndarray
    A: np.ndarray
    C: np.ndarray
    D_R: np.ndarray
    D_X: np.ndarray
    R: np.ndarray
    X: np.ndarray
    Z2: np.ndarray
    M_p: np.ndarray
    M_q: np.ndarray
    H: np.ndarray
    classification: NetworkClass

    @property
    def n(self) -> int:
        return int(self.A.shape[0])

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {
            "B": self.B,
            "B_n": self.B_n,
            "A": self.A,
            "C": self.C,
            "D_R": self.D_R,
            "D_X": self.D_X,
            "R": self.R,
            "X": self.X,
            "Z2": self.Z2,
            "M_p": self.M_p,
            "M_q": self.M_q,
            "H": self.H,
        }


@dataclass(frozen=True, eq=False)
class OperatingPoint:
    """
    A branch-flow state with the injections that produced it.

    ``q`` is the total reactive injection (uncontrolled demand, DER output and the
    voltage-dependent cap injection ``q_cap``). ``tap_gain`` is the per-node
    accumulated tap gain G; None means neutral taps.
    """

    p: np.ndarray
    q: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    V: np.ndarray
    l: np.ndarray
    tap_gain: Optional[np.ndarray] = None
    q_cap: Optional[np.ndarray] = None
    iterations: int = 0
    residual_history: Tuple[float, ...] = field(default_factory=tuple)

    @property
    def n(self) -> int:
        return int(self.V.shape[0])

    def gain(self) -> np.ndarray:
        return np.zeros(self.n) if self.tap_gain is None else self.tap_gain

    def cap_injection(self) -> np.ndarray:
        return np.zeros(self.n) if self.q_cap is None else self.q_cap

    @classmethod
    def no_load(cls, feeder: Feeder) -> "OperatingPoint":
        n = feeder.node_count
        zeros = np.zeros(n)
        return cls(
            p=zeros.copy(),
            q=zeros.copy(),
            P=zeros.copy(),
            Q=zeros.copy(),
            V=np.full(n, feeder.v0),
            l=zeros.copy(),
        )


@dataclass(frozen=True)
class Certificate:
    """Outcome of the inverse-positivity check on I - A and H."""

    classification: NetworkClass
    z_matrix: bool
    unit_eigenvalues: bool
    determinant: float
    min_c: float
    min_h: float
    min_m_p: float
    min_m_q: float
    tolerance: float
    reasons: Tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return not self.reasons

    @property
    def status(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def to_dict(self) -> Dict[str, object]:
        return {
            "status": self.status,
            "classification": self.classification.value,
            "z_matrix": self.z_matrix,
            "unit_eigenvalues": self.unit_eigenvalues,
            "determinant": self.determinant,
            "min_c": self.min_c,
            "min_h": self.min_h,
            "min_m_p": self.min_m_p,
            "min_m_q": self.min_m_q,
            "tolerance": self.tolerance,
            "reasons": list(self.reasons),
        }


@dataclass(frozen=True)
class ResidualReport:
    """Max-norm residuals of the flow, voltage and current relations."""

    flow_p: float
    flow_q: float
    voltage: float
    current: float

    @property
    def max(self) -> float:
        return max(self.flow_p, self.flow_q, self.voltage, self.current)

    def to_dict(self) -> Dict[str, float]:
        return {
            "flow_p": self.flow_p,
            "flow_q": self.flow_q,
            "voltage": self.voltage,
            "current": self.current,
            "max": self.max,
        }


def build_matrices(feeder: Feeder) -> DistFlowMatrices:
    """
    Build the DistFlow operators of a canonically ordered feeder.

    Args:
        feeder: A validated feeder.

    Returns:
        The dense operator matrices.

    Raises:
        MatrixBuildError: If I - A is not unit upper triangular or not invertible,
            which signals an ordering bug.
    """
    n = feeder.node_count
    B = np.zeros((n + 1, n))
    for b in feeder.branches:
        B[b.from_node, b.index] = 1.0
        B[b.to_node, b.index] = 1.0
    B_n = B[1:, :]
    eye = np.eye(n)
    A = B_n - eye
    i_minus_a = eye - A

    if np.any(np.tril(i_minus_a, -1) != 0.0) or np.any(np.diag(i_minus_a) != 1.0):
        raise MatrixBuildError(
            "I - A is not unit upper triangular; the feeder is not canonically ordered"
        )
    C = np.linalg.solve(i_minus_a, eye)
    if np.max(np.abs(i_minus_a @ C - eye)) > 1e-12:
        raise MatrixBuildError("I - A is numerically singular")

    R = np.diag(feeder.r)
    X = np.diag(feeder.x)
    Z2 = R @ R + X @ X
    D_R = C @ A @ R
    D_X = C @ A @ X
    M_p = 2.0 * C.T @ R @ C
    M_q = 2.0 * C.T @ X @ C
    H = C.T @ (2.0 * (R @ D_R + X @ D_X) + Z2)

    logger.debug(f"Built DistFlow matrices for n={n} ({feeder.classification.value})")
    return DistFlowMatrices(
        v0=feeder.v0,
        B=B,
        B_n=B_n,
        A=A,
        C=C,
        D_R=D_R,
        D_X=D_X,
        R=R,
        X=X,
        Z2=Z2,
        M_p=M_p,
        M_q=M_q,
        H=H,
        classification=feeder.classification,
    )


def certify_h_nonneg(
    m: DistFlowMatrices, tolerance: float = NONNEG_TOLERANCE
) -> Certificate:
    """
    Certify that I - A is an M-matrix with unit spectrum and that H is non-negative.

    Failure is encoded in the certificate, never raised.
    """
    i_minus_a = np.eye(m.n) - m.A
    off_diagonal = i_minus_a - np.diag(np.diag(i_minus_a))
    z_matrix = bool(np.all(off_diagonal <= 0.0))
    if np.all(np.tril(i_minus_a, -1) == 0.0):
        eigenvalues = np.diag(i_minus_a)
    else:
        eigenvalues = np.linalg.eigvals(i_minus_a)
    unit_eigenvalues = bool(np.allclose(eigenvalues, 1.0, rtol=0.0, atol=1e-12))
    determinant = float(np.prod(np.diag(i_minus_a)))

    min_c = float(m.C.min())
    min_h = float(m.H.min())
    reasons = []
    if not z_matrix:
        reasons.append("I - A has positive off-diagonal entries")
    if not unit_eigenvalues:
        reasons.append("I - A has eigenvalues different from 1")
    if min_c < -tolerance:
        reasons.append(f"C has a negative entry ({min_c:.3e})")
    if min_h < -tolerance:
        reasons.append(f"H has a negative entry ({min_h:.3e})")

    certificate = Certificate(
        classification=m.classification,
        z_matrix=z_matrix,
        unit_eigenvalues=unit_eigenvalues,
        determinant=determinant,
        min_c=min_c,
        min_h=min_h,
        min_m_p=float(m.M_p.min()),
        min_m_q=float(m.M_q.min()),
        tolerance=tolerance,
        reasons=tuple(reasons),
    )
    if not certificate.passed:
        logger.warning(f"H certificate FAIL: {'; '.join(reasons)}")
    return certificate


def residuals(m: DistFlowMatrices, op: OperatingPoint) -> ResidualReport:
    """
    Evaluate the linear flow and voltage identities and the current relation.

    Raises:
        ValueError: If the operating point does not match the matrix dimension.
    """
    n = m.n
    for name in ("p", "q", "P", "Q", "V", "l"):
        if getattr(op, name).shape != (n,):
            raise ValueError(
                f"Dimension mismatch: {name} has shape {getattr(op, name).shape}, expected ({n},)"
            )
    flow_p = op.P - (m.C @ op.p - m.D_R @ op.l)
    flow_q = op.Q - (m.C @ op.q - m.D_X @ op.l)
    voltage = op.V - (
        m.v0 + m.M_p @ op.p + m.M_q @ op.q - m.H @ op.l + op.gain()
    )
    current = op.l * op.V - (op.P**2 + op.Q**2)
    return ResidualReport(
        flow_p=float(np.max(np.abs(flow_p), initial=0.0)),
        flow_q=float(np.max(np.abs(flow_q), initial=0.0)),
        voltage=float(np.max(np.abs(voltage), initial=0.0)),
        current=float(np.max(np.abs(current), initial=0.0)),
    )
