"""
Mixed-integer linear model builder.

Variables are handles into a MipModel; arithmetic on variables produces LinExpr
objects (sparse coefficient map plus constant). Constraints are stored as
``expr <sense> rhs`` with the constant folded into the right-hand side.
"""

import logging
import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

Number = Union[int, float, np.floating]
ExprLike = Union["LinExpr", "Variable", Number]


class MipModelError(Exception):
    """Raised when a model is inconsistent (NaN coefficients, unbounded binaries, ...)."""

    pass


class Sense(str, Enum):
    LE = "<="
    GE = ">="
    EQ = "="

    @classmethod
    def parse(cls, value: Union[str, "Sense"]) -> "Sense":
        if isinstance(value, Sense):
            return value
        if value == "==":
            return cls.EQ
        return cls(value)


class _ExprOps:
    """Arithmetic shared by Variable and LinExpr."""

    # numpy scalars defer to the reflected operators below
    __array_ufunc__ = None

    def _as_expr(self) -> "LinExpr":
        raise NotImplementedError

    def __add__(self, other: ExprLike) -> "LinExpr":
        result = self._as_expr().copy()
        result.add(other)
        return result

    def __radd__(self, other: ExprLike) -> "LinExpr":
        return self.__add__(other)

    def __sub__(self, other: ExprLike) -> "LinExpr":
        result = self._as_expr().copy()
        result.add(other, -1.0)
        return result

    def __rsub__(self, other: ExprLike) -> "LinExpr":
        result = LinExpr.of(other).copy()
        result.add(self, -1.0)
        return result

    def __mul__(self, factor: Number) -> "LinExpr":
        if isinstance(factor, (LinExpr, Variable)):
            raise MipModelError("Products of expressions are not linear")
        result = LinExpr()
        result.add(self, float(factor))
        return result

    def __rmul__(self, factor: Number) -> "LinExpr":
        return self.__mul__(factor)

    def __truediv__(self, divisor: Number) -> "LinExpr":
        return self.__mul__(1.0 / float(divisor))

    def __neg__(self) -> "LinExpr":
        return self.__mul__(-1.0)


class LinExpr(_ExprOps):
    """Affine expression sum_j coef_j x_j + constant."""

    __slots__ = ("terms", "constant")

    def __init__(
        self, terms: Optional[Dict[int, float]] = None, constant: float = 0.0
    ) -> None:
        self.terms: Dict[int, float] = dict(terms) if terms else {}
        self.constant = float(constant)

    @staticmethod
    def of(value: ExprLike) -> "LinExpr":
        if isinstance(value, LinExpr):
            return value
        if isinstance(value, Variable):
            return LinExpr({value.index: 1.0})
        return LinExpr(constant=float(value))

    def _as_expr(self) -> "LinExpr":
        return self

    def copy(self) -> "LinExpr":
        return LinExpr(self.terms, self.constant)

    def add(self, other: ExprLike, factor: float = 1.0) -> "LinExpr":
        """In-place ``self += factor * other``."""
        if factor == 0.0:
            return self
        if isinstance(other, Variable):
            self.terms[other.index] = self.terms.get(other.index, 0.0) + factor
        elif isinstance(other, LinExpr):
            for j, coef in other.terms.items():
                self.terms[j] = self.terms.get(j, 0.0) + factor * coef
            self.constant += factor * other.constant
        else:
            self.constant += factor * float(other)
        return self

    def value(self, x: np.ndarray) -> float:
        return self.constant + sum(coef * float(x[j]) for j, coef in self.terms.items())

    @property
    def is_constant(self) -> bool:
        return all(coef == 0.0 for coef in self.terms.values())

    def __repr__(self) -> str:
        parts = [f"{coef:+g}*x{j}" for j, coef in sorted(self.terms.items())]
        return f"LinExpr({' '.join(parts)} {self.constant:+g})"


@dataclass(eq=False)
class Variable(_ExprOps):
    index: int
    name: str
    lb: float
    ub: float
    binary: bool = False

    def _as_expr(self) -> LinExpr:
        return LinExpr({self.index: 1.0})

    def __hash__(self) -> int:
        return id(self)


@dataclass
class Constraint:
    name: str
    terms: Dict[int, float]
    sense: Sense
    rhs: float


@dataclass
class LpArrays:
    """Dense array form of a model."""

    c: np.ndarray
    A: np.ndarray
    senses: List[Sense]
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    binary: np.ndarray
    objective_constant: float


class MipModel:
    """A linear model with continuous and binary variables, minimized."""

    def __init__(self, name: str = "model") -> None:
        self.name = name
        self.variables: List[Variable] = []
        self.constraints: List[Constraint] = []
        self.objective = LinExpr()
        self._names: Dict[str, Variable] = {}

    # --- building ---

    def add_var(
        self,
        name: str,
        lb: float = 0.0,
        ub: float = math.inf,
        binary: bool = False,
    ) -> Variable:
        if name in self._names:
            raise MipModelError(f"Duplicate variable name '{name}'")
        if binary:
            lb, ub = 0.0, 1.0
        if math.isnan(lb) or math.isnan(ub):
            raise MipModelError(f"Variable '{name}' has a NaN bound")
        if lb > ub:
            raise MipModelError(f"Variable '{name}' has lb {lb} > ub {ub}")
        var = Variable(len(self.variables), name, float(lb), float(ub), binary)
        self.variables.append(var)
        self._names[name] = var
        return var

    def add_binary(self, name: str) -> Variable:
        return self.add_var(name, binary=True)

    def variable(self, name: str) -> Variable:
        return self._names[name]

    def add_constraint(
        self,
        lhs: ExprLike,
        sense: Union[str, Sense],
        rhs: ExprLike = 0.0,
        name: Optional[str] = None,
    ) -> Optional[Constraint]:
        """
        Add ``lhs <sense> rhs``.

        Constraints without variables are checked immediately and not stored.

        Raises:
            MipModelError: On NaN coefficients or a violated constant constraint.
        """
        sense = Sense.parse(sense)
        expr = LinExpr.of(lhs).copy()
        expr.add(rhs, -1.0)
        terms = {j: c for j, c in expr.terms.items() if c != 0.0}
        bound = -expr.constant
        if any(math.isnan(c) for c in terms.values()) or math.isnan(bound):
            raise MipModelError(f"Constraint '{name}' has a NaN coefficient")
        if not terms:
            violated = (
                (sense is Sense.LE and bound < -1e-12)
                or (sense is Sense.GE and bound > 1e-12)
                or (sense is Sense.EQ and abs(bound) > 1e-12)
            )
            if violated:
                raise MipModelError(f"Constant constraint '{name}' is violated")
            return None
        constraint = Constraint(
            name=name or f"c{len(self.constraints)}",
            terms=terms,
            sense=sense,
            rhs=bound,
        )
        self.constraints.append(constraint)
        return constraint

    def set_objective(self, expr: ExprLike) -> None:
        self.objective = LinExpr.of(expr).copy()

    def add_objective_term(self, expr: ExprLike, factor: float = 1.0) -> None:
        self.objective.add(expr, factor)

    # --- inspection ---

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    @property
    def binary_indices(self) -> List[int]:
        return [v.index for v in self.variables if v.binary]

    @property
    def num_binaries(self) -> int:
        return len(self.binary_indices)

    def summary(self) -> Dict[str, int]:
        return {
            "variables": self.num_vars,
            "binaries": self.num_binaries,
            "continuous": self.num_vars - self.num_binaries,
            "rows": self.num_constraints,
            "nonzeros": sum(len(c.terms) for c in self.constraints),
        }

    def validate(self) -> None:
        for var in self.variables:
            if var.binary and not (math.isfinite(var.lb) and math.isfinite(var.ub)):
                raise MipModelError(f"Binary '{var.name}' has infinite bounds")
        for j, coef in self.objective.terms.items():
            if math.isnan(coef):
                raise MipModelError(f"Objective coefficient of x{j} is NaN")

    def to_arrays(self) -> LpArrays:
        self.validate()
        n = self.num_vars
        m = self.num_constraints
        c = np.zeros(n)
        for j, coef in self.objective.terms.items():
            c[j] = coef
        A = np.zeros((m, n))
        b = np.zeros(m)
        for i, con in enumerate(self.constraints):
            for j, coef in con.terms.items():
                A[i, j] = coef
            b[i] = con.rhs
        return LpArrays(
            c=c,
            A=A,
            senses=[con.sense for con in self.constraints],
            b=b,
            lb=np.array([v.lb for v in self.variables]),
            ub=np.array([v.ub for v in self.variables]),
            binary=np.array([v.binary for v in self.variables], dtype=bool),
            objective_constant=self.objective.constant,
        )

    def max_violation(self, x: np.ndarray) -> float:
        """Largest constraint or bound violation of a point."""
        worst = 0.0
        for con in self.constraints:
            lhs = sum(coef * x[j] for j, coef in con.terms.items())
            if con.sense is Sense.LE:
                worst = max(worst, lhs - con.rhs)
            elif con.sense is Sense.GE:
                worst = max(worst, con.rhs - lhs)
            else:
                worst = max(worst, abs(lhs - con.rhs))
        for var in self.variables:
            worst = max(worst, var.lb - x[var.index], x[var.index] - var.ub)
        return float(worst)

    def dump_lp(self) -> str:
        """Render the model in CPLEX LP text format."""
        names = [_lp_name(v.name) for v in self.variables]
        lines = [f"\\ Model {self.name}"]
        if self.objective.constant:
            lines.append(f"\\ Objective constant {self.objective.constant!r}")
        lines.append("Minimize")
        lines.append(" obj: " + _lp_terms(self.objective.terms, names))
        lines.append("Subject To")
        for con in self.constraints:
            lines.append(
                f" {_lp_name(con.name)}: {_lp_terms(con.terms, names)} "
                f"{con.sense.value} {con.rhs!r}"
            )
        lines.append("Bounds")
        for var, name in zip(self.variables, names):
            if var.binary:
                continue
            if math.isinf(var.lb) and math.isinf(var.ub):
                lines.append(f" {name} free")
            elif math.isinf(var.ub):
                lines.append(f" {name} >= {var.lb!r}")
            elif math.isinf(var.lb):
                lines.append(f" -inf <= {name} <= {var.ub!r}")
            else:
                lines.append(f" {var.lb!r} <= {name} <= {var.ub!r}")
        binaries = [name for var, name in zip(self.variables, names) if var.binary]
        if binaries:
            lines.append("Binaries")
            for start in range(0, len(binaries), 8):
                lines.append(" " + " ".join(binaries[start : start + 8]))
        lines.append("End")
        return "\n".join(lines) + "\n"


def _lp_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.]", "_", name)


def _lp_terms(terms: Dict[int, float], names: Sequence[str]) -> str:
    if not terms:
        return "0 " + (names[0] if names else "")
    parts = []
    for j, coef in sorted(terms.items()):
        sign = "-" if coef < 0 else "+"
        parts.append(f"{sign} {abs(coef)!r} {names[j]}")
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


# --- expression helpers ---


def lin_sum(items: Iterable[ExprLike]) -> LinExpr:
    result = LinExpr()
    for item in items:
        result.add(item)
    return result


def lin_dot(coefs: Sequence[float], items: Sequence[ExprLike]) -> LinExpr:
    """sum_i coefs[i] * items[i], skipping zero coefficients."""
    result = LinExpr()
    for coef, item in zip(coefs, items):
        if coef != 0.0:
            result.add(item, float(coef))
    return result


def lin_matvec(
    matrix: np.ndarray, items: Sequence[ExprLike]
) -> Union[np.ndarray, List[LinExpr]]:
    """Matrix-vector product over numbers or expressions."""
    if all(isinstance(item, (int, float, np.floating)) for item in items):
        return np.asarray(matrix, dtype=float) @ np.asarray(items, dtype=float)
    return [lin_dot(row, items) for row in np.asarray(matrix, dtype=float)]


# --- secant PWL epigraphs of x² ---


def secant_breakpoints(
    lo: float, hi: float, segments: int, anchor: Optional[float] = None
) -> np.ndarray:
    """
    Uniform breakpoints over [lo, hi] with an optional extra anchor point.

    A degenerate range yields a single breakpoint.
    """
    if segments < 1:
        raise ValueError("segments must be at least 1")
    if hi < lo:
        raise ValueError(f"Empty range [{lo}, {hi}]")
    if hi - lo <= 1e-15:
        return np.array([lo])
    points = np.linspace(lo, hi, segments + 1)
    if anchor is not None and lo < anchor < hi:
        if np.min(np.abs(points - anchor)) > 1e-12 * max(1.0, hi - lo):
            points = np.sort(np.append(points, anchor))
    return points


def secant_value(x: Union[float, np.ndarray], breakpoints: np.ndarray) -> np.ndarray:
    """Chord interpolant of x² through the breakpoints (clamped outside)."""
    breakpoints = np.asarray(breakpoints, dtype=float)
    return np.interp(x, breakpoints, breakpoints**2)


def add_secant_epigraph(
    model: MipModel, expr: ExprLike, breakpoints: np.ndarray, name: str
) -> Variable:
    """
    Add e >= every secant chord of x² through ``breakpoints`` evaluated at ``expr``.

    Returns the epigraph variable e; the caller decides how e enters the objective.
    """
    breakpoints = np.asarray(breakpoints, dtype=float)
    top = float(np.max(breakpoints**2))
    if breakpoints.size == 1:
        return model.add_var(name, lb=top, ub=top)
    e = model.add_var(name, lb=0.0, ub=top)
    for k in range(breakpoints.size - 1):
        left, right = breakpoints[k], breakpoints[k + 1]
        # chord through (left, left²) and (right, right²)
        slope = left + right
        intercept = -left * right
        model.add_constraint(
            LinExpr.of(e) - slope * LinExpr.of(expr),
            Sense.GE,
            intercept,
            name=f"{name}_chord{k}",
        )
    return e


def add_epigraph_quadratic(
    model: MipModel, var: Variable, segments: int = 16
) -> Variable:
    """
    Over-approximate var² in the objective by a secant PWL epigraph.

    Args:
        model: Model receiving the epigraph rows.
        var: Variable with finite bounds.
        segments: Number of uniform chords over [lb, ub] (0 is added as an extra
            breakpoint when it falls strictly inside and is not already one).

    Returns:
        The epigraph variable e (objective coefficient 1).

    Raises:
        MipModelError: If var is unbounded or segments < 2.
    """
    if segments < 2:
        raise MipModelError("An objective epigraph needs at least 2 segments")
    if not (math.isfinite(var.lb) and math.isfinite(var.ub)):
        raise MipModelError(f"Cannot build an epigraph on unbounded variable '{var.name}'")
    breakpoints = secant_breakpoints(var.lb, var.ub, segments, anchor=0.0)
    e = add_secant_epigraph(model, var, breakpoints, f"{var.name}_sq")
    model.add_objective_term(e)
    return e


def breakpoints_for(var: Variable, segments: int) -> np.ndarray:
    """Breakpoints ``add_epigraph_quadratic`` uses for ``var``."""
    return secant_breakpoints(var.lb, var.ub, segments, anchor=0.0)


def bounds_of(model: MipModel) -> Tuple[np.ndarray, np.ndarray]:
    return (
        np.array([v.lb for v in model.variables]),
        np.array([v.ub for v in model.variables]),
    )
