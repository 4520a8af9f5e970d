"""
Radial feeder and load-profile parsing.

Feeder documents are JSON. Everything is converted to per-unit at parse time and
nodes are re-indexed into a canonical topological order: the substation is node
0, nodes are visited breadth-first with children in ascending original id, and
branch k (0-based) is the unique branch entering canonical node k + 1.
"""

import json
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import IO, Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

logger = logging.getLogger(__name__)

DEFAULT_TAP_STEP = 0.00625
DEFAULT_TAP_MIN = -16
DEFAULT_TAP_MAX = 16
DEFAULT_HARD_LIMITS = (0.95, 1.05)
DEFAULT_TIGHT_LIMITS = (0.98, 1.02)
DEFAULT_ALPHA = 0.001

FeederSource = Union[str, Path, Mapping[str, Any]]
ProfileSource = Union[str, Path, IO[str], pd.DataFrame]


class FeederValidationError(Exception):
    """Raised when a feeder document is malformed or violates a network invariant."""

    pass


class ProfileValidationError(Exception):
    """Raised when a load profile does not match its feeder or holds bad values."""

    pass


class NetworkClass(str, Enum):
    """Sign class of the branch reactances."""

    INDUCTIVE = "inductive"
    CAPACITIVE = "capacitive"
    RESISTIVE = "resistive"


# --- Document models ---


class NodeDocument(BaseModel):
    """Per-node limits, given as voltage magnitudes in per-unit."""

    id: int
    v_min: Optional[float] = None
    v_max: Optional[float] = None
    v_lo: Optional[float] = None
    v_hi: Optional[float] = None
    alpha: Optional[float] = Field(None, ge=0.0)


class BranchDocument(BaseModel):
    """A series branch, impedance either in per-unit or in ohms."""

    model_config = ConfigDict(populate_by_name=True)

    id: Optional[int] = None
    from_node: int = Field(..., alias="from")
    to_node: int = Field(..., alias="to")
    r_pu: Optional[float] = None
    x_pu: Optional[float] = None
    r_ohm: Optional[float] = None
    x_ohm: Optional[float] = None

    @model_validator(mode="after")
    def _check_impedance(self) -> "BranchDocument":
        has_pu = self.r_pu is not None and self.x_pu is not None
        has_ohm = self.r_ohm is not None and self.x_ohm is not None
        if not (has_pu or has_ohm):
            raise ValueError(
                f"branch {self.from_node}-{self.to_node} needs r_pu/x_pu or r_ohm/x_ohm"
            )
        return self


class DerDocument(BaseModel):
    """Reactive power range of a controllable DER."""

    node: int
    q_min_pu: Optional[float] = None
    q_max_pu: Optional[float] = None
    q_min_kvar: Optional[float] = None
    q_max_kvar: Optional[float] = None


class OltcDocument(BaseModel):
    """Tap changer on a branch."""

    branch: int
    tau: float = DEFAULT_TAP_STEP
    n_min: int = DEFAULT_TAP_MIN
    n_max: int = DEFAULT_TAP_MAX


class CapDocument(BaseModel):
    """Switchable capacitor bank made of discrete units."""

    node: int
    y_c_pu: Optional[float] = None
    unit_kvar: Optional[float] = None
    n_min: int = Field(0, ge=0)
    n_max: int = Field(10, ge=1)
    steps: Optional[List[float]] = None


class FeederDocument(BaseModel):
    """Root model of a feeder JSON document."""

    name: Optional[str] = None
    description: Optional[str] = None
    base_mva: float = Field(..., gt=0.0)
    base_kv: float = Field(..., gt=0.0)
    v0_pu: float = Field(..., gt=0.0)
    substation: Optional[int] = None
    nodes: List[NodeDocument] = Field(default_factory=list)
    branches: List[BranchDocument] = Field(..., min_length=1)
    ders: List[DerDocument] = Field(default_factory=list)
    oltcs: List[OltcDocument] = Field(default_factory=list)
    caps: List[CapDocument] = Field(default_factory=list)


# --- Domain types ---


@dataclass(frozen=True)
class Branch:
    """A branch in canonical indices; ``index`` equals ``to_node - 1``."""

    index: int
    from_node: int
    to_node: int
    r: float
    x: float
    original_id: int


@dataclass(frozen=True)
class DerUnit:
    node: int
    q_min: float
    q_max: float


@dataclass(frozen=True)
class OltcUnit:
    """Tap changer on ``branch`` with ratio t = 1 + tau * n."""

    branch: int
    tau: float
    n_min: int
    n_max: int

    @property
    def positions(self) -> range:
        return range(self.n_min, self.n_max + 1)

    def ratio(self, n_tr: int) -> float:
        return 1.0 + self.tau * n_tr

    def clip(self, n_tr: int) -> int:
        return int(min(max(n_tr, self.n_min), self.n_max))


@dataclass(frozen=True)
class CapBank:
    """Capacitor bank; ``steps`` holds the per-unit admittance of each unit."""

    node: int
    y_c: float
    n_min: int
    n_max: int
    steps: Tuple[float, ...]

    def susceptance(self, n_cp: int) -> float:
        """Total admittance with the first ``n_cp`` units switched in."""
        return float(sum(self.steps[:n_cp]))


@dataclass(frozen=True, eq=False)
class Feeder:
    """
    Immutable radial feeder in per-unit and canonical order.

    Node-indexed arrays (``v_min``, ``v_max``, ``v_lo``, ``v_hi``, ``alpha``) have
    length n; entry k - 1 belongs to canonical node k. Voltages are squared
    magnitudes (pu²).
    """

    name: str
    base_mva: float
    base_kv: float
    v0: float
    node_ids: Tuple[int, ...]
    branches: Tuple[Branch, ...]
    v_min: np.ndarray
    v_max: np.ndarray
    v_lo: np.ndarray
    v_hi: np.ndarray
    alpha: np.ndarray
    ders: Tuple[DerUnit, ...] = ()
    oltcs: Tuple[OltcUnit, ...] = ()
    caps: Tuple[CapBank, ...] = ()
    classification: NetworkClass = NetworkClass.INDUCTIVE

    @property
    def node_count(self) -> int:
        return len(self.branches)

    @property
    def r(self) -> np.ndarray:
        return np.array([b.r for b in self.branches], dtype=float)

    @property
    def x(self) -> np.ndarray:
        return np.array([b.x for b in self.branches], dtype=float)

    @property
    def parent(self) -> np.ndarray:
        """Parent of every canonical node; the substation maps to -1."""
        parents = np.full(self.node_count + 1, -1, dtype=int)
        for b in self.branches:
            parents[b.to_node] = b.from_node
        return parents

    def parent_of(self, node: int) -> int:
        return self.branches[node - 1].from_node

    def children_of(self, node: int) -> List[int]:
        return [b.to_node for b in self.branches if b.from_node == node]

    def path_to_root(self, node: int) -> List[int]:
        """Nodes from ``node`` up to (excluding) the substation."""
        path = []
        while node != 0:
            path.append(node)
            node = self.parent_of(node)
        return path

    def original_id(self, node: int) -> int:
        return self.node_ids[node]

    def canonical_index(self, original_id: int) -> int:
        try:
            return self.node_ids.index(original_id)
        except ValueError:
            raise FeederValidationError(f"Unknown node id {original_id}") from None

    def branch_by_original_id(self, original_id: int) -> Branch:
        for b in self.branches:
            if b.original_id == original_id:
                return b
        raise FeederValidationError(f"Unknown branch id {original_id}")

    def der_at(self, node: int) -> Optional[DerUnit]:
        return next((d for d in self.ders if d.node == node), None)

    def cap_at(self, node: int) -> Optional[CapBank]:
        return next((c for c in self.caps if c.node == node), None)

    def oltc_on(self, branch: int) -> Optional[OltcUnit]:
        return next((o for o in self.oltcs if o.branch == branch), None)

    def without_caps(self) -> "Feeder":
        return replace(self, caps=())

    def with_caps_limited(self, count: int) -> "Feeder":
        """Keep only the first ``count`` capacitor banks (canonical order)."""
        if count < 0 or count > len(self.caps):
            raise ValueError(
                f"Cap count {count} outside 0..{len(self.caps)} available sites"
            )
        return replace(self, caps=self.caps[:count])

    def with_alpha(self, alpha: float) -> "Feeder":
        return replace(self, alpha=_frozen(np.full(self.node_count, float(alpha))))

    def with_tight_bounds(
        self, v_lo: Optional[float] = None, v_hi: Optional[float] = None
    ) -> "Feeder":
        """Replace the tight bounds (given as squared voltages) on every node."""
        lo = self.v_lo if v_lo is None else np.full(self.node_count, float(v_lo))
        hi = self.v_hi if v_hi is None else np.full(self.node_count, float(v_hi))
        _check_limit_order(self.v_min, lo, hi, self.v_max)
        return replace(self, v_lo=_frozen(lo), v_hi=_frozen(hi))


@dataclass(frozen=True, eq=False)
class LoadProfile:
    """Per-period active/reactive net demand, arrays of shape horizon x n."""

    P_L: np.ndarray
    Q_L: np.ndarray
    labels: Tuple[Any, ...] = ()

    @property
    def horizon(self) -> int:
        return int(self.P_L.shape[0])

    def period(self, t: int) -> Tuple[np.ndarray, np.ndarray]:
        if not 0 <= t < self.horizon:
            raise ProfileValidationError(
                f"Period {t} outside profile horizon 0..{self.horizon - 1}"
            )
        return self.P_L[t].copy(), self.Q_L[t].copy()

    def scaled(self, factor: float) -> "LoadProfile":
        return LoadProfile(
            P_L=_frozen(self.P_L * factor),
            Q_L=_frozen(self.Q_L * factor),
            labels=self.labels,
        )

    def total_load(self) -> np.ndarray:
        return self.P_L.sum(axis=1)

    @classmethod
    def from_arrays(
        cls, feeder: Feeder, P_L: Any, Q_L: Any, labels: Sequence[Any] = ()
    ) -> "LoadProfile":
        """Build a profile from arrays, accepting a single period as a vector."""
        p = np.atleast_2d(np.asarray(P_L, dtype=float))
        q = np.atleast_2d(np.asarray(Q_L, dtype=float))
        n = feeder.node_count
        if p.shape != q.shape or p.shape[1] != n:
            raise ProfileValidationError(
                f"Profile shape mismatch: P_L {p.shape}, Q_L {q.shape}, feeder has {n} nodes"
            )
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise ProfileValidationError("Profile contains NaN or infinite values")
        labels = tuple(labels) if labels else tuple(range(p.shape[0]))
        return cls(P_L=_frozen(p), Q_L=_frozen(q), labels=labels)


# --- Parsing ---


def parse_feeder(source: FeederSource) -> Feeder:
    """
    Parse and validate a feeder document.

    Args:
        source: Path to a JSON file, a JSON string, or an already decoded mapping.

    Returns:
        A validated Feeder in per-unit and canonical order.

    Raises:
        FeederValidationError: If the document is malformed or the network is not
            a valid radial tree with consistent limits and devices.
    """
    data = _load_document(source)
    try:
        doc = FeederDocument.model_validate(data)
    except ValidationError as e:
        raise FeederValidationError(f"Malformed feeder document: {e}") from e

    z_base = doc.base_kv**2 / doc.base_mva
    kvar_base = 1000.0 * doc.base_mva

    graph, branch_docs = _build_graph(doc)
    root = _find_substation(doc, graph)
    tree_edges = list(nx.bfs_edges(graph, root, sort_neighbors=sorted))
    order = [root] + [v for _, v in tree_edges]
    parent_of = {v: u for u, v in tree_edges}
    canonical = {node_id: k for k, node_id in enumerate(order)}

    branches: List[Branch] = []
    for k, node_id in enumerate(order[1:], start=1):
        parent_id = parent_of[node_id]
        bdoc = branch_docs[frozenset((parent_id, node_id))]
        if bdoc.from_node != parent_id:
            logger.debug(
                f"Branch {bdoc.id} given as {bdoc.from_node}->{bdoc.to_node}, "
                f"oriented away from the substation"
            )
        r = bdoc.r_pu if bdoc.r_pu is not None else bdoc.r_ohm / z_base  # type: ignore[operator]
        x = bdoc.x_pu if bdoc.x_pu is not None else bdoc.x_ohm / z_base  # type: ignore[operator]
        if not (math.isfinite(r) and math.isfinite(x)):
            raise FeederValidationError(f"Branch {bdoc.id} has a non-finite impedance")
        if r < 0:
            raise FeederValidationError(f"Branch {bdoc.id} has negative resistance {r}")
        branches.append(
            Branch(
                index=k - 1,
                from_node=canonical[parent_id],
                to_node=k,
                r=float(r),
                x=float(x),
                original_id=int(bdoc.id),  # type: ignore[arg-type]
            )
        )

    classification = _classify(np.array([b.x for b in branches]))
    n = len(branches)
    limits = _node_limits(doc, canonical, n)
    feeder = Feeder(
        name=doc.name or "feeder",
        base_mva=doc.base_mva,
        base_kv=doc.base_kv,
        v0=doc.v0_pu**2,
        node_ids=tuple(order),
        branches=tuple(branches),
        v_min=limits["v_min"],
        v_max=limits["v_max"],
        v_lo=limits["v_lo"],
        v_hi=limits["v_hi"],
        alpha=limits["alpha"],
        ders=_parse_ders(doc, canonical, kvar_base),
        oltcs=_parse_oltcs(doc, branches),
        caps=_parse_caps(doc, canonical, kvar_base),
        classification=classification,
    )
    logger.info(
        f"Parsed feeder '{feeder.name}': {n} branches, {len(feeder.ders)} DERs, "
        f"{len(feeder.oltcs)} OLTCs, {len(feeder.caps)} cap banks ({classification.value})"
    )
    return feeder


def parse_profile(source: ProfileSource, feeder: Feeder) -> LoadProfile:
    """
    Parse a load profile CSV with header ``t,PL_<id>..,QL_<id>..``.

    Columns are keyed by original node id; every non-substation node needs both
    a PL and a QL column.

    Raises:
        ProfileValidationError: On shape mismatch, missing columns or bad cells.
    """
    if isinstance(source, pd.DataFrame):
        frame = source.copy()
    else:
        try:
            frame = pd.read_csv(source)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise ProfileValidationError(f"Cannot read profile: {e}") from e

    frame.columns = [str(c).strip() for c in frame.columns]
    if "t" not in frame.columns:
        raise ProfileValidationError("Profile is missing the 't' column")
    node_ids = feeder.node_ids[1:]
    p_cols = [f"PL_{i}" for i in node_ids]
    q_cols = [f"QL_{i}" for i in node_ids]
    expected = set(p_cols) | set(q_cols)
    present = set(frame.columns) - {"t"}
    if present != expected:
        missing = sorted(expected - present)
        extra = sorted(present - expected)
        raise ProfileValidationError(
            f"Profile shape mismatch for {feeder.node_count} nodes: "
            f"missing {missing[:5]}, unexpected {extra[:5]}"
        )
    if frame.empty:
        raise ProfileValidationError("Profile has no periods")

    values = frame[p_cols + q_cols].apply(pd.to_numeric, errors="coerce")
    if values.isna().to_numpy().any():
        bad = values.columns[values.isna().any()].tolist()
        raise ProfileValidationError(f"Non-numeric or missing cells in columns {bad}")
    data = values.to_numpy(dtype=float)
    n = feeder.node_count
    return LoadProfile.from_arrays(
        feeder, data[:, :n], data[:, n:], labels=frame["t"].tolist()
    )


def _load_document(source: FeederSource) -> Mapping[str, Any]:
    if isinstance(source, Mapping):
        return source
    text: str
    path = Path(source)
    if isinstance(source, Path) or (
        not str(source).lstrip().startswith("{") and path.exists()
    ):
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise FeederValidationError(f"Cannot read feeder file {path}: {e}") from e
    else:
        text = str(source)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise FeederValidationError(f"Malformed feeder document: {e}") from e
    if not isinstance(data, dict):
        raise FeederValidationError("Malformed feeder document: top level must be an object")
    return data


def _build_graph(doc: FeederDocument) -> Tuple[nx.Graph, Dict[frozenset, BranchDocument]]:
    graph = nx.Graph()
    branch_docs: Dict[frozenset, BranchDocument] = {}
    seen_ids = set()
    for position, bdoc in enumerate(doc.branches):
        if bdoc.id is None:
            bdoc = bdoc.model_copy(update={"id": position})
        if bdoc.id in seen_ids:
            raise FeederValidationError(f"Duplicate branch id {bdoc.id}")
        seen_ids.add(bdoc.id)
        if bdoc.from_node == bdoc.to_node:
            raise FeederValidationError(f"Branch {bdoc.id} is a self-loop: cycle detected")
        key = frozenset((bdoc.from_node, bdoc.to_node))
        if key in branch_docs:
            raise FeederValidationError(
                f"Parallel branches between {bdoc.from_node} and {bdoc.to_node}: cycle detected"
            )
        branch_docs[key] = bdoc
        graph.add_edge(bdoc.from_node, bdoc.to_node)
    for ndoc in doc.nodes:
        graph.add_node(ndoc.id)

    cycles = nx.cycle_basis(graph)
    if cycles:
        raise FeederValidationError(f"Branches contain a cycle: cycle detected at {cycles[0]}")
    if not nx.is_connected(graph):
        components = sorted(nx.connected_components(graph), key=len)
        raise FeederValidationError(
            f"Network is not connected: disconnected node(s) {sorted(components[0])}"
        )
    return graph, branch_docs


def _find_substation(doc: FeederDocument, graph: nx.Graph) -> int:
    if doc.substation is not None:
        if doc.substation not in graph:
            raise FeederValidationError(f"Substation {doc.substation} is not in the network")
        return doc.substation
    receiving = {b.to_node for b in doc.branches}
    roots = sorted(n for n in graph.nodes if n not in receiving)
    if len(roots) != 1:
        raise FeederValidationError(
            f"Cannot infer the substation from branch directions (candidates {roots}); "
            f"set 'substation' explicitly"
        )
    return roots[0]


def _classify(x: np.ndarray) -> NetworkClass:
    if np.all(x == 0.0):
        return NetworkClass.RESISTIVE
    if np.all(x >= 0.0):
        return NetworkClass.INDUCTIVE
    if np.all(x <= 0.0):
        return NetworkClass.CAPACITIVE
    raise FeederValidationError(
        "Branch reactances have mixed signs; only inductive, capacitive or "
        "resistive networks are supported"
    )


def _node_limits(
    doc: FeederDocument, canonical: Dict[int, int], n: int
) -> Dict[str, np.ndarray]:
    v_min = np.full(n, DEFAULT_HARD_LIMITS[0])
    v_max = np.full(n, DEFAULT_HARD_LIMITS[1])
    v_lo = np.full(n, DEFAULT_TIGHT_LIMITS[0])
    v_hi = np.full(n, DEFAULT_TIGHT_LIMITS[1])
    alpha = np.full(n, DEFAULT_ALPHA)
    for ndoc in doc.nodes:
        k = canonical[ndoc.id]
        if k == 0:
            continue
        for target, value in (
            (v_min, ndoc.v_min),
            (v_max, ndoc.v_max),
            (v_lo, ndoc.v_lo),
            (v_hi, ndoc.v_hi),
            (alpha, ndoc.alpha),
        ):
            if value is not None:
                target[k - 1] = value
    v_min, v_max, v_lo, v_hi = (a**2 for a in (v_min, v_max, v_lo, v_hi))
    _check_limit_order(v_min, v_lo, v_hi, v_max)
    return {
        "v_min": _frozen(v_min),
        "v_max": _frozen(v_max),
        "v_lo": _frozen(v_lo),
        "v_hi": _frozen(v_hi),
        "alpha": _frozen(alpha),
    }


def _check_limit_order(
    v_min: np.ndarray, v_lo: np.ndarray, v_hi: np.ndarray, v_max: np.ndarray
) -> None:
    if np.any(v_min <= 0.0):
        raise FeederValidationError("Hard lower voltage limits must be positive")
    for name, lower, upper in (
        ("v_min > v_lo", v_min, v_lo),
        ("v_lo > v_hi", v_lo, v_hi),
        ("v_hi > v_max", v_hi, v_max),
    ):
        bad = np.nonzero(lower > upper)[0]
        if bad.size:
            raise FeederValidationError(
                f"Voltage limit inversion ({name}) at canonical node(s) {(bad + 1).tolist()}"
            )


def _device_node(node_id: int, canonical: Dict[int, int], kind: str) -> int:
    if node_id not in canonical:
        raise FeederValidationError(f"{kind} placed at unknown node {node_id}")
    k = canonical[node_id]
    if k == 0:
        raise FeederValidationError(f"{kind} cannot be placed at the substation")
    return k


def _parse_ders(
    doc: FeederDocument, canonical: Dict[int, int], kvar_base: float
) -> Tuple[DerUnit, ...]:
    ders = []
    for ddoc in doc.ders:
        node = _device_node(ddoc.node, canonical, "DER")
        if ddoc.q_min_pu is not None and ddoc.q_max_pu is not None:
            q_min, q_max = ddoc.q_min_pu, ddoc.q_max_pu
        elif ddoc.q_min_kvar is not None and ddoc.q_max_kvar is not None:
            q_min, q_max = ddoc.q_min_kvar / kvar_base, ddoc.q_max_kvar / kvar_base
        else:
            raise FeederValidationError(f"DER at node {ddoc.node} has no reactive range")
        if q_min > q_max:
            raise FeederValidationError(f"DER at node {ddoc.node} has q_min > q_max")
        ders.append(DerUnit(node=node, q_min=float(q_min), q_max=float(q_max)))
    _check_unique([d.node for d in ders], "DER")
    return tuple(sorted(ders, key=lambda d: d.node))


def _parse_oltcs(doc: FeederDocument, branches: List[Branch]) -> Tuple[OltcUnit, ...]:
    by_id = {b.original_id: b for b in branches}
    oltcs = []
    for odoc in doc.oltcs:
        if odoc.branch not in by_id:
            raise FeederValidationError(f"OLTC placed on unknown branch {odoc.branch}")
        if odoc.n_min >= odoc.n_max:
            raise FeederValidationError(f"OLTC on branch {odoc.branch} has an empty tap range")
        if not math.isfinite(odoc.tau):
            raise FeederValidationError(f"OLTC on branch {odoc.branch} has a non-finite step")
        unit = OltcUnit(
            branch=by_id[odoc.branch].index,
            tau=odoc.tau,
            n_min=odoc.n_min,
            n_max=odoc.n_max,
        )
        if min(unit.ratio(unit.n_min), unit.ratio(unit.n_max)) <= 0.0:
            raise FeederValidationError(
                f"OLTC on branch {odoc.branch} reaches a non-positive tap ratio"
            )
        oltcs.append(unit)
    _check_unique([o.branch for o in oltcs], "OLTC")
    return tuple(sorted(oltcs, key=lambda o: o.branch))


def _parse_caps(
    doc: FeederDocument, canonical: Dict[int, int], kvar_base: float
) -> Tuple[CapBank, ...]:
    caps = []
    for cdoc in doc.caps:
        node = _device_node(cdoc.node, canonical, "Capacitor bank")
        if cdoc.y_c_pu is not None:
            y_c = cdoc.y_c_pu
        elif cdoc.unit_kvar is not None:
            y_c = cdoc.unit_kvar / kvar_base
        else:
            raise FeederValidationError(f"Capacitor bank at node {cdoc.node} has no unit size")
        if cdoc.n_min > cdoc.n_max:
            raise FeederValidationError(f"Capacitor bank at node {cdoc.node} has n_min > n_max")
        steps = tuple(cdoc.steps) if cdoc.steps is not None else (y_c,) * cdoc.n_max
        if len(steps) != cdoc.n_max:
            raise FeederValidationError(
                f"Capacitor bank at node {cdoc.node} lists {len(steps)} steps for {cdoc.n_max} units"
            )
        caps.append(
            CapBank(
                node=node,
                y_c=float(y_c),
                n_min=cdoc.n_min,
                n_max=cdoc.n_max,
                steps=tuple(float(s) for s in steps),
            )
        )
    _check_unique([c.node for c in caps], "Capacitor bank")
    return tuple(sorted(caps, key=lambda c: c.node))


def _check_unique(keys: List[int], kind: str) -> None:
    if len(keys) != len(set(keys)):
        raise FeederValidationError(f"More than one {kind} at the same location")


def _frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=float)
    out.setflags(write=False)
    return out
