"""
Helper functions for the vpo commands: report models, JSON and CSV output, and
readable summaries for the log.
"""

import json
import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from lib.distflow.feeder import Feeder
from lib.distflow.matrices import DistFlowMatrices, OperatingPoint
from lib.distflow.verification import VerificationReport
from lib.vpo.algorithm import ScaleResult, ScheduleResult, SweepResult, VpoRun

# Keys whose values differ between otherwise identical runs
TIMING_KEYS = ("wall_time_s",)


class ErrorReport(BaseModel):
    """Structured error printed when a command fails."""

    error: str
    message: str


class CommandSummary(BaseModel):
    """Machine-readable summary written by every command."""

    command: str
    feeder: str
    outputs: List[str] = Field(default_factory=list)
    result: Dict[str, Any] = Field(default_factory=dict)


def to_jsonable(value: Any) -> Any:
    """
    Convert numpy values, paths and enums to plain JSON types.

    Non-finite floats become None so the output stays valid JSON.
    """
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        number = float(value)
        return number if math.isfinite(number) else None
    if isinstance(value, Path):
        return str(value)
    return value


def dumps_json(data: Any) -> str:
    """Deterministic JSON text (sorted keys, two-space indent)."""
    return json.dumps(to_jsonable(data), indent=2, sort_keys=True)


def write_json(path: Path, data: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(data) + "\n", encoding="utf-8")
    return path


def write_frame(path: Path, frame: pd.DataFrame) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.12g")
    return path


def strip_timing(data: Any) -> Any:
    """Drop timing fields recursively, for comparing two runs."""
    if isinstance(data, dict):
        return {k: strip_timing(v) for k, v in data.items() if k not in TIMING_KEYS}
    if isinstance(data, list):
        return [strip_timing(v) for v in data]
    return data


# --- tables ---


def matrix_frames(feeder: Feeder, m: DistFlowMatrices) -> Dict[str, pd.DataFrame]:
    """
    One labelled frame per operator.

    Rows and columns of the n x n operators carry original node ids; ``B`` has
    one row per node including the substation and one column per branch.
    """
    load_ids = [str(i) for i in feeder.node_ids[1:]]
    branch_ids = [str(b.original_id) for b in feeder.branches]
    frames: Dict[str, pd.DataFrame] = {}
    for name, matrix in m.as_dict().items():
        if name == "B":
            index = [str(i) for i in feeder.node_ids]
            frame = pd.DataFrame(matrix, index=index, columns=branch_ids)
        else:
            frame = pd.DataFrame(matrix, index=load_ids, columns=load_ids)
        frames[name] = frame.reset_index(names="node")
    return frames


def operating_point_frame(feeder: Feeder, op: OperatingPoint) -> pd.DataFrame:
    """Per-node injections, flows, voltages and currents of an oracle point."""
    return pd.DataFrame(
        {
            "node": list(feeder.node_ids[1:]),
            "parent": [feeder.original_id(b.from_node) for b in feeder.branches],
            "p": op.p,
            "q": op.q,
            "q_cap": op.cap_injection(),
            "P": op.P,
            "Q": op.Q,
            "V": op.V,
            "V_pu": np.sqrt(op.V),
            "l": op.l,
            "tap_gain": op.gain(),
        }
    )


def voltages_frame(run: VpoRun) -> pd.DataFrame:
    """Oracle voltage and P3 envelopes per node for every iterate."""
    feeder = run.feeder
    rows: List[Dict[str, Any]] = []
    for node, v in zip(feeder.node_ids[1:], run.initial_op.V):
        rows.append(
            {
                "iteration": 0,
                "node": node,
                "V_oracle": v,
                "V_plus": np.nan,
                "V_minus": np.nan,
                "accepted": True,
            }
        )
    for it in run.iterates:
        for k, node in enumerate(feeder.node_ids[1:]):
            rows.append(
                {
                    "iteration": it.iteration,
                    "node": node,
                    "V_oracle": it.op.V[k],
                    "V_plus": it.p3.v_plus[k],
                    "V_minus": it.p3.v_minus[k],
                    "accepted": it.accepted,
                }
            )
    return pd.DataFrame(rows)


def iterations_frame(run: VpoRun) -> pd.DataFrame:
    rows = [it.to_dict(run.feeder) for it in run.iterates]
    frame = pd.DataFrame(
        [
            {
                "iteration": r["iteration"],
                "objective": r["objective"],
                "error": r["error"],
                "accepted": r["accepted"],
                "der_total": r["der_total"],
                "cap_total": r["cap_total"],
                "slack_total": r["slack_total"],
                "sandwich_violation": r["sandwich_violation"],
                "nodes": r["mip"]["node_count"],
            }
            for r in rows
        ]
    )
    return frame


# --- summaries for the log ---


def format_run_summary(run: VpoRun) -> str:
    """
    Format a run into a readable multi-line summary.

    Args:
        run: The run history

    Returns:
        Formatted string with iterations, final setting and totals
    """
    output = f"Run on '{run.feeder.name}' ({run.stop_reason}):\n"
    output += f"- Initial objective: {run.initial_objective:.6e}\n"
    for it in run.iterates:
        flag = "" if it.accepted else f" [rejected: {it.rejection}]"
        output += (
            f"- Iteration {it.iteration}: f={it.objective:.6e}, "
            f"error={it.error:.3e}{flag}\n"
        )
    setting = run.setting.to_dict(run.feeder)
    if setting["n_tr"]:
        output += f"- Taps: {setting['n_tr']}\n"
    if setting["n_cp"]:
        output += f"- Cap units: {setting['n_cp']}\n"
    output += f"- DER total: {run.der_total:.6f} pu, caps: {run.cap_total:.6f} pu\n"
    output += f"- Tight-bound violation: {run.slack_total:.6e} pu²\n"
    return output


def format_schedule_summary(schedule: ScheduleResult) -> str:
    output = f"Schedule of {len(schedule.periods)} periods:\n"
    for period in schedule.periods:
        if period.run is None:
            output += f"- {period.label}: FAILED ({period.error})\n"
            continue
        output += (
            f"- {period.label}: f={period.run.objective:.4e}, "
            f"caps={period.run.cap_total:.4f}, DER={period.run.der_abs_total:.4f}\n"
        )
    return output


def format_sweep_summary(sweep: SweepResult) -> str:
    output = f"Sweep over {sweep.parameter}:\n"
    for point in sweep.points:
        if point.error:
            output += f"- {point.value:g}: FAILED ({point.error})\n"
        else:
            output += (
                f"- {point.value:g}: |q_g|={point.der_abs_total:.4f}, "
                f"slack={point.slack_total:.4e}\n"
            )
    for name, holds in sweep.diagnostics().items():
        output += f"- {name}: {holds}\n"
    return output


def format_scale_summary(scale: ScaleResult) -> str:
    output = "Scaling study:\n"
    for row in scale.rows:
        output += (
            f"- {row.cap_count} caps: {row.binaries} binaries, {row.nodes} nodes, "
            f"{row.wall_time_s:.2f}s\n"
        )
    return output


def format_verification(report: VerificationReport) -> str:
    sandwich = report.sandwich
    output = f"Verification of '{report.feeder}': {'PASS' if report.passed else 'FAIL'}\n"
    output += f"- H certificate: {report.certificate}\n"
    output += (
        f"- Sandwich: {sandwich.checked} checked, {sandwich.skipped} skipped of "
        f"{sandwich.hard_feasible} hard-feasible samples, "
        f"max violation {sandwich.max_violation:.3e}\n"
    )
    output += f"- Underbound: max violation {report.underbound.max_violation:.3e}\n"
    output += f"- Quad bound: max excess {report.quad_bound.max_excess:.3e}\n"
    output += (
        f"- Spectrum: |λ0| <= {report.spectral.max_abs_zero_eigenvalue:.3e}, "
        f"min λ+ {report.spectral.min_positive_eigenvalue:.3e}\n"
    )
    if report.tracking is not None:
        output += (
            f"- Tracking: max error {report.tracking.max_error_in_window:.3%} "
            f"within ±100 kVAr\n"
        )
    return output


def parse_assignments(text: Optional[str], kind: str) -> Dict[int, float]:
    """
    Parse ``id=value,id=value`` into a dict keyed by original id.

    Raises:
        ValueError: On a malformed item.
    """
    if not text:
        return {}
    result: Dict[int, float] = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"Malformed {kind} assignment '{item}', expected id=value")
        try:
            result[int(key)] = float(value)
        except ValueError:
            raise ValueError(f"Malformed {kind} assignment '{item}'") from None
    return result


def parse_range(text: str) -> List[int]:
    """Parse ``1..6`` or ``1,3,5`` into a list of integers."""
    text = text.strip()
    if ".." in text:
        start, _, stop = text.partition("..")
        low, high = int(start), int(stop)
        if high < low:
            raise ValueError(f"Empty range '{text}'")
        return list(range(low, high + 1))
    return [int(v) for v in text.split(",") if v.strip()]


def parse_floats(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v.strip()]
