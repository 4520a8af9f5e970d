"""
One function per subcommand. Each reads its inputs, runs the library, writes
its files under the output directory and returns the summary.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from lib.distflow.feeder import Feeder, LoadProfile, parse_feeder, parse_profile
from lib.distflow.loadflow import (
    DeviceSetting,
    feasibility_report,
    solve_loadflow,
)
from lib.distflow.matrices import build_matrices, certify_h_nonneg, residuals
from lib.distflow.verification import run_verification
from lib.vpo.algorithm import (
    VpoOptions,
    VpoSolver,
    scale_study,
    schedule_horizon,
    sweep_alpha,
    sweep_vlow,
)
from vpo_cli.config import RunConfig
from vpo_cli.helpers import (
    CommandSummary,
    format_run_summary,
    format_scale_summary,
    format_schedule_summary,
    format_sweep_summary,
    format_verification,
    iterations_frame,
    matrix_frames,
    operating_point_frame,
    voltages_frame,
    write_frame,
    write_json,
)

logger = logging.getLogger(__name__)


class CommandError(Exception):
    """Raised when a command cannot run with the given combination of inputs."""

    pass


def load_feeder(config: RunConfig) -> Feeder:
    feeder = parse_feeder(config.feeder)
    if config.no_caps:
        feeder = feeder.without_caps()
    logger.info(
        f"Loaded feeder '{feeder.name}': {feeder.node_count} nodes, "
        f"{len(feeder.oltcs)} OLTCs, {len(feeder.caps)} cap banks, "
        f"{len(feeder.ders)} DERs"
    )
    return feeder


def load_profile(config: RunConfig, feeder: Feeder) -> LoadProfile:
    if config.profile is None:
        raise CommandError(f"'{config.subcommand}' needs --profile")
    profile = parse_profile(config.profile, feeder)
    logger.info(f"Loaded profile {config.profile} with {profile.horizon} periods")
    return profile


def load_period(config: RunConfig, feeder: Feeder) -> Tuple[np.ndarray, np.ndarray]:
    """Net demand of the selected period; zero demand without a profile."""
    if config.profile is None:
        zeros = np.zeros(feeder.node_count)
        return zeros, zeros.copy()
    return load_profile(config, feeder).period(config.period)


def vpo_options(config: RunConfig) -> VpoOptions:
    return VpoOptions(
        epsilon=config.epsilon,
        max_iters=config.max_iters,
        gap_limit=config.gap,
        node_limit=config.node_limit,
        objective_segments=config.segments,
        quad_mode=config.quad_mode,
        envelope_segments=config.envelope_segments,
        loss_allowance=config.loss_allowance,
        dump_lp_dir=config.out if config.dump_lp else None,
    )


def _finish(
    config: RunConfig, feeder: Feeder, result: Dict, outputs: List[Path]
) -> CommandSummary:
    summary_path = config.out / "summary.json"
    summary = CommandSummary(
        command=config.subcommand,
        feeder=feeder.name,
        outputs=[str(p) for p in outputs + [summary_path]],
        result=result,
    )
    write_json(summary_path, summary.model_dump())
    return summary


def run_matrices(config: RunConfig) -> CommandSummary:
    """Build and certify the DistFlow operators; one CSV per operator."""
    feeder = load_feeder(config)
    m = build_matrices(feeder)
    certificate = certify_h_nonneg(m)
    outputs = [
        write_frame(config.out / f"{name}.csv", frame)
        for name, frame in matrix_frames(feeder, m).items()
    ]
    result = {
        "nodes": feeder.node_count,
        "classification": m.classification,
        "certificate": certificate.to_dict(),
    }
    return _finish(config, feeder, result, outputs)


def setting_from_ids(
    feeder: Feeder,
    taps: Dict[int, float],
    caps: Dict[int, float],
    q_g: Dict[int, float],
) -> DeviceSetting:
    """
    Device setting from values keyed by original ids (branch ids for taps).

    Raises:
        CommandError: On a tap or unit count that is not an integer.
    """
    n_tr: Dict[int, int] = {}
    for branch_id, tap in taps.items():
        if tap != int(tap):
            raise CommandError(f"Tap position {tap} on branch {branch_id} is not integral")
        n_tr[feeder.branch_by_original_id(branch_id).index] = int(tap)
    n_cp: Dict[int, int] = {}
    for node_id, units in caps.items():
        if units != int(units):
            raise CommandError(f"Cap unit count {units} at node {node_id} is not integral")
        n_cp[feeder.canonical_index(node_id)] = int(units)
    der = {feeder.canonical_index(node_id): value for node_id, value in q_g.items()}
    setting = DeviceSetting(n_tr=n_tr, n_cp=n_cp, q_g=der).complete(feeder)
    setting.validate(feeder)
    return setting


def run_acpf(
    config: RunConfig,
    taps: Optional[Dict[int, float]] = None,
    caps: Optional[Dict[int, float]] = None,
    q_g: Optional[Dict[int, float]] = None,
) -> CommandSummary:
    """Solve the exact load flow of one period at a fixed device setting."""
    feeder = load_feeder(config)
    P_L, Q_L = load_period(config, feeder)
    setting = setting_from_ids(feeder, taps or {}, caps or {}, q_g or {})
    op = solve_loadflow(feeder, -P_L, -Q_L, setting)
    report = feasibility_report(feeder, op)
    residual = residuals(build_matrices(feeder), op)
    outputs = [
        write_frame(config.out / "operating_point.csv", operating_point_frame(feeder, op))
    ]
    result = {
        "period": config.period,
        "setting": setting.to_dict(feeder),
        "iterations": op.iterations,
        "residuals": residual.to_dict(),
        "feasibility": report.to_dict(),
        "loss_total": float(feeder.r @ op.l),
    }
    return _finish(config, feeder, result, outputs)


def run_solve(config: RunConfig) -> CommandSummary:
    """Run the inner-approximation loop on one period."""
    feeder = load_feeder(config)
    P_L, Q_L = load_period(config, feeder)
    run = VpoSolver(feeder, vpo_options(config)).run(P_L, Q_L)
    logger.info(format_run_summary(run))
    outputs = [
        write_frame(config.out / "voltages_by_iteration.csv", voltages_frame(run)),
        write_frame(config.out / "iterations.csv", iterations_frame(run)),
        write_frame(
            config.out / "operating_point.csv", operating_point_frame(feeder, run.op)
        ),
    ]
    if config.dump_lp:
        outputs.extend(sorted(config.out.glob("p3_iter*.lp")))
    result = run.to_dict()
    result["period"] = config.period
    result["feasibility"] = run.feasibility.to_dict()
    return _finish(config, feeder, result, outputs)


def run_schedule(
    config: RunConfig, compare_caps: bool = False, max_workers: Optional[int] = None
) -> CommandSummary:
    """Solve every period of the profile independently."""
    feeder = load_feeder(config)
    profile = load_profile(config, feeder)
    schedule = schedule_horizon(
        feeder, profile, vpo_options(config), compare_caps, max_workers
    )
    logger.info(format_schedule_summary(schedule))
    frame = schedule.to_frame()
    outputs = [write_frame(config.out / "schedule.csv", frame)]
    result = {
        "periods": len(schedule.periods),
        "failed": schedule.failed,
        "cap_load_correlation": schedule.cap_load_correlation(),
        "offloading_holds": schedule.offloading_holds(),
        "schedule": frame.to_dict(orient="records"),
    }
    return _finish(config, feeder, result, outputs)


def run_sweep(
    config: RunConfig,
    alphas: Optional[Sequence[float]] = None,
    v_lows: Optional[Sequence[float]] = None,
    max_workers: Optional[int] = None,
) -> CommandSummary:
    """Re-solve one period over a grid of α values and/or lower tight bounds."""
    if not alphas and not v_lows:
        raise CommandError("'sweep' needs --alphas or --vlows")
    feeder = load_feeder(config)
    P_L, Q_L = load_period(config, feeder)
    options = vpo_options(config)
    frames: List[pd.DataFrame] = []
    result: Dict[str, Dict] = {}
    for name, values, sweep_fn in (
        ("alpha", alphas, sweep_alpha),
        ("v_lo", v_lows, sweep_vlow),
    ):
        if not values:
            continue
        sweep = sweep_fn(feeder, P_L, Q_L, values, options, max_workers)
        logger.info(format_sweep_summary(sweep))
        frame = sweep.to_frame()
        frames.append(frame)
        result[name] = {
            "diagnostics": sweep.diagnostics(),
            "points": frame.to_dict(orient="records"),
        }
    outputs = [write_frame(config.out / "sweep.csv", pd.concat(frames, ignore_index=True))]
    return _finish(config, feeder, result, outputs)


def run_verify(config: RunConfig, tracking_node: Optional[int] = None) -> CommandSummary:
    """Run the envelope property suites around the neutral dispatch."""
    feeder = load_feeder(config)
    P_L, Q_L = load_period(config, feeder)
    node = feeder.canonical_index(tracking_node) if tracking_node is not None else None
    report = run_verification(
        feeder,
        P_L,
        Q_L,
        samples=config.samples,
        seed=config.seed,
        quad_mode=config.quad_mode,
        tracking_node=node,
    )
    logger.info(format_verification(report))
    return _finish(config, feeder, report.to_dict(), [])


def run_scale(config: RunConfig, cap_counts: Sequence[int]) -> CommandSummary:
    """Time one problem solve per number of enabled cap banks."""
    feeder = load_feeder(config)
    P_L, Q_L = load_period(config, feeder)
    scale = scale_study(feeder, P_L, Q_L, cap_counts, vpo_options(config))
    logger.info(format_scale_summary(scale))
    frame = scale.to_frame()
    outputs = [write_frame(config.out / "scale.csv", frame)]
    result = {
        "rows": frame.to_dict(orient="records"),
        "time_weakly_increasing": scale.time_weakly_increasing(),
    }
    return _finish(config, feeder, result, outputs)
