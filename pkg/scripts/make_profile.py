#!/usr/bin/env python3
"""
Script to regenerate the load profile CSVs under fixtures/.

Peak spot loads are scaled by a 24-hour shape; the high-PV variant subtracts a
half-sine generation curve between 06:00 and 19:00 from the active demand.

Usage:
    python scripts/make_profile.py
    python scripts/make_profile.py --out-dir fixtures --feeder ieee13
"""

import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

# Add project root to path to allow imports from lib
sys.path.insert(0, str(Path(__file__).parent.parent))

from lib.distflow.feeder import Feeder, parse_feeder  # noqa: E402

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "fixtures"

DAILY_SHAPE = [
    0.55, 0.50, 0.47, 0.46, 0.45, 0.48, 0.55, 0.63, 0.70, 0.76, 0.81, 0.85,
    0.88, 0.91, 0.94, 0.97, 0.99, 1.0, 1.0, 0.96, 0.90, 0.80, 0.70, 0.61,
]  # fmt: skip

# Peak demand in pu on the 5 MVA base, keyed by node id
IEEE13_PEAK: Dict[int, Tuple[float, float]] = {
    1: (0.02, 0.0116),
    2: (0.034, 0.025),
    4: (0.251, 0.1436),
    5: (0.046, 0.0264),
    6: (0.034, 0.0302),
    7: (0.1686, 0.0924),
    10: (0.0256, 0.0172),
    11: (0.034, 0.016),
    12: (0.08, 0.058),
}

# Spot loads in kW / kVAr, all phases summed
IEEE37_PEAK_KW: Dict[int, Tuple[float, float]] = {
    701: (630, 315), 712: (85, 40), 713: (85, 40), 714: (38, 18),
    718: (85, 40), 720: (85, 40), 722: (161, 80), 724: (42, 21),
    725: (42, 21), 727: (42, 21), 728: (126, 63), 729: (42, 21),
    730: (85, 40), 731: (85, 40), 732: (42, 21), 733: (85, 40),
    734: (42, 21), 735: (85, 40), 736: (42, 21), 737: (140, 70),
    738: (126, 62), 740: (85, 40), 741: (42, 21), 742: (93, 44),
    744: (42, 21),
}  # fmt: skip

IEEE13_PV: Dict[int, float] = {5: 0.06, 7: 0.06, 8: 0.25, 10: 0.06, 11: 0.06, 12: 0.06}


def pv_shape(hours: np.ndarray) -> np.ndarray:
    """Half-sine generation between 06:00 and 19:00, zero otherwise."""
    shape = np.sin(np.pi * (hours - 6) / 13)
    shape = np.where((hours >= 6) & (hours <= 19), shape, 0.0)
    # sin(pi) rounds to a tiny negative at 19:00
    return np.clip(shape, 0.0, None)


def profile_frame(
    feeder: Feeder,
    peak: Dict[int, Tuple[float, float]],
    labels: List[str],
    scale: np.ndarray,
    pv: Optional[Dict[int, float]] = None,
    pv_scale: Optional[np.ndarray] = None,
) -> pd.DataFrame:
    """Profile with header ``t,PL_<id>..,QL_<id>..`` for every non-substation node."""
    node_ids = feeder.node_ids[1:]
    p_peak = np.array([peak.get(i, (0.0, 0.0))[0] for i in node_ids])
    q_peak = np.array([peak.get(i, (0.0, 0.0))[1] for i in node_ids])
    P = np.outer(scale, p_peak)
    if pv:
        gen = np.array([pv.get(i, 0.0) for i in node_ids])
        weights = pv_scale if pv_scale is not None else np.ones_like(scale)
        P = P - np.outer(weights, gen)
    Q = np.outer(scale, q_peak)
    frame = pd.DataFrame(P, columns=[f"PL_{i}" for i in node_ids])
    frame = pd.concat(
        [frame, pd.DataFrame(Q, columns=[f"QL_{i}" for i in node_ids])], axis=1
    )
    frame.insert(0, "t", labels)
    return frame


def build_profiles(feeder_name: str) -> Dict[str, pd.DataFrame]:
    feeder = parse_feeder(FIXTURE_DIR / f"{feeder_name}.json")
    hours = np.arange(24)
    daily_labels = [f"{h:02d}:00" for h in hours]
    shape = np.array(DAILY_SHAPE)
    if feeder_name == "ieee13":
        peak = IEEE13_PEAK
    else:
        peak = {k: (p / 5000.0, q / 5000.0) for k, (p, q) in IEEE37_PEAK_KW.items()}

    profiles = {
        f"{feeder_name}_peak": profile_frame(feeder, peak, ["peak"], np.ones(1)),
        f"{feeder_name}_daily": profile_frame(feeder, peak, daily_labels, shape),
    }
    if feeder_name == "ieee13":
        profiles["ieee13_flat"] = profile_frame(
            feeder, peak, ["0", "1", "2"], np.full(3, 0.6)
        )
        profiles["ieee13_highpv"] = profile_frame(
            feeder, peak, daily_labels, shape, IEEE13_PV, pv_shape(hours)
        )
    return profiles


def main():
    parser = argparse.ArgumentParser(
        description="Regenerate the load profile CSVs of the bundled feeders"
    )
    parser.add_argument(
        "--out-dir",
        default=str(FIXTURE_DIR),
        help="Output directory (default: fixtures/)",
    )
    parser.add_argument(
        "--feeder",
        choices=["ieee13", "ieee37"],
        action="append",
        help="Feeder to generate (default: both)",
    )
    args = parser.parse_args()

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for feeder_name in args.feeder or ["ieee13", "ieee37"]:
        for name, frame in build_profiles(feeder_name).items():
            path = out_dir / f"{name}.csv"
            frame.to_csv(path, index=False, float_format="%.6f")
            print(f"Wrote {path} ({len(frame)} periods)")


if __name__ == "__main__":
    main()
