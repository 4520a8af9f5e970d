"""
Shared feeder fixtures for the test suite.
"""

from pathlib import Path
from typing import Any, Dict

import numpy as np
import pytest

from lib.distflow.feeder import Feeder, parse_feeder

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def single_branch_document(**extra: Any) -> Dict[str, Any]:
    """One line from the substation to a load node, in per-unit."""
    doc: Dict[str, Any] = {
        "name": "single",
        "base_mva": 1.0,
        "base_kv": 1.0,
        "v0_pu": 1.0,
        "branches": [{"id": 1, "from": 0, "to": 1, "r_pu": 0.01, "x_pu": 0.02}],
    }
    doc.update(extra)
    return doc


@pytest.fixture
def single_branch() -> Feeder:
    return parse_feeder(FIXTURES / "single_branch.json")


@pytest.fixture
def three_node() -> Feeder:
    return parse_feeder(FIXTURES / "three_node.json")


@pytest.fixture
def oltc_feeder() -> Feeder:
    """Single branch behind a ±16 step tap changer."""
    return parse_feeder(
        single_branch_document(
            oltcs=[{"branch": 1, "tau": 0.00625, "n_min": -16, "n_max": 16}]
        )
    )


@pytest.fixture
def cap_feeder() -> Feeder:
    """Single branch with a three-unit capacitor bank and a DER at the load."""
    return parse_feeder(
        single_branch_document(
            caps=[{"node": 1, "y_c_pu": 0.01, "n_min": 0, "n_max": 3}],
            ders=[{"node": 1, "q_min_pu": -0.05, "q_max_pu": 0.05}],
        )
    )


@pytest.fixture(scope="session")
def ieee13() -> Feeder:
    return parse_feeder(FIXTURES / "ieee13.json")


@pytest.fixture(scope="session")
def ieee37() -> Feeder:
    return parse_feeder(FIXTURES / "ieee37.json")


@pytest.fixture
def three_node_load(three_node: Feeder):
    """Net demand (P_L, Q_L) with the load at the far node."""
    P_L = np.zeros(three_node.node_count)
    Q_L = np.zeros(three_node.node_count)
    far = three_node.canonical_index(2) - 1
    P_L[far] = 0.2
    Q_L[far] = 0.1
    return P_L, Q_L
