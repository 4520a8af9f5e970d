"""
Unit tests for the DistFlow operators and the H certificate.
"""

from dataclasses import replace

import numpy as np
import pytest

from lib.distflow.feeder import parse_feeder
from lib.distflow.loadflow import solve_loadflow
from lib.distflow.matrices import (
    OperatingPoint,
    build_matrices,
    certify_h_nonneg,
    residuals,
)
from tests.conftest import single_branch_document


class TestBuildMatrices:
    def test_single_branch(self, single_branch):
        m = build_matrices(single_branch)
        assert m.n == 1
        assert m.C[0, 0] == 1.0
        assert m.M_p[0, 0] == pytest.approx(0.02)
        assert m.M_q[0, 0] == pytest.approx(0.04)
        assert m.H[0, 0] == pytest.approx(0.01**2 + 0.02**2)
        assert m.D_R[0, 0] == 0.0

    def test_three_node_closed_form(self, three_node):
        m = build_matrices(three_node)
        np.testing.assert_array_equal(m.A, [[0.0, 1.0], [0.0, 0.0]])
        np.testing.assert_array_equal(m.C, [[1.0, 1.0], [0.0, 1.0]])
        np.testing.assert_allclose(m.M_p, [[0.02, 0.02], [0.02, 0.06]])
        np.testing.assert_allclose(m.M_q, [[0.04, 0.04], [0.04, 0.10]])
        np.testing.assert_allclose(m.D_R, [[0.0, 0.02], [0.0, 0.0]])
        # C^T (2 (R D_R + X D_X) + Z2)
        np.testing.assert_allclose(m.H, [[0.0005, 0.0016], [0.0005, 0.0029]])

    def test_incidence_shape(self, ieee13):
        m = build_matrices(ieee13)
        assert m.B.shape == (13, 12)
        assert np.all(m.B.sum(axis=0) == 2.0)
        # I - A is unit upper triangular in canonical order
        i_minus_a = np.eye(m.n) - m.A
        assert np.all(np.tril(i_minus_a, -1) == 0.0)
        assert np.all(np.diag(i_minus_a) == 1.0)

    def test_as_dict_names(self, three_node):
        names = set(build_matrices(three_node).as_dict())
        assert names == {
            "B", "B_n", "A", "C", "D_R", "D_X", "R", "X", "Z2", "M_p", "M_q", "H"
        }  # fmt: skip


class TestCertificate:
    @pytest.mark.parametrize("name", ["ieee13", "ieee37"])
    def test_inductive_feeders_pass(self, name, request):
        feeder = request.getfixturevalue(name)
        certificate = certify_h_nonneg(build_matrices(feeder))
        assert certificate.passed
        assert certificate.status == "PASS"
        assert certificate.min_h >= 0.0
        assert certificate.determinant == 1.0

    def test_random_inductive_trees(self):
        rng = np.random.default_rng(13)
        for trial in range(100):
            n = int(rng.integers(1, 41))
            doc = single_branch_document(name=f"tree{trial}")
            doc["branches"] = [
                {
                    "id": k,
                    "from": int(rng.integers(0, k)),
                    "to": k,
                    "r_pu": float(rng.uniform(1e-4, 0.05)),
                    "x_pu": float(rng.uniform(1e-4, 0.05)),
                }
                for k in range(1, n + 1)
            ]
            m = build_matrices(parse_feeder(doc))
            certificate = certify_h_nonneg(m)
            assert certificate.passed, f"tree {trial}: {certificate.reasons}"
            assert m.H.min() >= -1e-12

    def test_failure_is_reported_not_raised(self, three_node):
        m = build_matrices(three_node)
        H = m.H.copy()
        H[0, 1] = -1.0
        broken = replace(m, H=H)
        certificate = certify_h_nonneg(broken)
        assert not certificate.passed
        assert certificate.status == "FAIL"
        assert any("H has a negative entry" in r for r in certificate.reasons)
        assert certificate.to_dict()["status"] == "FAIL"


class TestResiduals:
    def test_identities_hold_at_the_oracle(self, ieee13):
        m = build_matrices(ieee13)
        rng = np.random.default_rng(3)
        p = -rng.uniform(0.0, 0.05, ieee13.node_count)
        q = -rng.uniform(0.0, 0.03, ieee13.node_count)
        op = solve_loadflow(ieee13, p, q, tol=1e-10)
        report = residuals(m, op)
        assert report.flow_p < 1e-12
        assert report.flow_q < 1e-12
        assert report.voltage < 1e-12
        assert report.current <= 1e-10

    def test_no_load_point(self, three_node):
        op = OperatingPoint.no_load(three_node)
        assert residuals(build_matrices(three_node), op).max == 0.0

    def test_dimension_mismatch(self, three_node, single_branch):
        op = OperatingPoint.no_load(single_branch)
        with pytest.raises(ValueError, match="Dimension mismatch"):
            residuals(build_matrices(three_node), op)
