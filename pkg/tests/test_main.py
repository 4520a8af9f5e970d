"""
End-to-end tests of the vpo command on the bundled toy feeders.
"""

import json
from unittest.mock import patch

import pytest

from tests.conftest import single_branch_document
from vpo_cli import config as config_module
from vpo_cli.helpers import CommandSummary
from vpo_cli.main import build_parser, main


@pytest.fixture(autouse=True)
def clean_environment(tmp_path, monkeypatch):
    """Fresh configuration manager, no config file, no config env var."""
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("VPO_CONFIG_PATH", raising=False)
    monkeypatch.setattr(config_module, "_config_manager", None)


def last_json(capsys):
    return json.loads(capsys.readouterr().out)


class TestParser:
    """Test suite for the argument parser."""

    def test_subcommands(self):
        """Test that every subcommand parses with shared flags."""
        parser = build_parser()
        for command in ("matrices", "acpf", "solve", "schedule", "sweep", "verify"):
            args = parser.parse_args([command, "--feeder", "ieee13", "--gap", "0.01"])
            assert args.command == command
            assert args.gap == 0.01

    def test_solve_needs_a_profile(self):
        """Test that run commands ask for the alias default profile."""
        args = build_parser().parse_args(["solve", "--feeder", "ieee13"])
        assert args.needs_profile
        args = build_parser().parse_args(["acpf", "--feeder", "ieee13"])
        assert not getattr(args, "needs_profile", False)


class TestMain:
    """Test suite for main()."""

    def test_matrices(self, tmp_path, capsys):
        """Test operator export."""
        out = tmp_path / "m"
        assert main(["matrices", "--feeder", "three_node", "--out", str(out)]) == 0
        summary = last_json(capsys)
        assert summary["command"] == "matrices"
        assert summary["result"]["certificate"]["status"] == "PASS"
        assert (out / "H.csv").exists()
        assert (out / "B.csv").exists()
        saved = json.loads((out / "summary.json").read_text())
        assert saved == summary

    def test_acpf_with_der(self, tmp_path, capsys):
        """Test the load flow at a given DER output."""
        out = tmp_path / "a"
        argv = ["acpf", "--feeder", "three_node", "--qg", "2=0.05", "--out", str(out)]
        assert main(argv) == 0
        result = last_json(capsys)["result"]
        assert result["setting"]["q_g"] == {"2": 0.05}
        assert result["feasibility"]["hard_feasible"] is True
        assert result["residuals"]["max"] < 1e-6
        assert (out / "operating_point.csv").exists()

    def test_solve_with_lp_dump(self, tmp_path, capsys):
        """Test one run and the LP dump."""
        out = tmp_path / "s"
        argv = ["solve", "--feeder", "single_branch", "--out", str(out), "--dump-lp"]
        assert main(argv) == 0
        result = last_json(capsys)["result"]
        assert result["converged"] is True
        assert result["stop_reason"] == "converged"
        assert (out / "p3_iter1.lp").exists()
        assert (out / "iterations.csv").exists()
        assert (out / "voltages_by_iteration.csv").exists()

    def test_schedule(self, tmp_path, capsys):
        """Test a two-period schedule from a profile file."""
        profile = tmp_path / "profile.csv"
        profile.write_text("t,PL_1,PL_2,QL_1,QL_2\n0,0,0.2,0,0.1\n1,0,0.3,0,0.15\n")
        out = tmp_path / "sched"
        argv = ["schedule", "--feeder", "three_node", "--profile", str(profile)]
        assert main(argv + ["--out", str(out)]) == 0
        result = last_json(capsys)["result"]
        assert result["periods"] == 2
        assert result["failed"] == []
        assert (out / "schedule.csv").exists()

    def test_sweep(self, tmp_path, capsys):
        """Test an α sweep without a profile (zero demand)."""
        out = tmp_path / "sw"
        argv = ["sweep", "--feeder", "three_node", "--alphas", "0.001,0.01"]
        assert main(argv + ["--out", str(out)]) == 0
        result = last_json(capsys)["result"]
        assert len(result["alpha"]["points"]) == 2
        assert (out / "sweep.csv").exists()

    def test_verify(self, tmp_path, capsys):
        """Test the verification suites with a tracking node."""
        argv = ["verify", "--feeder", "three_node", "--samples", "10"]
        argv += ["--tracking-node", "2", "--out", str(tmp_path / "v")]
        assert main(argv) == 0
        result = last_json(capsys)["result"]
        assert result["passed"] is True
        assert result["tracking"] is not None

    def test_scale(self, tmp_path, capsys):
        """Test the scaling study on a feeder with one cap bank."""
        feeder = tmp_path / "cap.json"
        document = single_branch_document(
            caps=[{"node": 1, "y_c_pu": 0.01, "n_min": 0, "n_max": 3}]
        )
        feeder.write_text(json.dumps(document))
        argv = ["scale", "--feeder", str(feeder), "--caps", "0..1"]
        assert main(argv + ["--out", str(tmp_path / "sc")]) == 0
        rows = last_json(capsys)["result"]["rows"]
        assert [r["binaries"] for r in rows] == [0, 3]


class TestExitCodes:
    """Test suite for failure handling."""

    def test_missing_feeder_flag(self, capsys):
        """Test that argparse errors exit with 2."""
        assert main(["solve"]) == 2

    def test_unknown_feeder(self, capsys):
        """Test that a missing feeder file exits with 2."""
        assert main(["solve", "--feeder", "nowhere.json"]) == 2
        report = last_json(capsys)
        assert report["error"] == "ValidationError"
        assert "Feeder file not found" in report["message"]

    def test_dump_lp_outside_solve(self, capsys):
        """Test that --dump-lp is only valid for solve."""
        argv = ["schedule", "--feeder", "three_node", "--dump-lp"]
        with pytest.raises(SystemExit):
            # schedule has no --dump-lp flag at all
            build_parser().parse_args(argv)
        assert main(argv) == 2

    def test_non_integral_cap_count(self, tmp_path, capsys):
        """Test that command input errors exit with 2."""
        argv = ["acpf", "--feeder", "three_node", "--caps", "1=1.5"]
        assert main(argv + ["--out", str(tmp_path)]) == 2
        assert last_json(capsys)["error"] == "CommandError"

    def test_failing_command(self, tmp_path, capsys):
        """Test that library errors exit with 1."""
        argv = ["acpf", "--feeder", "three_node", "--qg", "2=5.0"]
        assert main(argv + ["--out", str(tmp_path)]) == 1
        assert last_json(capsys)["error"] == "SettingValidationError"


class TestDispatch:
    """Test suite for dispatch() with the command layer patched out."""

    @patch("vpo_cli.main.commands.run_solve")
    def test_unexpected_exception(self, run_solve, capsys):
        """Test that any other exception exits with 1 and is reported."""
        run_solve.side_effect = RuntimeError("boom")
        assert main(["solve", "--feeder", "three_node"]) == 1
        report = last_json(capsys)
        assert report == {"error": "RuntimeError", "message": "boom"}

    @patch("vpo_cli.main.commands.run_sweep")
    def test_sweep_uses_configured_alphas(self, run_sweep, tmp_path):
        """Test that a sweep without grids falls back to the configured α grid."""
        run_sweep.return_value = CommandSummary(command="sweep", feeder="three_node")
        config = tmp_path / "vpo_config.yaml"
        config.write_text("experiments:\n  alphas: [0.5, 2.0]\n")
        argv = ["sweep", "--feeder", "three_node", "--config", str(config)]
        assert main(argv) == 0
        _, alphas, v_lows, workers = run_sweep.call_args.args
        assert alphas == [0.5, 2.0]
        assert v_lows is None
        assert workers is None

    @patch("vpo_cli.main.commands.run_verify")
    def test_verify_tracking_node_from_config(self, run_verify, tmp_path):
        """Test that verify takes the tracking node from the configuration."""
        run_verify.return_value = CommandSummary(command="verify", feeder="three_node")
        config = tmp_path / "vpo_config.yaml"
        config.write_text("experiments:\n  tracking_node: 2\n")
        argv = ["verify", "--feeder", "three_node", "--config", str(config)]
        assert main(argv) == 0
        assert run_verify.call_args.args[1] == 2

    def test_malformed_assignment(self, tmp_path, capsys):
        """Test that a malformed id=value list exits with 2."""
        argv = ["acpf", "--feeder", "three_node", "--qg", "2:0.05"]
        assert main(argv + ["--out", str(tmp_path)]) == 2
        report = last_json(capsys)
        assert report["error"] == "CommandError"
        assert "Malformed DER assignment" in report["message"]
