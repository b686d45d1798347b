"""
End-to-end tests of the command-line entry point and the orchestrator.
"""

import json
import math

import pandas as pd
import pytest

from config import parse_config, reset_settings
from nonlocal_cli import EXIT_CHECK_FAILED, EXIT_CONFIG_ERROR, EXIT_OK, main
from src.experiments.base_experiment import BaseExperiment
from src.orchestrator import EXPERIMENTS, ExperimentOrchestrator

SMALL_ATTRACTOR = """
[grid]
n = 5

[attractor]
depths = [2.0, 4.0]
seed_constants = 3
seed_random = 2
"""


class BrokenExperiment(BaseExperiment):
    def __init__(self, emitter, threads: int = 1) -> None:
        super().__init__("broken", emitter, threads)

    def process(self, config):
        raise KeyError("missing table")


def write_config(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def run(command, tmp_path, *extra, config=None, output="out"):
    argv = [command, "--output-dir", str(tmp_path / output), "--quiet", *extra]
    if config is not None:
        argv += ["--config", write_config(tmp_path, config)]
    return main(argv)


class TestSelftest:
    def test_passes(self, tmp_path, capsys):
        assert run("selftest", tmp_path) == EXIT_OK
        report = json.loads((tmp_path / "out" / "selftest.json").read_text(encoding="utf-8"))
        assert report["failed"] == []
        assert report["total"] == len(report["checks"])
        assert report["schema_version"] == 1
        assert capsys.readouterr().out.strip().endswith("selftest.json")

    def test_output_is_independent_of_threads(self, tmp_path):
        assert run("selftest", tmp_path, "--threads", "1", output="one") == EXIT_OK
        assert run("selftest", tmp_path, "--threads", "8", output="eight") == EXIT_OK
        one = (tmp_path / "one" / "selftest.json").read_bytes()
        assert one == (tmp_path / "eight" / "selftest.json").read_bytes()


class TestSimulate:
    def test_pure_decay(self, tmp_path):
        config = "[grid]\nn = 5\n[nonlinearity]\nkind = 'zero'\n[simulate]\nt = 1.0\n[simulate.initial]\nvalue = 1.0\n"
        assert run("simulate", tmp_path, config=config) == EXIT_OK

        frame = pd.read_csv(tmp_path / "out" / "trajectory.csv")
        assert list(frame.columns) == ["t", "x=0", "x=0.25", "x=0.5", "x=0.75", "x=1"]
        assert frame["t"].iloc[-1] == 1.0
        assert all(abs(value - math.exp(-1.0)) < 1e-13 for value in frame.iloc[-1, 1:])

        summary = json.loads((tmp_path / "out" / "summary.json").read_text(encoding="utf-8"))
        assert summary["steps"] == 100
        assert summary["samples"] == 101
        assert abs(summary["final_norms"]["linf"] - math.exp(-1.0)) < 1e-13
        assert summary["decay"]["ok"]

    def test_csv_uses_crlf(self, tmp_path):
        config = "[grid]\nn = 3\n[simulate]\nt = 0.05\n"
        assert run("simulate", tmp_path, config=config) == EXIT_OK
        raw = (tmp_path / "out" / "trajectory.csv").read_bytes()
        assert raw.startswith(b"t,x=0,x=0.5,x=1\r\n")
        assert raw.count(b"\r\n") == 7


class TestExitCodes:
    def test_inverted_comparison_data(self, tmp_path, capsys):
        config = "[grid]\nn = 5\n[compare]\nt = 1.0\n[compare.v_tau]\nvalue = 1.0\n[compare.V_tau]\nvalue = 2.0\n"
        assert run("compare", tmp_path, config=config) == EXIT_CONFIG_ERROR
        assert "v_tau <= u_tau" in capsys.readouterr().err

    def test_unknown_key(self, tmp_path, capsys):
        assert run("simulate", tmp_path, config="[grid]\nnodes = 5\n") == EXIT_CONFIG_ERROR
        assert "unknown key 'grid.nodes'" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        argv = ["simulate", "--config", str(tmp_path / "absent.toml"), "--output-dir", str(tmp_path), "--quiet"]
        assert main(argv) == EXIT_CONFIG_ERROR

    def test_bad_thread_count(self, tmp_path):
        assert run("selftest", tmp_path, "--threads", "0") == EXIT_CONFIG_ERROR

    def test_unknown_command(self, tmp_path):
        with pytest.raises(SystemExit) as excinfo:
            main(["integrate", "--output-dir", str(tmp_path)])
        assert excinfo.value.code == 2

    def test_unexpected_errors_exit_one(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setitem(EXPERIMENTS, "simulate", BrokenExperiment)
        assert run("simulate", tmp_path) == EXIT_CHECK_FAILED
        assert "Failed to run simulate" in capsys.readouterr().err


class TestAttractor:
    def test_small_run(self, tmp_path):
        assert run("attractor", tmp_path, config=SMALL_ATTRACTOR) == EXIT_OK
        report = json.loads((tmp_path / "out" / "attractor.json").read_text(encoding="utf-8"))
        assert report["members"] == 5
        assert report["members_csv_path"] == "members.csv"
        assert report["depths"] == [2.0, 4.0]
        assert report["seed_radius"] == 3.0
        assert abs(report["absorbing_radius"] - 2.2) < 1e-12
        members = pd.read_csv(tmp_path / "out" / "members.csv")
        assert list(members["member"]) == [0, 1, 2, 3, 4]

    def test_artifacts_are_independent_of_threads(self, tmp_path):
        assert run("attractor", tmp_path, "--threads", "1", config=SMALL_ATTRACTOR, output="one") == EXIT_OK
        assert run("attractor", tmp_path, "--threads", "4", config=SMALL_ATTRACTOR, output="four") == EXIT_OK
        for name in ("attractor.json", "members.csv"):
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "four" / name).read_bytes()


class TestOrchestrator:
    def test_threads_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("NONLOCAL_THREADS", "3")
        reset_settings()
        assert ExperimentOrchestrator(tmp_path).threads == 3
        assert ExperimentOrchestrator(tmp_path, threads=2).threads == 2

    def test_wraps_unexpected_errors(self, tmp_path, monkeypatch):
        monkeypatch.setitem(EXPERIMENTS, "simulate", BrokenExperiment)
        with pytest.raises(RuntimeError, match="Failed to run simulate"):
            ExperimentOrchestrator(tmp_path).run("simulate", parse_config(""))

    def test_result_lists_artifacts(self, tmp_path):
        result = ExperimentOrchestrator(tmp_path).run("simulate", parse_config("[grid]\nn = 3\n[simulate]\nt = 0.1\n"))
        assert result["success"]
        assert result["artifacts"] == ["trajectory.csv", "summary.json"]
