import json
import socket
import threading
import time

import httpx
import pytest
import uvicorn
from click.testing import CliRunner

from ppseval.cli import main
from ppseval.service import create_app

from conftest import build_e2e_script, write_config


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def dataset_path(fixture_dir):
    return fixture_dir / "problems_20.jsonl"


@pytest.fixture
def e2e_script(tmp_path, problems):
    return build_e2e_script(problems, tmp_path / "script.json")


def invoke(runner, args):
    result = runner.invoke(main, [str(a) for a in args])
    if result.exception and not isinstance(result.exception, SystemExit):
        raise result.exception
    return result


class TestSolveCommand:
    def test_solve_writes_attempts(self, runner, tmp_path, dataset_path, e2e_script):
        config = write_config(tmp_path, dataset_path)
        result = invoke(runner, [
            "solve", "--config", config, "--strategy", "baseline",
            "--limit", 10, "--mock", e2e_script,
        ])
        assert result.exit_code == 0, result.output
        assert "completed 10, failed 0" in result.output
        attempts = tmp_path / "out" / "attempts_baseline.jsonl"
        assert len(attempts.read_text().splitlines()) == 10

    def test_rerun_resumes(self, runner, tmp_path, dataset_path, e2e_script):
        config = write_config(tmp_path, dataset_path)
        args = ["solve", "--config", config, "--strategy", "baseline",
                "--limit", 10, "--mock", e2e_script]
        invoke(runner, args)
        result = invoke(runner, args)
        assert result.exit_code == 0
        assert "skipped 10 (resume)" in result.output
        assert "live completions 0" in result.output

    def test_config_error_exits_nonzero(self, runner, tmp_path, dataset_path, e2e_script):
        config = write_config(tmp_path, dataset_path, roles=("solver", "meta"))
        result = runner.invoke(main, [
            "solve", "--config", str(config), "--strategy", "multi_agent",
            "--mock", str(e2e_script),
        ])
        assert result.exit_code != 0
        assert "verifier" in result.output

    def test_limit_with_tier_filter(self, runner, tmp_path, dataset_path, e2e_script):
        config = write_config(tmp_path, dataset_path)
        result = invoke(runner, [
            "solve", "--config", config, "--strategy", "baseline",
            "--tier", "hard", "--limit", 2, "--mock", e2e_script,
            "--out", tmp_path / "hard.jsonl",
        ])
        assert result.exit_code == 0
        ids = [json.loads(l)["problem_id"] for l in (tmp_path / "hard.jsonl").open()]
        assert ids == ["prob-003", "prob-006"]


class TestFullPipeline:
    def test_solve_judge_report(self, runner, tmp_path, dataset_path, e2e_script):
        config = write_config(tmp_path, dataset_path)
        eval_paths = []
        for strategy in ("baseline", "multi_agent"):
            result = invoke(runner, [
                "solve", "--config", config, "--strategy", strategy,
                "--limit", 10, "--mock", e2e_script,
            ])
            assert result.exit_code == 0, result.output
            attempts = tmp_path / "out" / f"attempts_{strategy}.jsonl"
            result = invoke(runner, [
                "judge", "--config", config, "--attempts", attempts, "--mock", e2e_script,
            ])
            assert result.exit_code == 0, result.output
            assert "coverage 1.00" in result.output
            eval_paths.append(tmp_path / "out" / f"evals_attempts_{strategy}.jsonl")

        result = invoke(runner, [
            "report", *eval_paths, "--config", config,
            "--baseline", "baseline", "--out-dir", tmp_path / "report",
        ])
        assert result.exit_code == 0, result.output
        assert "multi_agent vs. baseline" in result.output
        assert "Overall PPS" in result.output
        csv_lines = (tmp_path / "report" / "significance.csv").read_text().splitlines()
        assert len(csv_lines) == 8

    def test_report_without_baseline_fails(self, runner, tmp_path, dataset_path, e2e_script):
        config = write_config(tmp_path, dataset_path)
        invoke(runner, ["solve", "--config", config, "--strategy", "self_refine",
                        "--limit", 4, "--mock", e2e_script])
        attempts = tmp_path / "out" / "attempts_self_refine.jsonl"
        invoke(runner, ["judge", "--config", config, "--attempts", attempts, "--mock", e2e_script])
        invoke(runner, ["solve", "--config", config, "--strategy", "single_agent",
                        "--limit", 4, "--mock", e2e_script])
        attempts2 = tmp_path / "out" / "attempts_single_agent.jsonl"
        invoke(runner, ["judge", "--config", config, "--attempts", attempts2, "--mock", e2e_script])
        result = runner.invoke(main, [
            "report",
            str(tmp_path / "out" / "evals_attempts_self_refine.jsonl"),
            str(tmp_path / "out" / "evals_attempts_single_agent.jsonl"),
            "--config", str(config), "--baseline", "baseline",
            "--out-dir", str(tmp_path / "report"),
        ])
        assert result.exit_code != 0
        assert "baseline" in result.output


class TestStatsCommand:
    def test_human_output(self, runner, dataset_path):
        result = invoke(runner, ["stats", "--dataset", dataset_path])
        assert result.exit_code == 0
        assert "records: 20" in result.output
        assert "problem_difficulty" in result.output
        assert "Thermodynamics and Heat Transfer: 4" in result.output

    def test_json_output(self, runner, dataset_path):
        result = invoke(runner, ["stats", "--dataset", dataset_path, "--json"])
        body = json.loads(result.output)
        assert body["record_count"] == 20

    def test_missing_dataset_nonzero_exit(self, runner, tmp_path):
        result = runner.invoke(main, ["stats", "--dataset", str(tmp_path / "nope.jsonl")])
        assert result.exit_code != 0
        assert "not found" in result.output


class TestRemoteServer:
    def test_cli_against_running_service(self, runner, dataset_path):
        with socket.socket() as probe:
            probe.bind(("127.0.0.1", 0))
            port = probe.getsockname()[1]
        server = uvicorn.Server(uvicorn.Config(
            create_app(), host="127.0.0.1", port=port, log_level="error",
        ))
        thread = threading.Thread(target=server.run, daemon=True)
        thread.start()
        base_url = f"http://127.0.0.1:{port}"
        try:
            deadline = time.time() + 10
            while time.time() < deadline:
                try:
                    if httpx.get(f"{base_url}/healthz", timeout=1).status_code == 200:
                        break
                except httpx.HTTPError:
                    time.sleep(0.05)
            else:
                pytest.fail("service did not start")
            result = invoke(runner, [
                "stats", "--server", base_url, "--dataset", dataset_path,
            ])
            assert result.exit_code == 0
            assert "records: 20" in result.output
        finally:
            server.should_exit = True
            thread.join(timeout=5)
