import json
import subprocess
import sys

import pytest

from tsocc.cli import EXIT_BUDGET, EXIT_MISMATCH, EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, run_command


@pytest.fixture
def out(tmp_path, monkeypatch):
    monkeypatch.delenv("TSOCC_OUT", raising=False)
    return tmp_path


def run(out, *argv):
    return run_command(["--out", str(out), *argv])


def test_litmus_fig3_gap(out, capsys):
    assert run(out, "litmus", "run", "fig3.litmus", "--engine", "both") == EXIT_OK
    text = capsys.readouterr().out
    assert "fig3 STRICTNESS-GAP" in text
    summary = json.loads((out / "litmus-fig3.json").read_text())
    assert summary[0]["verdict"] == "Observable" and summary[1]["witness"] is None
    assert (out / "fig3.axiomatic.witness").exists()


def test_litmus_file_and_expectation_mismatch(out, capsys):
    f = out / "t.litmus"
    f.write_text("test t\ninit x=0\nthread P1 { r1 <- x }\nobservable? r1=0\nexpect tsolb=NotObservable\n")
    assert run(out, "litmus", "run", str(f), "--engine", "tsolb") == EXIT_MISMATCH
    assert "(expected NotObservable)" in capsys.readouterr().out
    assert (out / "t.tsolb.witness").read_text().startswith("R 0 0 0")


def test_litmus_campaign(out, capsys):
    assert run(out, "litmus", "campaign", "--seed", "5", "--count", "20") == EXIT_OK
    data = json.loads((out / "campaign.json").read_text())
    assert sum(data["counts"].values()) == 20 and data["soundness_bugs"] == []


def test_theorem_sweep_reports_ppo(out, capsys):
    assert run(out, "tsolb", "check-theorem", "--depth", "3") == EXIT_VIOLATION
    assert "ppo" in capsys.readouterr().out
    data = json.loads((out / "theorem.json").read_text())
    assert data["traces"] == 2955 and data["failures"]["ppo"] == 8
    assert (out / "trace_ppo.txt").exists()


def test_theorem_sweep_passes_where_ppo_cannot_fail(out):
    assert run(out, "tsolb", "check-theorem", "--depth", "2") == EXIT_OK


def test_verify_refinement_small(out, capsys):
    assert run(out, "verify", "refinement", "--procs", "2", "--addrs", "1", "--vals", "2") == EXIT_OK
    data = json.loads((out / "refinement.json").read_text())
    assert data["verdict"] == "pass" and data["states"] == 211


def test_verify_refinement_mutation_writes_counterexample(out):
    code = run(out, "verify", "refinement", "--procs", "2", "--addrs", "1", "--mutation", "no-store-write-e")
    assert code == EXIT_VIOLATION
    data = json.loads((out / "refinement.json").read_text())
    assert data["violated"] == "Match" and data["counterexample_replays"]
    assert (out / "refinement.cex").read_text().startswith("# model tso-cc")


def test_budget_exit(out):
    assert run(out, "verify", "refinement", "--addrs", "1", "--max-states", "10") == EXIT_BUDGET


def test_explore_dump(out, capsys):
    assert run(out, "explore", "dump", "--procs", "1", "--addrs", "1") == EXIT_OK
    assert json.loads(capsys.readouterr().out)["states"] == 13


def test_env_overrides_out(tmp_path, monkeypatch):
    monkeypatch.setenv("TSOCC_OUT", str(tmp_path / "env"))
    assert run_command(["--out", str(tmp_path / "flag"), "litmus", "run", "sb"]) == EXIT_OK
    assert (tmp_path / "env" / "litmus-sb.json").exists()
    assert not (tmp_path / "flag").exists()


@pytest.mark.parametrize("argv", [["--nope"], ["verify"], ["verify", "refinement", "--procs", "0"],
                                  ["litmus", "run", "sb", "--engine", "herd"], ["tsolb", "check-theorem", "--x"]])
def test_usage_errors(argv, capsys):
    assert run_command(argv) == EXIT_USAGE
    assert "usage:" in capsys.readouterr().err


def test_bad_inputs_are_usage_errors(out):
    assert run(out, "litmus", "run", "no-such-test") == EXIT_USAGE
    assert run(out, "verify", "refinement", "--vals", "1") == EXIT_USAGE


def test_console_script_exit_code(tmp_path):
    p = subprocess.run([sys.executable, "-m", "tsocc.cli", "--out", str(tmp_path), "litmus", "run", "mp"],
                       capture_output=True, text=True)
    assert p.returncode == 0
    assert "mp CONSISTENT" in p.stdout
