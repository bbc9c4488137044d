import json
import os
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from modprop.cli import EXIT_FAIL, EXIT_INVALID, EXIT_OK, EXIT_PARSE, format_table, main, merge_reports

CONFIGS = Path(__file__).resolve().parent.parent / "demos" / "configs"


def run(*argv):
    return main([str(a) for a in argv])


def test_eval_writes_report_and_timings(tmp_path):
    out = tmp_path / "corr.json"
    assert run("eval", "--config", CONFIGS / "correspondence.json", "--out", out) == EXIT_OK
    report = json.loads(out.read_text())
    assert report["command"] == "eval" and report["seed"] == 0
    collapse = report["results"]["collapse"]["quantities"]["length"]
    assert collapse["lower"] <= 1.0 <= collapse["upper"] <= 1.0 + 1e-9
    assert set(report["results"]) == {"collapse", "expand", "there_and_back", "collapse_trek", "two_to_one"}
    assert (tmp_path / "corr.json.timings.json").exists()
    assert not [p for p in os.listdir(tmp_path) if p.startswith(".tmp-")]


def test_eval_is_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        assert run("eval", "--config", CONFIGS / "correspondence.json", "--target", "collapse", "--out", out) == 0
    assert a.read_bytes() == b.read_bytes()


def test_eval_missing_target_is_invalid(capsys):
    assert run("eval", "--config", CONFIGS / "correspondence.json", "--target", "nowhere") == EXIT_INVALID
    assert "nowhere" in capsys.readouterr().err


def test_bad_json_is_parse_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("eval", "--config", bad) == EXIT_PARSE


def test_unknown_key_is_parse_error(tmp_path):
    cfg = json.loads((CONFIGS / "correspondence.json").read_text())
    cfg["colour"] = "blue"
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert run("eval", "--config", path) == EXIT_PARSE


def test_invalid_metric_is_invalid(tmp_path):
    cfg = json.loads((CONFIGS / "correspondence.json").read_text())
    cfg["spaces"]["two_points"]["distances"] = [[0, -1], [-1, 0]]
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert run("eval", "--config", path, "--target", "collapse") == EXIT_INVALID


def test_unknown_suite_and_trials():
    assert run("verify", "--suite", "nonsense") == EXIT_INVALID
    assert run("verify", "--suite", "algebra", "--trials", "0") == EXIT_INVALID


def test_verify_quantum_metric_passes(tmp_path):
    out = tmp_path / "qm.json"
    assert run("verify", "--suite", "quantum_metric", "--trials", 5, "--seed", 1, "--out", out) == EXIT_OK
    report = json.loads(out.read_text())
    assert report["passed"] and report["results"]


def test_verify_algebra_flags_sqrt2_norm_bound(tmp_path):
    out = tmp_path / "alg.json"
    assert run("verify", "--suite", "algebra", "--trials", 200, "--seed", 0, "--out", out) == EXIT_FAIL
    results = {r["name"]: r for r in json.loads(out.read_text())["results"]}
    assert not results["norm_lemma"]["passed"] and results["norm_lemma"]["witness"]
    assert results["norm_triangle_bound"]["passed"] and results["c_star_identity"]["passed"]


def test_verify_weakened_H_fails_with_witness(tmp_path, capsys):
    out = tmp_path / "weak.json"
    code = run("verify", "--suite", "bundle", "--config", CONFIGS / "weakened_H.json", "--trials", 200,
               "--out", out)
    assert code == EXIT_FAIL
    err = capsys.readouterr().err
    assert "FAIL" in err and "witness" in err
    failed = [r for r in json.loads(out.read_text())["results"] if not r["passed"]]
    assert failed and failed[0]["witness"] is not None


def test_report_merges_sorted_and_flags(tmp_path, capsys):
    ok = {"command": "eval", "results": {"b": {"kind": "trek", "length": {"lower": 1.0, "upper": 1.5}},
                                         "a": {"kind": "bridge", "quantities": {}, "bounds": [
                                             {"name": "lift_bound", "value": 9.0, "bound": 2.0, "slack": 1.0}]}}}
    (tmp_path / "r1.json").write_text(json.dumps(ok))
    (tmp_path / "r1.json.timings.json").write_text("{}")
    code = run("report", str(tmp_path / "*.json"))
    assert code == EXIT_FAIL
    lines = capsys.readouterr().out.splitlines()
    names = [ln.split()[1] if ln.startswith("!!") else ln.split()[0] for ln in lines[1:]]
    assert names == sorted(names) and len(names) == 2
    assert lines[1].startswith("!! ") and "VIOLATION" in lines[1]
    rows = merge_reports([tmp_path / "r1.json"])
    assert rows[0]["bound"] == 3.0


def test_report_unreadable_is_parse_error(tmp_path):
    bad = tmp_path / "x.json"
    bad.write_text("[1, 2")
    assert run("report", bad) == EXIT_PARSE


def test_format_table_aligned():
    text = format_table([{"name": "x", "value": 1.0, "bound": None, "status": "ok"},
                         {"name": "longer", "value": "[0, 1]", "bound": 2.0, "status": "VIOLATION"}])
    lines = text.splitlines()
    col = lines[0].index("value")
    assert all(ln[col - 2:col] == "  " for ln in lines[1:])


@pytest.mark.skipif(shutil.which("modprop") is None, reason="console script not installed")
def test_console_script_runs(tmp_path):
    out = tmp_path / "o.json"
    proc = subprocess.run(["modprop", "eval", "--config", str(CONFIGS / "correspondence.json"), "--target",
                           "collapse_trek", "--out", str(out)], capture_output=True, text=True, env=dict(os.environ))
    assert proc.returncode == 0, proc.stderr
    assert json.loads(out.read_text())["results"]["collapse_trek"]["kind"] == "trek"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "modprop.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip()
