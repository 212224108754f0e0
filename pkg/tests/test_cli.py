import json
import shutil
import subprocess
import sys

import pytest

from hardymeans.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, main

SMALL = ["--weights", "origin-exp,tail-exp", "--functions", "cayley-1", "--p", "2", "--grid", "0.2:5:5"]


def test_list(capsys):
    assert main(["list"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "unit-power:1" in out and "blaschke-cayley" in out and "golden_weights" in out


def test_unknown_subcommand_exits_2_with_usage(capsys):
    assert main(["frobnicate"]) == EXIT_CONFIG
    assert "usage:" in capsys.readouterr().err


def test_no_subcommand(capsys):
    assert main([]) == EXIT_CONFIG
    assert "usage:" in capsys.readouterr().err


@pytest.mark.parametrize("args", [
    ["sweep", "--p", "1.5"],
    ["sweep", "--weights", "nope"],
    ["sweep", "--weights", "tail-power:1"],
    ["sweep", "--grid", "1:2"],
    ["sweep", "--checks", "lemma99"],
    ["sweep", "--p", "2", "--tol-family", "lemma31"],
    ["sweep", "--p", "2", "--tol-family", "nonsense=1e-3"],
    ["sweep"],
])
def test_config_errors_exit_2(args, tmp_path, capsys):
    assert main(args + ["--out", str(tmp_path)]) == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_bad_config_file(tmp_path, capsys):
    bad = tmp_path / "c.json"
    bad.write_text("{not json")
    assert main(["sweep", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["sweep", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    bad.write_text(json.dumps({"p_values": [1.0]}))
    assert main(["sweep", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_sweep_writes_reports_and_refuses_overwrite(tmp_path, capsys):
    out = tmp_path / "o"
    args = ["sweep", *SMALL, "--checks", "thm_signs,hip_inequality", "--out", str(out)]
    assert main(args) == EXIT_OK
    assert "ALL CHECKS PASSED" in capsys.readouterr().out
    data = json.loads((out / "report.json").read_text())
    assert data["all_passed"] and data["config"]["p_values"] == [2.0]
    assert (out / "report.csv").read_text().startswith("check_family,")
    assert main(args) == EXIT_CONFIG
    assert "--force" in capsys.readouterr().err
    assert main(args + ["--force"]) == EXIT_OK


def test_config_file_then_flags(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"weight_ids": ["tail-exp"], "function_ids": ["cayley-2"], "p_values": [4],
                               "grid": "0.5:2:3", "checks": ["golden_weights"]}))
    out = tmp_path / "o"
    assert main(["sweep", "--config", str(cfg), "--grid", "0.5:2:4", "--out", str(out), "--quiet"]) == EXIT_OK
    data = json.loads((out / "report.json").read_text())
    assert data["config"]["grid"]["points"] == 4
    assert data["config"]["weight_ids"] == ["tail-exp"]


def test_impossible_tolerance_fails_with_exit_1(tmp_path, capsys):
    args = ["sweep", *SMALL, "--checks", "hip_inequality", "--tol-family", "hip_inequality-closed=1e-30",
            "--out", str(tmp_path)]
    assert main(args) == EXIT_FAIL
    out = capsys.readouterr().out
    assert "CHECK(S) FAILED" in out and "first failure" in out


def test_tabulate(tmp_path, capsys):
    assert main(["tabulate", "--weights", "unit-power:1", "--functions", "cayley-1", "--p", "2",
                 "--grid", "0.5:2:3", "--out", str(tmp_path)]) == EXIT_OK
    text = (tmp_path / "table.txt").read_text()
    assert "# unit-power:1 | cayley-1 | p=2" in text
    body = [ln.split() for ln in text.splitlines() if ln.strip() and ln.split()[0][0].isdigit()]
    assert [float(r[0]) for r in body] == [0.5, 1.0, 2.0]
    # the anchor row: pi/2 and the 3/16 limit
    assert float(body[1][1]) == pytest.approx(1.5707963267948966, rel=1e-12)
    assert float(body[1][2]) == pytest.approx(0.1875, rel=1e-9)
    assert "NearAnchor" in body[1][3]


def test_plot(tmp_path):
    assert main(["plot", *SMALL, "--quantity", "ratio", "--quantity", "logM", "--out", str(tmp_path)]) == EXIT_OK
    assert sorted(p.name for p in tmp_path.iterdir()) == ["logM.svg", "ratio.svg"]
    assert "<polyline" in (tmp_path / "ratio.svg").read_text()


def test_console_script(tmp_path):
    exe = shutil.which("hardymeans")
    cmd = [exe] if exe else [sys.executable, "-m", "hardymeans.cli"]
    done = subprocess.run(cmd + ["list"], capture_output=True, text=True, timeout=120)
    assert done.returncode == 0 and "weights:" in done.stdout
    done = subprocess.run(cmd + ["bogus"], capture_output=True, text=True, timeout=120)
    assert done.returncode == 2 and "usage:" in done.stderr
