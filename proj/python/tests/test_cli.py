import json
import os
import shutil
import subprocess
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[2]
CLI = os.environ.get("TWOSCALE_CLI") or shutil.which("twoscale")

pytestmark = pytest.mark.skipif(not CLI or not Path(CLI).exists(), reason="twoscale binary not found")


def run(*args):
    return subprocess.run([CLI, *args], capture_output=True, text=True, timeout=600)


def test_homogenize_writes_report(tmp_path):
    r = run("homogenize", "--config", str(ROOT / "configs" / "sv_quick.cfg"), "--out", str(tmp_path))
    assert r.returncode == 0, r.stderr
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["passed"]
    shown = run("report", str(tmp_path / "report.json"))
    assert shown.returncode == 0
    assert "PASS" in shown.stdout


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("model: {preset: nope}\n")
    r = run("run", "--config", str(bad))
    assert r.returncode == 2
    assert "error:" in r.stderr


def test_missing_report(tmp_path):
    assert run("report", str(tmp_path / "none.json")).returncode == 2
