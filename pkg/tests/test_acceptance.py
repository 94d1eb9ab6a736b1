"""Acceptance suite: one printed PASS/FAIL line per criterion at its stated tolerance."""

import shutil
import subprocess
import sys
import time

import pytest

from fluctgeom.workbench.acceptance import CRITERIA, run_criterion


@pytest.mark.parametrize("number", [c[0] for c in CRITERIA], ids=[f"criterion-{c[0]}" for c in CRITERIA])
def test_criterion(number, capsys):
    res = run_criterion(number)
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.line()


def test_verify_command_exits_zero():
    exe = shutil.which("fluctgeom")
    cmd = [exe, "verify"] if exe else [sys.executable, "-m", "fluctgeom", "verify"]
    t0 = time.perf_counter()
    proc = subprocess.run(cmd, capture_output=True, text=True, timeout=300)
    elapsed = time.perf_counter() - t0
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert proc.stdout.count("[PASS]") == len(CRITERIA)
    assert elapsed < 300
