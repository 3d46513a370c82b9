"""Acceptance gate: every primary criterion at its stated tolerance.

Each test prints its individual checks and one summary line
``PASS|FAIL criterion N <name>``.  Criteria that cannot be met are left
failing; see the project notes for the analysis.

Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import time

import pytest

from multifair import acceptance
from multifair.cli import main
from multifair.scenarios import BUILTINS

pytestmark = pytest.mark.acceptance

SEED = 1


def report(capsys, number, name, checks, extra=""):
    ok = bool(checks) and all(c.passed for c in checks)
    with capsys.disabled():
        print()
        for c in checks:
            print("   ", c.line())
        passed = sum(c.passed for c in checks)
        print(f"{'PASS' if ok else 'FAIL'} criterion {number} {name}: "
              f"{passed}/{len(checks)} checks passed{extra}")
    return ok


@pytest.mark.parametrize("name", list(acceptance.CRITERIA))
def test_criterion(name, capsys):
    crit = acceptance.CRITERIA[name]
    overrides = {"seed": SEED} if name in acceptance.SEEDED else {}
    start = time.perf_counter()
    checks = acceptance.evaluate(name, overrides)
    elapsed = time.perf_counter() - start
    ok = report(capsys, crit.number, name, checks, f" in {elapsed:.1f}s")
    failed = [c.name for c in checks if not c.passed]
    assert ok, f"criterion {crit.number} failed checks: {failed}"


def test_end_to_end(tmp_path, capsys):
    """Run every built-in scenario and verify criteria 1-10 on its output with seed 1."""
    start = time.perf_counter()
    codes = {}
    for name in BUILTINS:
        out = tmp_path / f"{name}.csv"
        codes[name] = (main(["run", name, "--out", str(out), "--seed", str(SEED), "--quiet"]),
                       main(["verify", name, "--results", str(out), "--seed", str(SEED)]))
    elapsed = time.perf_counter() - start
    captured = capsys.readouterr().out
    lines = [ln for ln in captured.splitlines() if ln.startswith(("PASS", "FAIL"))]
    checks = [
        acceptance.Check(11, f"{name}-run", run, 0, 0, run == 0) for name, (run, _) in codes.items()
    ] + [
        acceptance.Check(11, f"{name}-verify", verify, 0, 0, verify == 0) for name, (_, verify) in codes.items()
    ]
    with capsys.disabled():
        print()
        print("    results-file checks:", sum(ln.startswith("PASS [0]") for ln in lines), "PASS,",
              sum(ln.startswith("FAIL [0]") for ln in lines), "FAIL")
    ok = report(capsys, 11, "end-to-end", checks, f" in {elapsed:.0f}s (budget 1800s)")
    assert all(run == 0 for run, _ in codes.values()), "a built-in scenario did not complete"
    assert elapsed <= 1800
    assert ok, "verify reported failing criteria"
