"""Acceptance criteria, one test each, at their stated tolerances and runtime budgets.

Every test prints a single ``ACCEPTANCE <id> PASS|FAIL`` line (visible in
``pytest -v`` output) before asserting.
"""
import subprocess
import sys
import time
from pathlib import Path

import pytest

from transferlab import suite

# criterion -> runtime budget in seconds
BUDGETS = {
    "C1-markov": 30,
    "C2-isometry": 10,
    "C3-algebra": 20,
    "C4-exp-bound": 120,
    "C5-generator": 60,
    "C6-decoupling": 120,
    "C7-oracle": 60,
    "C8-flat-sanity": 60,
}
TIER_BUDGET = 300


def _report(capsys, cid, ok, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE {cid} {'PASS' if ok else 'FAIL'} {detail}")


@pytest.mark.slow
@pytest.mark.parametrize("cid", list(BUDGETS))
def test_criterion(cid, capsys):
    res = suite.run_criteria([cid], tier="small", seed=0)
    wall = res.timings[cid]
    failed = [r for r in res.rows if not r["pass"]]
    ok = bool(res.rows) and not failed and wall <= BUDGETS[cid]
    worst = "; ".join(f"{r['quantity']}={r['value']:.3g} {r['comparison']} {r['tolerance']:g}" for r in res.rows)
    _report(capsys, cid, ok, f"wall={wall:.1f}s/{BUDGETS[cid]}s {worst}")
    assert res.rows, "criterion produced no checks"
    assert not failed, failed
    assert wall <= BUDGETS[cid]


def _verify(out: Path) -> float:
    t0 = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "transferlab", "verify-all", "--tier", "small", "--seed", "0", "--out", str(out)],
        capture_output=True,
        text=True,
    )
    wall = time.perf_counter() - t0
    assert proc.returncode == 0, proc.stdout + proc.stderr
    return wall


@pytest.mark.slow
def test_c9_reproducibility(tmp_path, capsys):
    walls = [_verify(tmp_path / "a"), _verify(tmp_path / "b")]
    csvs = sorted(p.name for p in (tmp_path / "a").glob("*.csv") if p.name != "timings.csv")
    assert "verify.csv" in csvs and "verify_details.csv" in csvs
    same = all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in csvs)
    same_manifest = (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()
    ok = same and same_manifest and max(walls) <= TIER_BUDGET
    _report(capsys, "C9-reproducibility", ok, f"identical_csvs={same} wall={max(walls):.1f}s/{TIER_BUDGET}s")
    assert same and same_manifest
    assert max(walls) <= TIER_BUDGET
