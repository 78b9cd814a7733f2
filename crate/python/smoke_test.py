"""Smoke test for the taskswitch_py extension.

Build and install first:  pip install maturin && maturin develop -m crates/py/Cargo.toml
Run from the repository root:  python python/smoke_test.py
"""

import json
from pathlib import Path

import taskswitch_py as ts

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "crates" / "core" / "fixtures"
SCENARIOS = ROOT / "crates" / "core" / "scenarios"


def load(path):
    return path.read_text()


def main():
    bt = load(FIXTURES / "bt_fetch.json")
    fsm = load(FIXTURES / "fsm_fetch_fault_tolerant.json")
    assert ts.policy_kind(bt) == "bt"
    assert ts.cyclomatic(bt) == 1
    assert ts.cyclomatic(fsm) == 14
    assert ts.effort(4, 0) == 15

    dist, exact, script = ts.ged(bt, bt)
    assert dist == 0 and exact and json.loads(script)["ops"] == []

    built = ts.backchain(load(FIXTURES / "goal_fetch.json"), load(FIXTURES / "library_fetch.json"))
    assert ts.ged(built, bt)[0] == 0

    hfsm = ts.to_hfsm(bt)
    assert ts.policy_kind(hfsm) == "hfsm"

    outcome, ticks, trace = ts.run_episode(bt, load(SCENARIOS / "baseline.json"))
    assert outcome == "SUCCESS", outcome
    assert not ts.chattering(trace)

    naive = load(FIXTURES / "bt_fetch_chattering.json")
    outcome, _, trace = ts.run_episode(naive, load(SCENARIOS / "chattering.json"))
    assert outcome == "TIMEOUT" and ts.chattering(trace)

    table = json.loads(ts.report(3, str(FIXTURES)))
    assert table["cells"]
    print(f"ok: baseline episode took {ticks} ticks, table 3 has {len(table['cells'])} cells")


if __name__ == "__main__":
    main()
