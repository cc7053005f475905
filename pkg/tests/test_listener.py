"""Baseline building/persistence, detectors, activity buckets, REPL."""

import json

import pytest

from diver.errors import CorruptFile, InsufficientSamples, VersionMismatch
from diver.listener import (Baseline, activity_level, build_baseline,
                            detect_config, detect_modules, detect_runtime,
                            detect_timer, summarize_window)
from diver.listener.baseline import (TaskProfile, collect_window,
                                     load_baseline, save_baseline)
from diver.listener.monitor import ListenerState
from diver.listener.repl import run_repl
from diver.recordset import RecordSet

from conftest import Stack


def make_baseline(**overrides):
    base = dict(
        device_id="rtu-01", created_at_ms=1000,
        config={"net.ip": "192.168.7.20", "log.level": "info"},
        modules={"netDrv": {"kind": "kernel_module", "file_path": "/flash/netDrv.o",
                            "load_address": 0x400000, "segment_hash": "a" * 64}},
        timer_tree=[[0, 1, 10, 1, 0x101000, "h1", "native"],
                    [1, 2, 100, 2, 0x400400, "h2", "native"]],
        task_profiles={
            "tCtrl": TaskProfile({"READY": 0.95, "PEND": 0.05}, 12, 50, 0x500200, 60),
            "tIdle": TaskProfile({"READY": 1.0}, 4, 255, 0x104000, 60),
        },
    )
    base.update(overrides)
    return Baseline(**base)


# --- config detector ---

def test_detect_config_change_missing_added():
    b = make_baseline()
    alerts = detect_config(b, {"net.ip": "10.0.0.1", "log.level": "info",
                               "new.key": "x"})
    kinds = {(a.subject, a.detail.split(":")[0]) for a in alerts}
    assert ("net.ip", "changed") in kinds
    assert ("new.key", "added") in kinds
    assert all(a.category == "CONFIG" for a in alerts)
    alerts = detect_config(b, {"net.ip": "192.168.7.20"})
    assert {(a.subject, a.detail.split(":")[0]) for a in alerts} == \
        {("log.level", "missing")}
    assert detect_config(b, dict(b.config)) == []


# --- module detector ---

def test_detect_modules_branches():
    b = make_baseline()
    current = [{"name": "netDrv", "kind": "kernel_module",
                "file_path": "/flash/netDrv.o", "load_address": 0x400000,
                "segment_hash": "a" * 64}]
    assert detect_modules(b, current) == []
    tampered = [dict(current[0], segment_hash="b" * 64)]
    assert [a.detail.split(":")[0] for a in detect_modules(b, tampered)] == \
        ["HASH_MISMATCH"]
    moved = [dict(current[0], load_address=0x900000)]
    assert [a.detail.split(":")[0] for a in detect_modules(b, moved)] == \
        ["RELOCATED"]
    extra = current + [{"name": "evil", "kind": "rtp", "file_path": "/x",
                        "load_address": 0x1000, "segment_hash": "c" * 64}]
    assert [a.detail.split(":")[0] for a in detect_modules(b, extra)] == \
        ["UNEXPECTED"]
    assert [a.detail.split(":")[0] for a in detect_modules(b, [])] == ["MISSING"]


# --- timer detector ---

def test_detect_timer_branches():
    b = make_baseline()
    same = [list(r) for r in b.timer_tree]
    assert detect_timer(b, same) == []
    period = [list(r) for r in b.timer_tree]
    period[1][2] = 50
    assert [a.detail.split(":")[0] for a in detect_timer(b, period)] == \
        ["PERIOD_CHANGED"]
    added = same + [[1, 2, 100, 9, 0xB00000, "hx", "native"]]
    assert [a.detail.split(":")[0] for a in detect_timer(b, added)] == \
        ["ADDED_CALLBACK"]
    missing = [same[0]]
    assert [a.detail.split(":")[0] for a in detect_timer(b, missing)] == \
        ["MISSING_CALLBACK"]
    modified = [list(r) for r in b.timer_tree]
    modified[1][4] = 0xB10000
    modified[1][5] = "evil"
    alerts = detect_timer(b, modified)
    assert [a.detail.split(":")[0] for a in alerts] == ["CALLBACK_MODIFIED"]
    assert "address" in alerts[0].detail and "code hash" in alerts[0].detail


# --- runtime detector ---

def window_of(profiles):
    return profiles


def test_detect_runtime_branches():
    b = make_baseline()
    clean = {
        "tCtrl": TaskProfile({"READY": 0.93, "PEND": 0.07}, 11, 50, 0x500200, 60),
        "tIdle": TaskProfile({"READY": 1.0}, 4, 255, 0x104000, 60),
    }
    assert detect_runtime(b, clean) == []
    # missing + unexpected
    swapped = {"tEvil": TaskProfile({"READY": 1.0}, 2, 250, 0x900200, 60),
               "tIdle": clean["tIdle"]}
    kinds = {(a.subject, a.detail.split(":")[0])
             for a in detect_runtime(b, swapped)}
    assert ("tCtrl", "MISSING_TASK") in kinds
    assert ("tEvil", "UNEXPECTED_TASK") in kinds
    # state shift beyond eps
    shifted = dict(clean)
    shifted["tCtrl"] = TaskProfile({"SUSPEND": 1.0}, 1, 50, 0x500200, 60)
    kinds = [a.detail.split(":")[0] for a in detect_runtime(b, shifted)
             if a.subject == "tCtrl"]
    assert "STATE_SHIFT" in kinds and "PC_STAGNATION" in kinds
    # priority change
    reprio = dict(clean)
    reprio["tCtrl"] = TaskProfile(clean["tCtrl"].state_fractions, 11, 200,
                                  0x500200, 60)
    assert ["PRIORITY_CHANGED"] == [a.detail.split(":")[0]
                                    for a in detect_runtime(b, reprio)]


def test_detect_runtime_eps_boundary():
    b = make_baseline()
    # deviation exactly at eps must NOT alert (strict >)
    at_eps = {
        "tCtrl": TaskProfile({"READY": 0.80, "PEND": 0.20}, 12, 50, 0x500200, 60),
        "tIdle": TaskProfile({"READY": 1.0}, 4, 255, 0x104000, 60),
    }
    assert detect_runtime(b, at_eps) == []
    past = {
        "tCtrl": TaskProfile({"READY": 0.799, "PEND": 0.201}, 12, 50, 0x500200, 60),
        "tIdle": TaskProfile({"READY": 1.0}, 4, 255, 0x104000, 60),
    }
    assert any(a.detail.startswith("STATE_SHIFT")
               for a in detect_runtime(b, past))


def test_detect_runtime_insufficient_samples():
    b = make_baseline()
    small = {"tCtrl": TaskProfile({"READY": 1.0}, 1, 50, 0x500200, 10)}
    with pytest.raises(InsufficientSamples):
        detect_runtime(b, small, min_samples=30)


def test_detector_purity():
    b = make_baseline()
    window = {
        "tCtrl": TaskProfile({"SUSPEND": 1.0}, 1, 50, 0x500200, 60),
        "tIdle": TaskProfile({"READY": 1.0}, 4, 255, 0x104000, 60),
    }
    assert detect_runtime(b, window) == detect_runtime(b, window)
    cfg = {"net.ip": "10.0.0.1"}
    assert detect_config(b, cfg) == detect_config(b, cfg)


# --- activity buckets ---

@pytest.mark.parametrize("ready,pc,expected", [
    (0.8, 25, ("high", "high")),
    (0.0, 1, ("low", "low")),
    (0.10, 3, ("med", "med")),
    (0.0999, 2, ("low", "low")),
    (0.50, 10, ("med", "med")),
    (0.501, 11, ("high", "high")),
])
def test_activity_buckets(ready, pc, expected):
    level = activity_level(ready, pc)
    assert (level.ready_bucket, level.pc_bucket) == expected


# --- summarize vs oracle ---

def recount(records):
    """Independent implementation used as the statistics oracle."""
    idx = {c: records.columns.index(c) for c in records.columns}
    per = {}
    for row in records.rows:
        name = row[idx["name"]]
        entry = per.setdefault(name, {"states": {}, "pcs": set(), "n": 0})
        entry["states"][row[idx["state"]]] = \
            entry["states"].get(row[idx["state"]], 0) + 1
        entry["pcs"].add(row[idx["pc"]])
        entry["n"] += 1
    return per


def test_summarize_window_matches_recount():
    stack = Stack()
    try:
        client = stack.client()
        raw = collect_window(client, 40, 2.0)
        summary = summarize_window(raw)
        oracle = recount(raw)
        assert set(summary) == set(oracle)
        for name, profile in summary.items():
            o = oracle[name]
            assert profile.distinct_pc == len(o["pcs"])
            for state, count in o["states"].items():
                assert abs(profile.state_fractions[state] - count / o["n"]) < 1e-9
    finally:
        stack.close()


# --- baseline build/store ---

def test_build_baseline_and_determinism(tmp_path):
    s1, s2 = Stack(), Stack()
    try:
        b1 = build_baseline(s1.client(), 1.0, 30.0)
        b2 = build_baseline(s2.client(), 1.0, 30.0)
        assert b1.modules == b2.modules
        assert b1.timer_tree == b2.timer_tree
        assert b1.config == b2.config
        assert b1.device_id == "rtu-01"
        fractions = b1.task_profiles["tIdle"].state_fractions
        assert fractions.get("READY", 0) >= 0.9
        for profile in b1.task_profiles.values():
            assert abs(sum(profile.state_fractions.values()) - 1.0) < 1e-6
    finally:
        s1.close()
        s2.close()


def test_build_baseline_insufficient():
    stack = Stack()
    try:
        with pytest.raises(InsufficientSamples):
            build_baseline(stack.client(), 1.0, 1.0)
    finally:
        stack.close()


def test_baseline_store_round_trip(tmp_path):
    b = make_baseline()
    path = tmp_path / "baseline.json"
    save_baseline(b, str(path))
    assert load_baseline(str(path)) == b


def test_baseline_store_corrupt_and_version(tmp_path):
    b = make_baseline()
    path = tmp_path / "b.json"
    save_baseline(b, str(path))
    text = path.read_text()
    truncated = tmp_path / "trunc.json"
    truncated.write_text(text[:len(text) // 2])
    with pytest.raises(CorruptFile):
        load_baseline(str(truncated))
    doc = json.loads(text)
    doc["version"] = 0
    wrong = tmp_path / "v0.json"
    wrong.write_text(json.dumps(doc))
    with pytest.raises(VersionMismatch):
        load_baseline(str(wrong))
    doc2 = json.loads(text)
    doc2["device_id"] = "spoofed"
    tampered = tmp_path / "tampered.json"
    tampered.write_text(json.dumps(doc2))
    with pytest.raises(CorruptFile):
        load_baseline(str(tampered))


# --- REPL ---

def run_scripted_repl(stack, lines):
    client = stack.client()
    out = []
    lines = iter(lines)

    def fake_input(prompt):
        try:
            return next(lines)
        except StopIteration:
            raise EOFError

    state = ListenerState()
    run_repl(client, state, input_fn=fake_input, output=out.append)
    return "\n".join(out), state


def test_repl_tables_help_and_errors():
    stack = Stack()
    try:
        text, _ = run_scripted_repl(stack, ["tasks", "help", "bogus x=1",
                                            "eval (2+3)*4", "quit"])
        assert "tCtrl" in text
        assert "local verbs" in text and "timer_tree" in text
        assert "UnknownVerb" in text
        assert "20" in text
    finally:
        stack.close()


def test_repl_baseline_check_flags_scenario_2():
    stack = Stack()
    try:
        text, state = run_scripted_repl(stack, [
            "baseline build 30 1",
            "inject scenario=2",
            "baseline check 30 1",
        ])
        assert "UNEXPECTED_TASK" in text and "tExfil" in text
        assert any(a.detail.startswith("UNEXPECTED_TASK") for a in state.alerts)
    finally:
        stack.close()
