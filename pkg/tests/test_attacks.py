"""Structural postconditions of the ten attack scenarios."""

import hashlib

import pytest

from diver.device import Device, inject_attack, nominal_fixture
from diver.device.types import SUSPEND
from diver.errors import InvalidScenario


def fresh():
    return Device(nominal_fixture(42))


def names(device):
    return {t.name for t in device.tasks}


def module_map(device):
    return {m.name: m for m in device.modules}


def test_scenario_1_kernel_module_and_task():
    d = fresh()
    inject_attack(d, 1)
    assert "modFlood" in module_map(d)
    assert module_map(d)["modFlood"].kind == "kernel_module"
    assert "tFlood" in names(d)
    flood = d.find_task_by_name("tFlood")
    assert flood.owner_module == "modFlood"
    # attacker code is really mapped
    assert d.read_memory(flood.pc, 4)


def test_scenario_2_rtp_and_task():
    d = fresh()
    inject_attack(d, 2)
    assert module_map(d)["rtpExfil"].kind == "rtp"
    assert "tExfil" in names(d)


def test_scenario_3_same_names_one_hash_changed():
    d = fresh()
    before = {m.name: hashlib.sha256(m.segment[:4096]).hexdigest()
              for m in d.modules}
    inject_attack(d, 3)
    after = {m.name: hashlib.sha256(m.segment[:4096]).hexdigest()
             for m in d.modules}
    assert set(before) == set(after)
    changed = [n for n in before if before[n] != after[n]]
    assert changed == ["netDrv"]
    # memory matches the new module bytes
    mod = module_map(d)["netDrv"]
    assert d.read_memory(mod.load_address, 64) == mod.segment[:64]


def test_scenario_4_period_changes_only_one_node():
    d = fresh()
    before = {n.timer_id: n.period_ticks for n in d.timer_root.walk()}
    inject_attack(d, 4)
    after = {n.timer_id: n.period_ticks for n in d.timer_root.walk()}
    diffs = {k for k in before if before[k] != after[k]}
    assert diffs == {4}
    assert after[4] == 50


def test_scenario_5_callback_added_at_100ms_node():
    d = fresh()
    node = d.timer_root.find(2)
    count_before = len(node.callbacks)
    total_before = sum(len(n.callbacks) for n in d.timer_root.walk())
    inject_attack(d, 5)
    assert len(d.timer_root.find(2).callbacks) == count_before + 1
    assert sum(len(n.callbacks) for n in d.timer_root.walk()) == total_before + 1
    new_cb = d.timer_root.find(2).callbacks[-1]
    assert d.read_memory(new_cb.address, new_cb.segment_len)


def test_scenario_6_callback_redirected_same_id():
    d = fresh()
    cb_before = d.timer_root.find(4).callbacks[0]
    id_before, addr_before = cb_before.callback_id, cb_before.address
    inject_attack(d, 6)
    cb_after = d.timer_root.find(4).callbacks[0]
    assert cb_after.callback_id == id_before
    assert cb_after.address != addr_before
    assert d.read_memory(cb_after.address, cb_after.segment_len)


def test_scenario_7_controller_deleted():
    d = fresh()
    inject_attack(d, 7)
    assert "tCtrl" not in names(d)
    assert len(d.tasks) == 7


def test_scenario_8_controller_suspended_stays_suspended():
    d = fresh()
    inject_attack(d, 8)
    task = d.find_task_by_name("tCtrl")
    for _ in range(500):
        d.tick()
        assert task.state == SUSPEND


def test_scenario_9_blocking_loop_single_pc():
    d = fresh()
    inject_attack(d, 9)
    task = d.find_task_by_name("tCtrl")
    pcs = set()
    for _ in range(500):
        d.tick()
        pcs.add(task.pc)
    assert len(pcs) == 1
    assert d.read_memory(next(iter(pcs)), 4)


def test_scenario_10_priority_lowered():
    d = fresh()
    before = d.find_task_by_name("tCtrl").priority
    inject_attack(d, 10)
    after = d.find_task_by_name("tCtrl").priority
    assert before == 50 and after == 200


def test_invalid_scenario():
    d = fresh()
    for bad in (0, 11, -3):
        with pytest.raises(InvalidScenario):
            inject_attack(d, bad)
