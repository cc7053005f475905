"""Device simulator: state machine, scheduler, timers, determinism."""

import pytest

from diver.device import (Device, DeviceHost, fixture_from_json,
                          fixture_to_json, nominal_fixture, profile_from_bias,
                          read_mem)
from diver.device.types import DELAY, READY, RUNNING, SUSPEND, BehaviorProfile
from diver.errors import (CorruptFile, DuplicateName, NoSuchTask,
                          UnmappedAddress, VersionMismatch)


def fresh(seed=42):
    return Device(nominal_fixture(seed))


def test_delay_countdown_reaches_ready():
    d = fresh()
    task = d.find_task_by_name("tDbSync")
    task.state = DELAY
    task.delay_remaining = 1
    d.tick()
    assert task.state in (READY, RUNNING)
    assert task.delay_remaining == 0


def test_root_timer_fires_on_divisibility():
    d = fresh()
    d.run_ticks(9)
    # root timer (10 ticks) has not fired: analog drift untouched
    assert (d.analog_in[0], d.analog_in[1]) == (0.0, 0.0)
    before = len(d.syslog)
    d.tick()  # uptime 10: root callback runs exactly once
    assert d.uptime_ticks == 10
    assert (d.analog_in[0], d.analog_in[1]) != (0.0, 0.0)
    # the 100-tick nodes must not have fired yet
    assert len(d.syslog) == before


def test_timer_divisibility_over_window():
    d = fresh()
    d.run_ticks(1000)
    # sensor_log on the 100-tick node: fires at 100, 200, ... 1000
    sensor_entries = [e for e in d.syslog if e[2].startswith("sensor")]
    assert len(sensor_entries) == 10
    assert all(tick % 100 == 0 for tick, _, _ in sensor_entries)
    db_entries = [e for e in d.syslog if "db sync" in e[2]]
    assert len(db_entries) == 1 and db_entries[0][0] == 1000


def test_ready_bias_fraction_and_determinism():
    def run():
        d = fresh(42)
        d.spawn_task("tProbe", 90, 0x0010_5000,
                     profile_from_bias(0.8, 4242, [0x0010_5000 + 4 * i
                                                   for i in range(5)]))
        states = []
        for _ in range(1000):
            d.tick()
            probe = d.find_task_by_name("tProbe")
            states.append(probe.state)
        return states

    first, second = run(), run()
    assert first == second
    ready_fraction = sum(1 for s in first if s in (READY, RUNNING)) / len(first)
    assert abs(ready_fraction - 0.8) < 0.05


def test_snapshot_stream_deterministic():
    a, b = fresh(), fresh()
    snaps_a, snaps_b = [], []
    for _ in range(50):
        a.run_ticks(137)
        b.run_ticks(137)
        snaps_a.append(a.snapshot())
        snaps_b.append(b.snapshot())
    assert snaps_a == snaps_b


def test_snapshot_no_mutation_equal():
    d = fresh()
    d.run_ticks(333)
    assert d.snapshot() == d.snapshot()


def test_scheduler_single_runner_max_priority():
    d = fresh()
    for _ in range(500):
        d.tick()
        running = [t for t in d.tasks if t.state == RUNNING]
        assert len(running) <= 1
        if running:
            best = min((t.priority, t.task_id) for t in d.tasks
                       if t.state in (READY, RUNNING))
            assert (running[0].priority, running[0].task_id) == best


def test_observable_state_folds_running():
    d = fresh()
    d.run_ticks(10)
    snap = d.snapshot()
    assert all(tv.state != RUNNING for tv in snap.tasks)
    if snap.running_task_id >= 0:
        view = next(tv for tv in snap.tasks if tv.task_id == snap.running_task_id)
        assert view.state == READY


def test_spawn_and_duplicate():
    d = fresh()
    tid = d.spawn_task("tNew", 70, 0x0010_6000,
                       profile_from_bias(0.5, 1, [0x0010_6000]))
    assert any(t.task_id == tid for t in d.tasks)
    with pytest.raises(DuplicateName):
        d.spawn_task("tCtrl", 70, 0x0010_6000,
                     profile_from_bias(0.5, 1, [0x0010_6000]))
    d.control_task(tid, "delete")
    assert all(t.task_id != tid for t in d.tasks)


def test_control_task_actions():
    d = fresh()
    task = d.find_task_by_name("tCtrl")
    d.control_task(task.task_id, "suspend")
    for _ in range(200):
        d.tick()
        assert task.state == SUSPEND
    d.control_task(task.task_id, "resume")
    assert task.state == READY
    d.control_task(task.task_id, "set_priority", priority=200)
    assert task.priority == 200
    d.control_task(task.task_id, "overwrite_code", addrs=[task.entry_point])
    pcs = set()
    for _ in range(300):
        d.tick()
        pcs.add(task.pc)
    assert pcs == {task.entry_point}
    with pytest.raises(NoSuchTask):
        d.control_task(99999, "delete")


def test_address_hygiene():
    d = fresh()
    d.run_ticks(50)
    snap = d.snapshot()
    for tv in snap.tasks:
        assert read_mem(snap.memory, tv.pc, 4)
    for node in d.timer_root.walk():
        for cb in node.callbacks:
            assert read_mem(snap.memory, cb.address, cb.segment_len)


def test_read_memory_matches_segments():
    d = fresh()
    mod = d.modules[0]
    data = d.read_memory(mod.load_address, 16)
    assert data == mod.segment[:16]
    with pytest.raises(UnmappedAddress):
        d.read_memory(0x0001_0000, 4)
    with pytest.raises(UnmappedAddress):
        d.read_memory(mod.load_address + len(mod.segment) - 2, 8)


def test_behavior_profile_validation():
    with pytest.raises(ValueError):
        BehaviorProfile(seed=1, transitions={"READY": {"READY": 0.6}},
                        pc_walk=[1])
    with pytest.raises(ValueError):
        BehaviorProfile(seed=1, transitions={"READY": {"READY": 1.0}},
                        pc_walk=[])


def test_io_and_flash_round_trip():
    d = fresh()
    d.io_write("aout", 3, 2.5)
    assert d.io_read("aout", 3) == 2.5
    d.io_write("dout", 1, 1)
    assert d.io_read("dout", 1) == 1
    d.io_write("dout", 1, 0)
    assert d.io_read("dout", 1) == 0
    d.flash_write(0, b"\x01\x02\x03\x04\x05\x06\x07\x08")
    assert d.flash_read(0, 8) == b"\x01\x02\x03\x04\x05\x06\x07\x08"


def test_fixture_json_round_trip():
    fixture = nominal_fixture(42)
    text = fixture_to_json(fixture)
    again = fixture_from_json(text)
    assert again == fixture
    # devices built from both are indistinguishable
    d1, d2 = Device(fixture), Device(again)
    d1.run_ticks(500)
    d2.run_ticks(500)
    assert d1.snapshot() == d2.snapshot()


def test_fixture_version_and_corrupt():
    text = fixture_to_json(nominal_fixture(1)).replace('"version": 1',
                                                       '"version": 0')
    with pytest.raises(VersionMismatch):
        fixture_from_json(text)
    with pytest.raises(CorruptFile):
        fixture_from_json("{not json")


def test_host_reset_new_ids_uptime_zero():
    host = DeviceHost(nominal_fixture(42), tick_hz=0)
    host.advance(5000)
    old_ids = {t.task_id for t in host.snapshot().tasks}
    fired = []
    host.on_reset(lambda: fired.append(True))
    host.reset()
    snap = host.snapshot()
    assert snap.tick == 0
    assert fired == [True]
    new_ids = {t.task_id for t in snap.tasks}
    assert old_ids.isdisjoint(new_ids)
    assert {t.name for t in snap.tasks} == {"tCtrl", "tNetRx", "tNetTx", "tLog",
                                            "tDbSync", "tWdg", "tShell", "tIdle"}


def test_host_wait_for_tick():
    host = DeviceHost(nominal_fixture(42), tick_hz=0).start()
    try:
        seen = host.wait_for_tick(2000, wall_timeout=30.0)
        assert seen >= 2000
    finally:
        host.stop()
