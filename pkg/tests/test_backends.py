"""Back-end verb contracts, exercised directly against a device host."""

import base64
import hashlib

import pytest

from diver.command import Command
from diver.device import DeviceHost, inject_attack, nominal_fixture
from diver.errors import (BadArgument, ChannelOutOfRange, DivByZero,
                          FlashOutOfRange, NoSuchTask, NoSuchTimer, ParseError,
                          RateTooHigh, UnknownVerb, UnmappedAddress)
from diver.measurer import Backends


@pytest.fixture
def be():
    """Backends over a manually advanced device (time moves only on
    explicit host.advance, so snapshots stay put between calls)."""
    host = DeviceHost(nominal_fixture(42), tick_hz=0)
    backends = Backends(host)
    yield backends
    host.stop()


@pytest.fixture
def be_live():
    """Backends over a free-running device for windowed collectors."""
    host = DeviceHost(nominal_fixture(42), tick_hz=0).start()
    backends = Backends(host)
    yield backends
    host.stop()


def cmd(verb, **args):
    return Command(verb, args)


def test_tasks_nominal_eight_rows(be):
    rs = be.tasks(cmd("tasks"))
    assert rs.columns == ["task_id", "name"]
    assert len(rs.rows) == 8
    assert [r[0] for r in rs.rows] == sorted(r[0] for r in rs.rows)


def test_tasks_after_scenario_7(be):
    be.host.with_device(lambda d: inject_attack(d, 7))
    rs = be.tasks(cmd("tasks"))
    assert len(rs.rows) == 7
    assert "tCtrl" not in [r[1] for r in rs.rows]


def test_task_details_brief_column_subset(be):
    full = be.task_details(cmd("task_details", id="all"))
    brief = be.task_details(cmd("task_details", id="all", granularity="brief"))
    assert set(brief.columns) < set(full.columns)
    assert "pc" not in brief.columns and "sp" not in brief.columns


def test_task_details_suspended_and_missing(be):
    tid = be.tasks(cmd("tasks")).rows[0][0]
    be.host.with_device(lambda d: d.control_task(tid, "suspend"))
    rs = be.task_details(cmd("task_details", id=tid))
    assert rs.dicts()[0]["state"] == "SUSPEND"
    with pytest.raises(NoSuchTask):
        be.task_details(cmd("task_details", id=424242))


def test_task_details_snapshot_consistent(be):
    be.host.advance(777)
    a = be.task_details(cmd("task_details", id="all"))
    b = be.task_details(cmd("task_details", id="all"))
    assert a == b  # no time passed, identical snapshot content


def test_sysinfo_contains_config_and_monotonic_uptime(be):
    rs1 = be.sysinfo(cmd("sysinfo"))
    keys = {(r[0], r[1]) for r in rs1.rows}
    assert ("config", "net.ip") in keys
    be.host.advance(100)
    rs2 = be.sysinfo(cmd("sysinfo"))
    up1 = [r for r in rs1.rows if r[1] == "uptime_ticks"][0][2]
    up2 = [r for r in rs2.rows if r[1] == "uptime_ticks"][0][2]
    assert up2 == up1 + 100


def test_sysinfo_sees_config_edit(be):
    def edit(d):
        d.config["net.ip"] = "10.0.0.9"
    be.host.with_device(edit)
    rs = be.sysinfo(cmd("sysinfo"))
    assert ["config", "net.ip", "10.0.0.9"] in rs.rows


def test_modules_hash_rule(be):
    rs = be.modules(cmd("modules"))
    snap = be.host.snapshot()
    by_name = {m.name: m for m in snap.modules}
    for row in rs.dicts():
        seg = by_name[row["name"]].segment
        assert row["segment_hash"] == hashlib.sha256(seg[:4096]).hexdigest()


def test_modules_scenario_3_same_name_new_hash(be):
    before = {d["name"]: d["segment_hash"]
              for d in be.modules(cmd("modules")).dicts()}
    be.host.with_device(lambda d: inject_attack(d, 3))
    after = {d["name"]: d["segment_hash"]
             for d in be.modules(cmd("modules")).dicts()}
    assert set(before) == set(after)
    assert before["netDrv"] != after["netDrv"]


def test_read_memory_matches_module_bytes(be):
    snap = be.host.snapshot()
    mod = snap.modules[0]
    rs = be.read_memory(cmd("read_memory", addr=mod.load_address, len=16))
    data = base64.b64decode(rs.rows[0][2])
    assert data == mod.segment[:16]


def test_read_memory_full_segment_hash_consistency(be):
    snap = be.host.snapshot()
    mod = snap.modules[1]
    rs = be.read_memory(cmd("read_memory", addr=mod.load_address,
                            len=min(4096, len(mod.segment))))
    data = base64.b64decode(rs.rows[0][2])
    reported = {d["name"]: d["segment_hash"]
                for d in be.modules(cmd("modules")).dicts()}
    assert hashlib.sha256(data).hexdigest() == reported[mod.name]


def test_read_memory_errors(be):
    with pytest.raises(UnmappedAddress):
        be.read_memory(cmd("read_memory", addr=0x1, len=4))
    with pytest.raises(BadArgument):
        be.read_memory(cmd("read_memory", addr=0x0010_0000, len=65537))


def test_timer_tree_shape_and_hashes(be):
    rs = be.timer_tree(cmd("timer_tree"))
    assert rs.columns == ["depth", "timer_id", "period_ticks", "callback_id",
                          "address", "code_hash", "kind"]
    root = rs.rows[0]
    assert root[0] == 0 and root[2] == 10
    periods = {row[1]: row[2] for row in rs.rows}
    assert periods == {1: 10, 2: 100, 3: 1000, 4: 100}
    snap = be.host.snapshot()
    from diver.device import read_mem
    for row in rs.rows:
        if row[3] >= 0:
            code = read_mem(snap.memory, row[4],
                            _cb_len(snap, row[1], row[3]))
            assert row[5] == hashlib.sha256(code).hexdigest()


def _cb_len(snap, timer_id, callback_id):
    def find(node):
        if node.timer_id == timer_id:
            for cb in node.callbacks:
                if cb.callback_id == callback_id:
                    return cb.segment_len
        for child in node.children:
            got = find(child)
            if got:
                return got
        return None
    return find(snap.timer_root)


def test_timer_tree_scenarios(be):
    base = be.timer_tree(cmd("timer_tree")).rows
    be.host.with_device(lambda d: inject_attack(d, 6))
    redirected = be.timer_tree(cmd("timer_tree")).rows
    changed = [
        (b, a) for b, a in zip(base, redirected) if b != a]
    assert len(changed) == 1
    b, a = changed[0]
    assert b[3] == a[3] and b[4] != a[4] and b[5] != a[5]


def test_io_round_trip_and_range(be):
    be.io(cmd("io", action="write", port="aout", ch=3, value=2.5))
    rs = be.io(cmd("io", action="read", port="aout", ch=3))
    assert rs.rows[0] == ["aout", 3, 2.5]
    be.io(cmd("io", action="write", port="dout", ch=2, value=1))
    assert be.io(cmd("io", action="read", port="dout", ch=2)).rows[0][2] == 1
    be.io(cmd("io", action="write", port="dout", ch=2, value=0))
    assert be.io(cmd("io", action="read", port="dout", ch=2)).rows[0][2] == 0
    with pytest.raises(ChannelOutOfRange):
        be.io(cmd("io", action="read", port="ain", ch=99))


def test_syslog_write_then_tail(be):
    be.syslog(cmd("syslog", action="write", text="hello there"))
    rs = be.syslog(cmd("syslog", action="read", tail=1))
    assert rs.rows[-1][2] == "hello there"


def test_flash_round_trip_and_range(be):
    payload = base64.b64encode(b"\xde\xad\xbe\xef" * 2).decode()
    be.flash(cmd("flash", action="write", addr=0, data=payload))
    rs = be.flash(cmd("flash", action="read", addr=0, len=8))
    assert base64.b64decode(rs.rows[0][2]) == b"\xde\xad\xbe\xef" * 2
    with pytest.raises(FlashOutOfRange):
        be.flash(cmd("flash", action="read", addr=256 * 1024, len=1))


def test_datetime_get_set(be):
    rs = be.datetime(cmd("datetime", action="get"))
    first = rs.rows[0][0]
    be.datetime(cmd("datetime", action="set", epoch_ms=1_800_000_000_000))
    be.host.advance(250)
    rs = be.datetime(cmd("datetime", action="get"))
    assert rs.rows[0][0] == 1_800_000_000_000 + 250
    assert first != rs.rows[0][0]


def test_reset_verb_acks_then_host_resets(be):
    be.host.advance(5000)
    rs = be.reset(cmd("reset"))
    assert rs.kind == "ack"
    be.host.reset()
    assert be.host.uptime() == 0


def test_eval_arithmetic_device_reads_and_errors(be):
    assert be.eval(cmd("eval", expr="(2+3)*4")).rows[0][0] == 20
    be.io(cmd("io", action="write", port="ain", ch=3, value=2.5))
    assert be.eval(cmd("eval", expr="ain(3) > 2.0")).rows[0][0] == "true"
    with pytest.raises(DivByZero):
        be.eval(cmd("eval", expr="1/0"))
    with pytest.raises(ParseError):
        be.eval(cmd("eval", expr="1 +"))


def test_register_script_heartbeat_counts(be):
    rs = be.register_script(cmd("register_script", timer=3,
                                script='syslog write "hb"'))
    cb_id = rs.dicts()[0]["callback"]
    tree = be.timer_tree(cmd("timer_tree"))
    script_rows = [r for r in tree.rows if r[6] == "script"]
    assert len(script_rows) == 1 and script_rows[0][3] == cb_id
    # 1 s timer: ~10 entries over 10 simulated seconds
    be.host.advance(10_000)
    entries = be.host.with_device(lambda d: d.syslog_tail(2000))
    assert sum(1 for e in entries if e[2] == "hb") == 10
    be.unregister_script(cmd("unregister_script", cb=cb_id))
    tree = be.timer_tree(cmd("timer_tree"))
    assert not [r for r in tree.rows if r[6] == "script"]


def test_register_script_conditional_on_input(be):
    be.register_script(cmd("register_script", timer=2,
                           script='if ain(0) > 1 then syslog write "high"'))
    be.host.advance(1000)
    entries = be.host.with_device(lambda d: d.syslog_tail(2000))
    assert not [e for e in entries if e[2] == "high"]
    be.io(cmd("io", action="write", port="ain", ch=0, value=5.0))
    be.host.advance(100)  # one more 100-tick fire; drift keeps ain near 5
    entries = be.host.with_device(lambda d: d.syslog_tail(2000))
    assert [e for e in entries if e[2] == "high"]


def test_register_script_errors(be):
    with pytest.raises(NoSuchTimer):
        be.register_script(cmd("register_script", timer=99, script='syslog write "x"'))
    with pytest.raises(ParseError):
        be.register_script(cmd("register_script", timer=2, script="if broken"))


def test_script_code_hash_covers_source(be):
    src = 'syslog write "stamp"'
    rs = be.register_script(cmd("register_script", timer=2, script=src))
    cb_id = rs.dicts()[0]["callback"]
    row = [r for r in be.timer_tree(cmd("timer_tree")).rows if r[3] == cb_id][0]
    assert row[5] == hashlib.sha256(src.encode()).hexdigest()


def test_task_activity_against_recount(be_live):
    be = be_live
    rs = be.task_activity(cmd("task_activity", window=40, rate=100.0))
    assert rs.columns == ["name", "ready_fraction", "distinct_pc",
                          "state_histogram"]
    by_name = {r[0]: r for r in rs.rows}
    idle = by_name["tIdle"]
    assert idle[1] >= 0.9
    # histogram counts sum to the window for every task
    for name, _, _, hist in rs.rows:
        assert sum(int(kv.split(":")[1]) for kv in hist.split(",")) == 40


def test_task_activity_blocked_loop_single_pc(be_live):
    be = be_live
    be.host.with_device(lambda d: inject_attack(d, 9))
    rs = be.task_activity(cmd("task_activity", window=30, rate=100.0))
    row = [r for r in rs.rows if r[0] == "tCtrl"][0]
    assert row[2] == 1


def test_task_activity_argument_errors(be):
    with pytest.raises(BadArgument):
        be.task_activity(cmd("task_activity", window=0, rate=10.0))
    with pytest.raises(BadArgument):
        be.task_activity(cmd("task_activity", window=9, rate=10.0))
    with pytest.raises(RateTooHigh):
        be.task_activity(cmd("task_activity", window=20, rate=250.0))


def test_taskstats_instant_and_window(be_live):
    be = be_live
    instant = be.taskstats(cmd("taskstats"))
    assert len(instant.rows) == 8
    windowed = be.taskstats(cmd("taskstats", window=5, rate=50.0))
    assert len(windowed.rows) == 40
    assert windowed.columns[0] == "sample"
    ticks = sorted({r[1] for r in windowed.rows})
    assert len(ticks) == 5
    gaps = [b - a for a, b in zip(ticks, ticks[1:])]
    assert all(g >= 20 for g in gaps)  # 50 Hz -> 20-tick spacing


def test_dispatch_unknown_verb(be):
    with pytest.raises(UnknownVerb):
        be.dispatch(cmd("bogus", x=1))


def test_help_covers_every_verb(be):
    rs = be.help(cmd("help"))
    listed = {r[0] for r in rs.rows}
    assert listed == set(be.verbs())
    for verb in listed - {"stop"}:
        assert be._verbs[verb][0] is not None
