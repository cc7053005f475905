"""Measurement/action back-ends, one per command verb.

Every response derives from a single device snapshot taken under the
host lock, so aggregates recomputed from raw samples always agree with
what was reported.  Windowed collectors (``taskstats window=...``,
``task_activity``) pace on simulated time: one sample every
``1000/rate_hz`` ticks, which keeps statistics identical whether the
device runs real-time or accelerated.
"""

from __future__ import annotations

import base64
import hashlib
import time
from collections import Counter
from typing import Dict, List, Optional

from ..command import Command
from ..errors import (BadArgument, DiverError, NoSuchTask, NoSuchTimer,
                      ParseError, RateTooHigh, UnknownVerb)
from ..recordset import RecordSet, ack
from ..scripting import compile_expression, compile_script
from ..device.attacks import inject_attack
from ..device.host import DeviceHost
from ..device.simulator import read_mem
from ..device.types import DeviceSnapshot, TimerCallback

MAX_MEMORY_READ = 65536
MAX_RATE_HZ = 100.0

TASK_DETAIL_COLUMNS = ["task_id", "name", "state", "priority", "pc", "sp",
                       "link_register", "entry_point"]
TASK_BRIEF_COLUMNS = ["task_id", "name", "state", "priority"]
TASKSTATS_COLUMNS = ["sample", "tick", "task_id", "name", "state",
                     "priority", "pc", "entry_point"]
TIMER_COLUMNS = ["depth", "timer_id", "period_ticks", "callback_id",
                 "address", "code_hash", "kind"]


def segment_hash(segment: bytes) -> str:
    return hashlib.sha256(segment[:min(4096, len(segment))]).hexdigest()


def timer_rows(snap: DeviceSnapshot) -> List[list]:
    """Canonical pre-order timer tree rows, one per callback."""
    rows: List[list] = []

    def visit(node, depth):
        if node.callbacks:
            for cb in node.callbacks:
                try:
                    code = read_mem(snap.memory, cb.address, cb.segment_len)
                    code_hash = hashlib.sha256(code).hexdigest()
                except DiverError:
                    code_hash = ""
                rows.append([depth, node.timer_id, node.period_ticks,
                             cb.callback_id, cb.address, code_hash, cb.kind])
        else:
            rows.append([depth, node.timer_id, node.period_ticks, -1, 0, "", ""])
        for child in node.children:
            visit(child, depth + 1)

    visit(snap.timer_root, 0)
    return rows


class Backends:
    """Dispatch table for the implant's command verbs."""

    def __init__(self, host: DeviceHost):
        self.host = host
        self._verbs = {
            "help": (self.help, "list available verbs"),
            "ping": (self.ping, "liveness check"),
            "tasks": (self.tasks, "list live tasks (id, name)"),
            "task_details": (self.task_details, "per-task registers and state"),
            "task_activity": (self.task_activity, "windowed per-task activity aggregate"),
            "taskstats": (self.taskstats, "raw task state samples (instant or windowed)"),
            "sysinfo": (self.sysinfo, "kernel version, uptime, config"),
            "modules": (self.modules, "loaded modules with segment hashes"),
            "read_memory": (self.read_memory, "read a device memory range"),
            "timer_tree": (self.timer_tree, "timer hierarchy with callback hashes"),
            "io": (self.io, "read/write analog and digital channels"),
            "syslog": (self.syslog, "read/write the system log"),
            "flash": (self.flash, "read/write flash"),
            "datetime": (self.datetime, "get/set device time"),
            "eval": (self.eval, "evaluate an expression on the device"),
            "register_script": (self.register_script, "attach a script to a timer"),
            "unregister_script": (self.unregister_script, "detach a script callback"),
            "inject": (self.inject, "test harness: apply an attack scenario"),
            "reset": (self.reset, "reinitialize the device from its fixture"),
            "stop": (None, "cancel a stream subscription"),
        }

    STREAMABLE = {"tasks", "task_details", "taskstats", "sysinfo", "modules",
                  "timer_tree", "io", "syslog"}

    def verbs(self) -> List[str]:
        return sorted(self._verbs)

    def dispatch(self, cmd: Command) -> RecordSet:
        entry = self._verbs.get(cmd.verb)
        if entry is None or entry[0] is None:
            raise UnknownVerb(f"no such verb: {cmd.verb}")
        return entry[0](cmd)

    # --- verbs ---

    def help(self, cmd: Command) -> RecordSet:
        rows = [[verb, summary] for verb, (_, summary) in sorted(self._verbs.items())]
        return RecordSet("help", ["verb", "summary"], rows, self.host.uptime())

    def ping(self, cmd: Command) -> RecordSet:
        return ack(self.host.uptime(), "pong")

    def tasks(self, cmd: Command) -> RecordSet:
        snap = self.host.snapshot()
        rows = [[t.task_id, t.name] for t in snap.tasks]
        return RecordSet("tasks", ["task_id", "name"], rows, snap.tick)

    def task_details(self, cmd: Command) -> RecordSet:
        granularity = cmd.get_str("granularity", "full")
        if granularity not in ("brief", "full"):
            raise BadArgument("granularity must be brief or full")
        snap = self.host.snapshot()
        which = cmd.args.get("id", "all")
        if which == "all":
            selected = snap.tasks
        else:
            if not isinstance(which, int):
                raise BadArgument("id must be an integer or all")
            selected = [t for t in snap.tasks if t.task_id == which]
            if not selected:
                raise NoSuchTask(f"no task with id {which}")
        if granularity == "brief":
            rows = [[t.task_id, t.name, t.state, t.priority] for t in selected]
            return RecordSet("task_details", TASK_BRIEF_COLUMNS, rows, snap.tick)
        rows = [[t.task_id, t.name, t.state, t.priority, t.pc, t.sp,
                 t.link_register, t.entry_point] for t in selected]
        return RecordSet("task_details", TASK_DETAIL_COLUMNS, rows, snap.tick)

    # --- sampling ---

    def _window_args(self, cmd: Command, minimum: int):
        window = cmd.get_int("window")
        rate = cmd.get_float("rate", 1.0)
        if window is None or window < minimum:
            raise BadArgument(f"window must be >= {minimum}")
        if rate is None or rate <= 0:
            raise BadArgument("rate must be positive")
        if rate > MAX_RATE_HZ:
            raise RateTooHigh(f"rate {rate} exceeds {MAX_RATE_HZ} Hz")
        return window, rate

    def _collect(self, window: int, rate: float) -> List[DeviceSnapshot]:
        interval = max(1, int(round(1000.0 / rate)))
        start = self.host.uptime()
        # Generous wall budget: a real-time device needs window/rate seconds.
        deadline = time.monotonic() + 30.0 + 3.0 * window * interval / 1000.0
        snaps = []
        for i in range(window):
            target = start + (i + 1) * interval
            self.host.wait_for_tick(target, max(0.1, deadline - time.monotonic()))
            snaps.append(self.host.snapshot())
        return snaps

    def taskstats(self, cmd: Command) -> RecordSet:
        if "window" not in cmd.args:
            snap = self.host.snapshot()
            rows = [[snap.tick, t.task_id, t.name, t.state, t.priority, t.pc,
                     t.entry_point] for t in snap.tasks]
            return RecordSet("taskstats", TASKSTATS_COLUMNS[1:], rows, snap.tick)
        window, rate = self._window_args(cmd, minimum=1)
        snaps = self._collect(window, rate)
        rows = []
        for i, snap in enumerate(snaps):
            for t in snap.tasks:
                rows.append([i, snap.tick, t.task_id, t.name, t.state,
                             t.priority, t.pc, t.entry_point])
        return RecordSet("taskstats", TASKSTATS_COLUMNS, rows,
                         snaps[-1].tick if snaps else self.host.uptime())

    def task_activity(self, cmd: Command) -> RecordSet:
        window, rate = self._window_args(cmd, minimum=10)
        snaps = self._collect(window, rate)
        states: Dict[str, Counter] = {}
        pcs: Dict[str, set] = {}
        seen: Dict[str, int] = {}
        for snap in snaps:
            for t in snap.tasks:
                states.setdefault(t.name, Counter())[t.state] += 1
                pcs.setdefault(t.name, set()).add(t.pc)
                seen[t.name] = seen.get(t.name, 0) + 1
        rows = []
        for name in sorted(seen):
            hist = states[name]
            total = seen[name]
            ready_fraction = hist.get("READY", 0) / total
            hist_text = ",".join(f"{s}:{hist[s]}" for s in sorted(hist))
            rows.append([name, ready_fraction, len(pcs[name]), hist_text])
        return RecordSet("task_activity",
                         ["name", "ready_fraction", "distinct_pc", "state_histogram"],
                         rows, snaps[-1].tick)

    # --- device state reads ---

    def sysinfo(self, cmd: Command) -> RecordSet:
        snap = self.host.snapshot()
        rows = [["sys", "kernel.version", snap.kernel_version],
                ["sys", "uptime_ticks", snap.tick],
                ["sys", "rtc_ms", snap.rtc_ms]]
        for key in sorted(snap.config):
            rows.append(["config", key, snap.config[key]])
        return RecordSet("sysinfo", ["section", "key", "value"], rows, snap.tick)

    def modules(self, cmd: Command) -> RecordSet:
        snap = self.host.snapshot()
        rows = [[m.name, m.kind, m.file_path, m.load_address,
                 m.jump_table_addr, m.control_fn_addr, segment_hash(m.segment)]
                for m in snap.modules]
        return RecordSet("modules",
                         ["name", "kind", "file_path", "load_address",
                          "jump_table", "control_fn", "segment_hash"],
                         rows, snap.tick)

    def read_memory(self, cmd: Command) -> RecordSet:
        addr = cmd.get_int("addr")
        length = cmd.get_int("len")
        if addr is None or length is None:
            raise BadArgument("read_memory needs addr and len")
        if not 0 <= length <= MAX_MEMORY_READ:
            raise BadArgument(f"len must be in 0..{MAX_MEMORY_READ}")
        snap = self.host.snapshot()
        data = read_mem(snap.memory, addr, length)
        return RecordSet("memory", ["addr", "len", "data"],
                         [[addr, length, base64.b64encode(data).decode()]],
                         snap.tick)

    def timer_tree(self, cmd: Command) -> RecordSet:
        snap = self.host.snapshot()
        return RecordSet("timer_tree", TIMER_COLUMNS, timer_rows(snap), snap.tick)

    # --- actions ---

    def io(self, cmd: Command) -> RecordSet:
        action = cmd.get_str("action")
        port = cmd.get_str("port")
        ch = cmd.get_int("ch")
        if action not in ("read", "write") or port is None or ch is None:
            raise BadArgument("io needs action=read|write port ch")
        if action == "read":
            value = self.host.with_device(lambda d: d.io_read(port, ch))
            if isinstance(value, int) and port in ("din", "dout"):
                value = int(value)
            return RecordSet("io", ["port", "ch", "value"],
                             [[port, ch, value]], self.host.uptime())
        if "value" not in cmd.args:
            raise BadArgument("io write needs value")
        value = cmd.args["value"]
        if not isinstance(value, (int, float)):
            raise BadArgument("io value must be numeric")
        self.host.with_device(lambda d: d.io_write(port, ch, value))
        return ack(self.host.uptime())

    def syslog(self, cmd: Command) -> RecordSet:
        action = cmd.get_str("action", "read")
        if action == "read":
            tail = cmd.get_int("tail", 10)
            entries = self.host.with_device(lambda d: d.syslog_tail(tail))
            rows = [[tick, severity, text] for tick, severity, text in entries]
            return RecordSet("syslog", ["tick", "severity", "text"], rows,
                             self.host.uptime())
        if action == "write":
            text = cmd.get_str("text")
            if text is None:
                raise BadArgument("syslog write needs text")
            severity = cmd.get_str("severity", "info")
            self.host.with_device(lambda d: d.syslog_write(severity, text))
            return ack(self.host.uptime())
        raise BadArgument("syslog action must be read or write")

    def flash(self, cmd: Command) -> RecordSet:
        action = cmd.get_str("action")
        addr = cmd.get_int("addr")
        if action == "read":
            length = cmd.get_int("len")
            if addr is None or length is None:
                raise BadArgument("flash read needs addr and len")
            data = self.host.with_device(lambda d: d.flash_read(addr, length))
            return RecordSet("flash", ["addr", "len", "data"],
                             [[addr, length, base64.b64encode(data).decode()]],
                             self.host.uptime())
        if action == "write":
            raw = cmd.get_str("data")
            if addr is None or raw is None:
                raise BadArgument("flash write needs addr and data")
            try:
                data = base64.b64decode(raw, validate=True)
            except Exception:
                raise BadArgument("data must be base64") from None
            self.host.with_device(lambda d: d.flash_write(addr, data))
            return ack(self.host.uptime())
        raise BadArgument("flash action must be read or write")

    def datetime(self, cmd: Command) -> RecordSet:
        action = cmd.get_str("action", "get")
        if action == "get":
            snap = self.host.snapshot()
            return RecordSet("datetime", ["rtc_ms"], [[snap.rtc_ms]], snap.tick)
        if action == "set":
            epoch_ms = cmd.get_int("epoch_ms")
            if epoch_ms is None:
                raise BadArgument("datetime set needs epoch_ms")

            def setter(d):
                d.rtc_base_ms = epoch_ms - d.uptime_ticks
            self.host.with_device(setter)
            return ack(self.host.uptime())
        raise BadArgument("datetime action must be get or set")

    def eval(self, cmd: Command) -> RecordSet:
        expr = cmd.get_str("expr")
        if expr is None:
            raise BadArgument("eval needs expr")
        fn = compile_expression(expr)
        value = self.host.with_device(lambda d: fn(d.script_env))
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif not isinstance(value, (int, float)):
            value = str(value)
        return RecordSet("eval", ["value"], [[value]], self.host.uptime())

    def register_script(self, cmd: Command) -> RecordSet:
        timer_id = cmd.get_int("timer")
        source = cmd.get_str("script")
        if timer_id is None or source is None:
            raise BadArgument("register_script needs timer and script")
        script = compile_script(source)

        def attach(d):
            node = d.timer_root.find(timer_id)
            if node is None:
                raise NoSuchTimer(f"no timer with id {timer_id}")
            blob = source.encode()
            addr = d.alloc_blob(blob)
            cb = TimerCallback(callback_id=d.alloc_callback_id(), address=addr,
                               segment_len=len(blob), kind="script",
                               script=script, source=source)
            node.callbacks.append(cb)
            return cb.callback_id

        callback_id = self.host.with_device(attach)
        return ack(self.host.uptime(), callback=callback_id)

    def unregister_script(self, cmd: Command) -> RecordSet:
        callback_id = cmd.get_int("cb")
        if callback_id is None:
            raise BadArgument("unregister_script needs cb")

        def detach(d):
            for node in d.timer_root.walk():
                for cb in node.callbacks:
                    if cb.callback_id == callback_id and cb.kind == "script":
                        node.callbacks.remove(cb)
                        return True
            return False

        if not self.host.with_device(detach):
            raise BadArgument(f"no script callback {callback_id}")
        return ack(self.host.uptime())

    def inject(self, cmd: Command) -> RecordSet:
        scenario = cmd.get_int("scenario")
        if scenario is None:
            raise BadArgument("inject needs scenario")
        self.host.with_device(lambda d: inject_attack(d, scenario))
        return ack(self.host.uptime(), scenario=scenario)

    def reset(self, cmd: Command) -> RecordSet:
        # The server acks before calling host.reset() so the requesting
        # client gets a response before its session is terminated.
        return ack(self.host.uptime(), "reset scheduled")
