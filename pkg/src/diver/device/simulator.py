"""The device simulator core.

One tick is 1 ms of simulated time.  ``tick()`` advances countdowns,
moves each task through its behavior chain, schedules the highest
priority READY task, advances its program counter, and fires every timer
whose period divides the new uptime.  All mutation goes through a single
owner (see :mod:`diver.device.host`); snapshots are immutable and safe
to share across threads.
"""

from __future__ import annotations

import random
from typing import Callable, Dict, List, Optional

from ..errors import (ChannelOutOfRange, DuplicateName, FlashOutOfRange,
                      NoSuchTask, UnmappedAddress)
from .types import (DELAY, PEND_T, READY, RUNNING, SUSPEND, BehaviorProfile,
                    CallbackView, DeviceSnapshot, LoadedModule, ModuleView,
                    SimTask, TaskView, TimerNode, TimerView)

IO_PORTS = ("ain", "aout", "din", "dout")


def read_mem(memory: Dict[int, bytes], addr: int, length: int) -> bytes:
    """Read ``length`` bytes from a sparse segment map; raises
    UnmappedAddress if any byte is not backed by a segment."""
    if length < 0:
        raise UnmappedAddress("negative length")
    out = bytearray()
    pos = addr
    remaining = length
    while remaining > 0:
        seg_start = None
        for start, seg in memory.items():
            if start <= pos < start + len(seg):
                seg_start, seg_bytes = start, seg
                break
        if seg_start is None:
            raise UnmappedAddress(f"address {pos:#x} is not mapped")
        off = pos - seg_start
        chunk = min(remaining, len(seg_bytes) - off)
        out += seg_bytes[off:off + chunk]
        pos += chunk
        remaining -= chunk
    return bytes(out)


class _ScriptEnv:
    """Expression/script environment bound to a device."""

    def __init__(self, device: "Device"):
        self._d = device

    def call(self, name: str, args):
        d = self._d
        if name == "uptime":
            return d.uptime_ticks
        ch = int(args[0])
        if name == "ain":
            return d.io_read("ain", ch)
        if name == "aout":
            return d.io_read("aout", ch)
        if name == "din":
            return d.io_read("din", ch)
        if name == "dout":
            return d.io_read("dout", ch)
        raise ChannelOutOfRange(f"unknown read {name}")

    def syslog_write(self, text: str) -> None:
        self._d.syslog_write("script", text)

    def io_write(self, port: str, ch: int, value) -> None:
        self._d.io_write(port, ch, value)


class Device:
    """Simulated device state plus the tick state machine."""

    RTC_BASE_MS = 1_700_000_000_000

    def __init__(self, fixture, task_id_start: int = 1):
        from .fixture import build_device_state  # circular-safe late import
        self.uptime_ticks = 0
        self.rtc_base_ms = self.RTC_BASE_MS
        self.kernel_version = ""
        self.config: Dict[str, str] = {}
        self.syslog: List[tuple] = []
        self.syslog_capacity = 1024
        self.flash = bytearray()
        self.analog_in: List[float] = []
        self.analog_out: List[float] = []
        self.digital_in: List[int] = []
        self.digital_out: List[int] = []
        self.tasks: List[SimTask] = []
        self.timer_root: Optional[TimerNode] = None
        self.modules: List[LoadedModule] = []
        self.memory: Dict[int, bytes] = {}
        self.rng = random.Random()
        self.native_callbacks: Dict[str, Callable[["Device"], None]] = dict(_NATIVE)
        self.script_env = _ScriptEnv(self)
        self._next_task_id = task_id_start
        self._next_callback_id = 100
        self._next_blob_addr = 0x00C0_0000
        self._running: Optional[SimTask] = None
        self.fixture = fixture
        build_device_state(self, fixture)

    # --- identifiers ---

    def alloc_task_id(self) -> int:
        tid = self._next_task_id
        self._next_task_id += 1
        return tid

    def alloc_callback_id(self) -> int:
        cid = self._next_callback_id
        self._next_callback_id += 1
        return cid

    def alloc_blob(self, data: bytes) -> int:
        """Map a small code/script blob at the next free blob address."""
        addr = self._next_blob_addr
        self._next_blob_addr += (len(data) + 0xFFF) & ~0xFFF or 0x1000
        self.map_segment(addr, data)
        return addr

    @property
    def rtc_ms(self) -> int:
        return self.rtc_base_ms + self.uptime_ticks

    # --- tick ---

    def tick(self) -> None:
        self.uptime_ticks += 1
        up = self.uptime_ticks
        for t in self.tasks:
            s = t.state
            if s == SUSPEND:
                continue
            if s == DELAY or s == PEND_T:
                t.delay_remaining -= 1
                if t.delay_remaining <= 0:
                    t.delay_remaining = 0
                    t.state = READY
                continue
            if s == RUNNING:
                s = READY
                t.state = READY
            row = t._rows.get(s)
            if row is None:
                continue
            r = t._rng.random()
            for cum, tgt in row:
                if r < cum:
                    if tgt != s:
                        t.state = tgt
                        if tgt == DELAY:
                            t.delay_remaining = t._rng.randint(*t.behavior.delay_range)
                        elif tgt == PEND_T:
                            t.delay_remaining = t._rng.randint(*t.behavior.pend_t_range)
                    break
        best = None
        for t in self.tasks:
            if t.state == READY and (best is None or
                                     (t.priority, t.task_id) < (best.priority, best.task_id)):
                best = t
        self._running = best
        if best is not None:
            best.state = RUNNING
            i = best._pc_index + 1
            if i >= len(best._pc_walk):
                i = 0
            best._pc_index = i
            best.pc = best._pc_walk[i]
        self._fire_timers(self.timer_root, up)

    def run_ticks(self, n: int) -> None:
        for _ in range(n):
            self.tick()

    def _fire_timers(self, node: TimerNode, up: int) -> None:
        if up % node.period_ticks == 0:
            for cb in node.callbacks:
                if cb.kind == "native":
                    fn = self.native_callbacks.get(cb.native_name)
                    if fn is not None:
                        fn(self)
                elif cb.script is not None:
                    try:
                        cb.script.run(self.script_env)
                    except Exception as e:  # scripts must not kill the sim
                        self.syslog_write("error", f"script callback {cb.callback_id}: {e}")
        for child in node.children:
            self._fire_timers(child, up)

    # --- task management ---

    def find_task(self, task_id: int) -> SimTask:
        for t in self.tasks:
            if t.task_id == task_id:
                return t
        raise NoSuchTask(f"no task with id {task_id}")

    def find_task_by_name(self, name: str) -> Optional[SimTask]:
        for t in self.tasks:
            if t.name == name:
                return t
        return None

    def spawn_task(self, name: str, priority: int, entry_point: int,
                   behavior: BehaviorProfile,
                   owner_module: Optional[str] = None) -> int:
        if not name:
            raise DuplicateName("task name must be non-empty")
        if self.find_task_by_name(name) is not None:
            raise DuplicateName(f"task {name!r} already exists")
        task = SimTask(self.alloc_task_id(), name, priority, entry_point,
                       behavior, owner_module)
        self.tasks.append(task)
        return task.task_id

    def control_task(self, task_id: int, action: str, *,
                     priority: Optional[int] = None,
                     addrs: Optional[List[int]] = None) -> None:
        t = self.find_task(task_id)
        if action == "delete":
            self.tasks.remove(t)
        elif action == "suspend":
            t.state = SUSPEND
            t.delay_remaining = 0
        elif action == "resume":
            if t.state == SUSPEND:
                t.state = READY
        elif action == "set_priority":
            if priority is None:
                raise ValueError("set_priority needs a priority")
            t.priority = int(priority)
        elif action == "overwrite_code":
            if not addrs:
                raise ValueError("overwrite_code needs addresses")
            t.set_pc_walk(list(addrs))
        else:
            raise ValueError(f"unknown control action {action!r}")

    # --- peripherals ---

    def io_read(self, port: str, ch: int):
        arr = self._port(port)
        if not 0 <= ch < len(arr):
            raise ChannelOutOfRange(f"{port}[{ch}] out of range")
        return arr[ch]

    def io_write(self, port: str, ch: int, value) -> None:
        arr = self._port(port)
        if not 0 <= ch < len(arr):
            raise ChannelOutOfRange(f"{port}[{ch}] out of range")
        if port in ("din", "dout"):
            arr[ch] = 1 if value else 0
        else:
            arr[ch] = float(value)

    def _port(self, port: str):
        if port == "ain":
            return self.analog_in
        if port == "aout":
            return self.analog_out
        if port == "din":
            return self.digital_in
        if port == "dout":
            return self.digital_out
        raise ChannelOutOfRange(f"unknown port {port!r}")

    def syslog_write(self, severity: str, text: str) -> None:
        self.syslog.append((self.uptime_ticks, severity, text))
        if len(self.syslog) > self.syslog_capacity:
            del self.syslog[:len(self.syslog) - self.syslog_capacity]

    def syslog_tail(self, n: int) -> List[tuple]:
        if n <= 0:
            return []
        return list(self.syslog[-n:])

    def flash_read(self, addr: int, length: int) -> bytes:
        if addr < 0 or length < 0 or addr + length > len(self.flash):
            raise FlashOutOfRange(f"flash range {addr:#x}+{length} out of bounds")
        return bytes(self.flash[addr:addr + length])

    def flash_write(self, addr: int, data: bytes) -> None:
        if addr < 0 or addr + len(data) > len(self.flash):
            raise FlashOutOfRange(f"flash range {addr:#x}+{len(data)} out of bounds")
        self.flash[addr:addr + len(data)] = data

    def read_memory(self, addr: int, length: int) -> bytes:
        return read_mem(self.memory, addr, length)

    def map_segment(self, start: int, data: bytes) -> None:
        for s, seg in self.memory.items():
            if start < s + len(seg) and s < start + len(data):
                raise ValueError(f"segment at {start:#x} overlaps {s:#x}")
        self.memory[start] = bytes(data)

    def replace_segment(self, start: int, data: bytes) -> None:
        if start not in self.memory:
            raise UnmappedAddress(f"no segment at {start:#x}")
        self.memory[start] = bytes(data)

    # --- snapshot ---

    def snapshot(self) -> DeviceSnapshot:
        tasks = tuple(
            TaskView(t.task_id, t.name,
                     READY if t.state == RUNNING else t.state,
                     t.priority, t.pc, t.sp, t.link_register, t.entry_point,
                     t.owner_module, t.delay_remaining)
            for t in sorted(self.tasks, key=lambda x: x.task_id))
        modules = tuple(
            ModuleView(m.name, m.kind, m.file_path, m.load_address, m.segment,
                       m.jump_table_addr, m.control_fn_addr)
            for m in self.modules)
        running = self._running
        return DeviceSnapshot(
            tick=self.uptime_ticks,
            rtc_ms=self.rtc_ms,
            kernel_version=self.kernel_version,
            running_task_id=running.task_id if running is not None and running in self.tasks else -1,
            tasks=tasks,
            modules=modules,
            timer_root=_freeze_timer(self.timer_root),
            config=dict(self.config),
            memory=dict(self.memory),
            analog_in=tuple(self.analog_in),
            analog_out=tuple(self.analog_out),
            digital_in=tuple(self.digital_in),
            digital_out=tuple(self.digital_out),
        )


def _freeze_timer(node: TimerNode) -> TimerView:
    return TimerView(
        timer_id=node.timer_id,
        period_ticks=node.period_ticks,
        divisor_from_parent=node.divisor_from_parent,
        callbacks=tuple(CallbackView(cb.callback_id, cb.address,
                                     cb.segment_len, cb.kind)
                        for cb in node.callbacks),
        children=tuple(_freeze_timer(c)
                       for c in sorted(node.children, key=lambda n: n.timer_id)),
    )


# --- native timer callback behaviors ---

def _cb_sys_tick(d: Device) -> None:
    # Environmental drift on the first analog inputs.
    for ch in range(2):
        v = d.analog_in[ch] + d.rng.uniform(-0.01, 0.01)
        d.analog_in[ch] = min(10.0, max(-10.0, v))


def _cb_io_scan(d: Device) -> None:
    d.analog_out[0] = d.analog_in[0]
    d.digital_out[0] = 1 if d.analog_in[0] > 0.5 else 0


def _cb_sensor_log(d: Device) -> None:
    d.syslog_write("info", f"sensor a0={d.analog_in[0]:.3f}")


def _cb_db_flush(d: Device) -> None:
    d.syslog_write("info", "db sync ok")


def _cb_exfil_pump(d: Device) -> None:
    # Injected attack behavior: periodic staging burst.
    d.digital_out[1] ^= 1


def _cb_sensor_log_spoof(d: Device) -> None:
    d.syslog_write("info", "sensor a0=0.000")


_NATIVE = {
    "sys_tick": _cb_sys_tick,
    "io_scan": _cb_io_scan,
    "sensor_log": _cb_sensor_log,
    "db_flush": _cb_db_flush,
    "exfil_pump": _cb_exfil_pump,
    "sensor_log_spoof": _cb_sensor_log_spoof,
}
