"""Device fixtures: the nominal desk-scale device and a versioned JSON
file format so a device definition can be shipped to the CLI.

The nominal device: 8 tasks (controller, logger, net rx/tx, db sync,
watchdog, shell stub, idle), 3 loadable modules plus a kernel segment,
a 4-node timer tree rooted at 10 ms, 16 analog and 32 digital channels.
All segment bytes, profile seeds, and behavior draws derive from the
fixture seed, so two devices built from the same fixture are identical.
"""

from __future__ import annotations

import base64
import hashlib
import json
import random
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

from ..errors import CorruptFile, VersionMismatch
from .types import (BehaviorProfile, LoadedModule, TimerCallback, TimerNode,
                    profile_from_bias)

FIXTURE_VERSION = 1

KERNEL_BASE = 0x0010_0000
KERNEL_SIZE = 0x1_0000


@dataclass
class ModuleSpec:
    name: str
    kind: str
    file_path: str
    load_address: int
    segment_b64: str
    jump_table_off: int = 0x100
    control_fn_off: int = 0x200

    @property
    def segment(self) -> bytes:
        return base64.b64decode(self.segment_b64)


@dataclass
class TaskSpec:
    name: str
    priority: int
    entry_point: int
    owner_module: Optional[str]
    seed: int
    transitions: Dict[str, Dict[str, float]]
    pc_walk: List[int]
    ready_bias: float
    delay_range: Tuple[int, int] = (20, 40)
    pend_t_range: Tuple[int, int] = (80, 120)

    def profile(self) -> BehaviorProfile:
        return BehaviorProfile(seed=self.seed, transitions=self.transitions,
                               pc_walk=self.pc_walk, ready_bias=self.ready_bias,
                               delay_range=tuple(self.delay_range),
                               pend_t_range=tuple(self.pend_t_range))


@dataclass
class TimerSpec:
    timer_id: int
    divisor: int                       # root: period in ticks
    callbacks: List[dict] = field(default_factory=list)
    children: List["TimerSpec"] = field(default_factory=list)


@dataclass
class FixtureSpec:
    seed: int
    config: Dict[str, str]
    modules: List[ModuleSpec]
    tasks: List[TaskSpec]
    timer: TimerSpec
    kernel_version: str = "VxSim 5.5.1"
    analog_channels: int = 16
    digital_channels: int = 32
    flash_size: int = 256 * 1024
    version: int = FIXTURE_VERSION


def pattern_bytes(tag: str, seed: int, n: int) -> bytes:
    """Deterministic filler bytes, stable across processes and runs."""
    out = bytearray()
    h = hashlib.sha256(f"{tag}:{seed}".encode()).digest()
    while len(out) < n:
        out += h
        h = hashlib.sha256(h).digest()
    return bytes(out[:n])


def _stable_seed(base: int, tag: str) -> int:
    digest = hashlib.sha256(f"{base}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def nominal_fixture(seed: int = 42) -> FixtureSpec:
    mods = {
        "netDrv": (0x0040_0000, 8192, "kernel_module", "/flash/netDrv.o"),
        "ctrlApp": (0x0050_0000, 12288, "c_application", "/flash/ctrlApp.out"),
        "logDaemon": (0x0060_0000, 8192, "rtp", "/flash/logDaemon.vxe"),
    }
    modules = [
        ModuleSpec(name=name, kind=kind, file_path=path, load_address=load,
                   segment_b64=base64.b64encode(pattern_bytes(name, seed, size)).decode())
        for name, (load, size, kind, path) in mods.items()
    ]

    def walk(base: int, count: int) -> List[int]:
        return [base + 4 * i for i in range(count)]

    ctrl, net, logd = (mods["ctrlApp"][0], mods["netDrv"][0], mods["logDaemon"][0])
    iid = lambda b: ({"READY": {"READY": b, "PEND": 1.0 - b},
                      "PEND": {"READY": b, "PEND": 1.0 - b}})
    tasks = [
        TaskSpec("tCtrl", 50, ctrl + 0x200, "ctrlApp",
                 _stable_seed(seed, "tCtrl"), iid(0.97),
                 walk(ctrl + 0x200, 12), 0.97),
        TaskSpec("tNetRx", 60, net + 0x200, "netDrv",
                 _stable_seed(seed, "tNetRx"), iid(0.04),
                 walk(net + 0x200, 8), 0.04),
        TaskSpec("tNetTx", 61, net + 0x300, "netDrv",
                 _stable_seed(seed, "tNetTx"), iid(0.03),
                 walk(net + 0x300, 8), 0.03),
        TaskSpec("tLog", 100, logd + 0x200, "logDaemon",
                 _stable_seed(seed, "tLog"), iid(0.05),
                 walk(logd + 0x200, 6), 0.05),
        TaskSpec("tDbSync", 120, ctrl + 0x800, "ctrlApp",
                 _stable_seed(seed, "tDbSync"),
                 {"READY": {"READY": 0.5, "DELAY": 0.5}},
                 walk(ctrl + 0x800, 6), 0.02, delay_range=(97, 127)),
        TaskSpec("tWdg", 10, KERNEL_BASE + 0x2000, None,
                 _stable_seed(seed, "tWdg"),
                 {"READY": {"READY": 0.4, "PEND_T": 0.6}},
                 walk(KERNEL_BASE + 0x2000, 4), 0.02, pend_t_range=(89, 113)),
        TaskSpec("tShell", 200, KERNEL_BASE + 0x3000, None,
                 _stable_seed(seed, "tShell"), iid(0.02),
                 walk(KERNEL_BASE + 0x3000, 4), 0.02),
        TaskSpec("tIdle", 255, KERNEL_BASE + 0x4000, None,
                 _stable_seed(seed, "tIdle"), {"READY": {"READY": 1.0}},
                 walk(KERNEL_BASE + 0x4000, 4), 1.0),
    ]

    timer = TimerSpec(
        timer_id=1, divisor=10,
        callbacks=[{"callback_id": 1, "native": "sys_tick",
                    "address": KERNEL_BASE + 0x1000, "segment_len": 64}],
        children=[
            TimerSpec(timer_id=2, divisor=10,
                      callbacks=[{"callback_id": 2, "native": "io_scan",
                                  "address": net + 0x400, "segment_len": 96}],
                      children=[
                          TimerSpec(timer_id=3, divisor=10,
                                    callbacks=[{"callback_id": 3, "native": "db_flush",
                                                "address": ctrl + 0x500, "segment_len": 80}]),
                      ]),
            TimerSpec(timer_id=4, divisor=10,
                      callbacks=[{"callback_id": 4, "native": "sensor_log",
                                  "address": ctrl + 0x400, "segment_len": 96}]),
        ])

    config = {
        "sys.hostname": "rtu-01",
        "net.ip": "192.168.7.20",
        "net.mask": "255.255.255.0",
        "net.gw": "192.168.7.1",
        "timer.root_ms": "10",
        "timeout.client_s": "120",
        "log.level": "info",
        "io.analog_channels": "16",
        "io.digital_channels": "32",
    }
    return FixtureSpec(seed=seed, config=config, modules=modules,
                       tasks=tasks, timer=timer)


def _build_timer(spec: TimerSpec, parent_period: Optional[int]) -> TimerNode:
    period = spec.divisor if parent_period is None else parent_period * spec.divisor
    node = TimerNode(timer_id=spec.timer_id, period_ticks=period,
                     divisor_from_parent=1 if parent_period is None else spec.divisor)
    for cb in spec.callbacks:
        node.callbacks.append(TimerCallback(
            callback_id=cb["callback_id"], address=cb["address"],
            segment_len=cb["segment_len"], kind="native",
            native_name=cb["native"]))
    for child in spec.children:
        node.children.append(_build_timer(child, period))
    return node


def build_device_state(device, fixture: FixtureSpec) -> None:
    """Populate a fresh Device from a fixture (called by Device.__init__)."""
    device.kernel_version = fixture.kernel_version
    device.config = dict(fixture.config)
    device.flash = bytearray(fixture.flash_size)
    device.analog_in = [0.0] * fixture.analog_channels
    device.analog_out = [0.0] * fixture.analog_channels
    device.digital_in = [0] * fixture.digital_channels
    device.digital_out = [0] * fixture.digital_channels
    device.rng = random.Random(fixture.seed)

    device.map_segment(KERNEL_BASE, pattern_bytes("kernel", fixture.seed, KERNEL_SIZE))
    for spec in fixture.modules:
        seg = spec.segment
        device.modules.append(LoadedModule(
            name=spec.name, kind=spec.kind, file_path=spec.file_path,
            load_address=spec.load_address, segment=seg,
            jump_table_addr=spec.load_address + spec.jump_table_off,
            control_fn_addr=spec.load_address + spec.control_fn_off))
        device.map_segment(spec.load_address, seg)

    device.timer_root = _build_timer(fixture.timer, None)
    for t in fixture.tasks:
        device.spawn_task(t.name, t.priority, t.entry_point, t.profile(),
                          owner_module=t.owner_module)


# --- JSON round trip ---

def _timer_to_dict(spec: TimerSpec) -> dict:
    return {"timer_id": spec.timer_id, "divisor": spec.divisor,
            "callbacks": spec.callbacks,
            "children": [_timer_to_dict(c) for c in spec.children]}


def _timer_from_dict(d: dict) -> TimerSpec:
    return TimerSpec(timer_id=d["timer_id"], divisor=d["divisor"],
                     callbacks=list(d.get("callbacks", [])),
                     children=[_timer_from_dict(c) for c in d.get("children", [])])


def fixture_to_json(fixture: FixtureSpec) -> str:
    doc = {
        "version": fixture.version,
        "seed": fixture.seed,
        "kernel_version": fixture.kernel_version,
        "config": fixture.config,
        "analog_channels": fixture.analog_channels,
        "digital_channels": fixture.digital_channels,
        "flash_size": fixture.flash_size,
        "modules": [asdict(m) for m in fixture.modules],
        "tasks": [asdict(t) for t in fixture.tasks],
        "timer": _timer_to_dict(fixture.timer),
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def fixture_from_json(text: str) -> FixtureSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise CorruptFile(f"fixture is not valid JSON: {e}") from None
    version = doc.get("version")
    if version != FIXTURE_VERSION:
        raise VersionMismatch(f"fixture version {version!r}, expected {FIXTURE_VERSION}")
    try:
        return FixtureSpec(
            seed=doc["seed"],
            config=dict(doc["config"]),
            modules=[ModuleSpec(**m) for m in doc["modules"]],
            tasks=[TaskSpec(**{**t,
                               "delay_range": tuple(t.get("delay_range", (20, 40))),
                               "pend_t_range": tuple(t.get("pend_t_range", (80, 120)))})
                   for t in doc["tasks"]],
            timer=_timer_from_dict(doc["timer"]),
            kernel_version=doc.get("kernel_version", "VxSim 5.5.1"),
            analog_channels=doc.get("analog_channels", 16),
            digital_channels=doc.get("digital_channels", 32),
            flash_size=doc.get("flash_size", 256 * 1024),
        )
    except (KeyError, TypeError) as e:
        raise CorruptFile(f"fixture missing field: {e}") from None
