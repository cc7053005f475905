"""Domain types for the simulated device."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

READY = "READY"
PEND = "PEND"
PEND_T = "PEND_T"
DELAY = "DELAY"
SUSPEND = "SUSPEND"
RUNNING = "RUNNING"

TASK_STATES = (READY, PEND, PEND_T, DELAY, SUSPEND, RUNNING)

# States a behavior chain may transition between on its own.  DELAY and
# PEND_T are entered via the chain but left via countdown; SUSPEND is
# entered/left only through control actions.
_CHAIN_SOURCES = (READY, PEND)


@dataclass
class BehaviorProfile:
    """Stochastic activity model for one task: a first-order chain over
    task states plus a program-counter walk cycled while running."""

    seed: int
    transitions: Dict[str, Dict[str, float]]
    pc_walk: List[int]
    ready_bias: float = 0.5
    delay_range: Tuple[int, int] = (20, 40)
    pend_t_range: Tuple[int, int] = (80, 120)

    def __post_init__(self):
        if not self.pc_walk:
            raise ValueError("pc_walk must be non-empty")
        for src, row in self.transitions.items():
            if src not in TASK_STATES:
                raise ValueError(f"unknown source state {src!r}")
            total = sum(row.values())
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"transition weights from {src} sum to {total}")
            for tgt in row:
                if tgt not in TASK_STATES:
                    raise ValueError(f"unknown target state {tgt!r}")

    def compiled_rows(self) -> Dict[str, Tuple[Tuple[float, str], ...]]:
        # Targets sorted by name so sampling is invariant to dict order
        # (a fixture that round-trips through JSON must behave identically).
        rows = {}
        for src, row in self.transitions.items():
            cum = 0.0
            table = []
            for tgt in sorted(row):
                cum += row[tgt]
                table.append((cum, tgt))
            table[-1] = (1.0 + 1e-12, table[-1][1])
            rows[src] = tuple(table)
        return rows


def profile_from_bias(ready_bias: float, seed: int, pc_walk: List[int],
                      **kw) -> BehaviorProfile:
    """Memoryless profile: each tick the task is READY with probability
    ``ready_bias`` and PEND otherwise."""
    if not 0.0 <= ready_bias <= 1.0:
        raise ValueError("ready_bias must be in [0, 1]")
    if ready_bias >= 1.0:
        transitions = {READY: {READY: 1.0}}
    elif ready_bias <= 0.0:
        transitions = {READY: {PEND: 1.0}, PEND: {PEND: 1.0}}
    else:
        row = {READY: ready_bias, PEND: 1.0 - ready_bias}
        transitions = {READY: dict(row), PEND: dict(row)}
    return BehaviorProfile(seed=seed, transitions=transitions,
                           pc_walk=list(pc_walk), ready_bias=ready_bias, **kw)


class SimTask:
    """Live task control block."""

    __slots__ = ("task_id", "name", "state", "priority", "entry_point", "pc",
                 "sp", "link_register", "delay_remaining", "behavior",
                 "owner_module", "_rng", "_rows", "_pc_walk", "_pc_index")

    def __init__(self, task_id: int, name: str, priority: int,
                 entry_point: int, behavior: BehaviorProfile,
                 owner_module: Optional[str] = None):
        self.task_id = task_id
        self.name = name
        self.state = READY
        self.priority = priority
        self.entry_point = entry_point
        self.pc = behavior.pc_walk[0]
        self.sp = 0x2000_0000 + task_id * 0x1000
        self.link_register = entry_point + 4
        self.delay_remaining = 0
        self.behavior = behavior
        self.owner_module = owner_module
        self._rng = random.Random(behavior.seed)
        self._rows = behavior.compiled_rows()
        self._pc_walk = list(behavior.pc_walk)
        self._pc_index = 0

    def set_pc_walk(self, walk: List[int]) -> None:
        if not walk:
            raise ValueError("pc walk must be non-empty")
        self._pc_walk = list(walk)
        self._pc_index = 0
        self.pc = walk[0]


@dataclass
class TimerCallback:
    callback_id: int
    address: int
    segment_len: int
    kind: str = "native"        # "native" | "script"
    native_name: str = ""
    script: object = None       # compiled Script for kind == "script"
    source: str = ""


@dataclass
class TimerNode:
    timer_id: int
    period_ticks: int
    divisor_from_parent: int
    callbacks: List[TimerCallback] = field(default_factory=list)
    children: List["TimerNode"] = field(default_factory=list)

    def walk(self):
        yield self
        for child in sorted(self.children, key=lambda n: n.timer_id):
            yield from child.walk()

    def find(self, timer_id: int) -> Optional["TimerNode"]:
        for node in self.walk():
            if node.timer_id == timer_id:
                return node
        return None


@dataclass
class LoadedModule:
    name: str
    kind: str                   # kernel_module | rtp | c_application
    file_path: str
    load_address: int
    segment: bytes
    jump_table_addr: int
    control_fn_addr: int


# --- immutable snapshot views ---

@dataclass(frozen=True)
class TaskView:
    task_id: int
    name: str
    state: str                  # observable state: RUNNING reads as READY
    priority: int
    pc: int
    sp: int
    link_register: int
    entry_point: int
    owner_module: Optional[str]
    delay_remaining: int


@dataclass(frozen=True)
class CallbackView:
    callback_id: int
    address: int
    segment_len: int
    kind: str


@dataclass(frozen=True)
class TimerView:
    timer_id: int
    period_ticks: int
    divisor_from_parent: int
    callbacks: Tuple[CallbackView, ...]
    children: Tuple["TimerView", ...]


@dataclass(frozen=True)
class ModuleView:
    name: str
    kind: str
    file_path: str
    load_address: int
    segment: bytes
    jump_table_addr: int
    control_fn_addr: int


@dataclass(frozen=True)
class DeviceSnapshot:
    tick: int
    rtc_ms: int
    kernel_version: str
    running_task_id: int        # -1 when nothing was scheduled
    tasks: Tuple[TaskView, ...]
    modules: Tuple[ModuleView, ...]
    timer_root: TimerView
    config: Dict[str, str]
    memory: Dict[int, bytes]
    analog_in: Tuple[float, ...]
    analog_out: Tuple[float, ...]
    digital_in: Tuple[int, ...]
    digital_out: Tuple[int, ...]
