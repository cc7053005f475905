"""Change detection against a baseline, four categories:

CONFIG  - device configuration keys added/removed/changed
MODULE  - loaded modules unexpected/missing/rehashed/relocated
TIMER   - timer tree callbacks added/missing/retimed/modified
RUNTIME - per-task statistics: presence, state mix, pc variability,
          priority

Detectors are pure functions of (baseline, observation); same inputs,
same alerts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

from ..errors import InsufficientSamples
from ..recordset import RecordSet
from .baseline import Baseline, TaskProfile, summarize_window

CONFIG = "CONFIG"
MODULE = "MODULE"
TIMER = "TIMER"
RUNTIME = "RUNTIME"

TASK_STATE_NAMES = ("READY", "PEND", "PEND_T", "DELAY", "SUSPEND", "RUNNING")


@dataclass(frozen=True)
class Alert:
    category: str
    severity: str
    subject: str
    detail: str
    observed_at_tick: int = 0
    baseline_ref: str = ""

    def to_dict(self) -> dict:
        return {"category": self.category, "severity": self.severity,
                "subject": self.subject, "detail": self.detail,
                "observed_at_tick": self.observed_at_tick,
                "baseline_ref": self.baseline_ref}

    @property
    def signature(self) -> Tuple[str, str, str]:
        return (self.category, self.subject, self.detail.split(":")[0])


def detect_config(baseline: Baseline, current_config: Dict[str, str],
                  tick: int = 0) -> List[Alert]:
    alerts = []
    ref = baseline.ref
    for key in sorted(set(baseline.config) | set(current_config)):
        if key not in current_config:
            alerts.append(Alert(CONFIG, "warning", key,
                                f"missing: was {baseline.config[key]!r}",
                                tick, ref))
        elif key not in baseline.config:
            alerts.append(Alert(CONFIG, "warning", key,
                                f"added: now {current_config[key]!r}",
                                tick, ref))
        elif baseline.config[key] != current_config[key]:
            alerts.append(Alert(
                CONFIG, "warning", key,
                f"changed: {baseline.config[key]!r} -> {current_config[key]!r}",
                tick, ref))
    return alerts


def detect_modules(baseline: Baseline, current_modules: List[dict],
                   tick: int = 0) -> List[Alert]:
    alerts = []
    ref = baseline.ref
    current = {m["name"]: m for m in current_modules}
    for name in sorted(set(current) - set(baseline.modules)):
        m = current[name]
        alerts.append(Alert(MODULE, "critical", name,
                            f"UNEXPECTED: {m['kind']} at {m['load_address']:#x} "
                            f"({m['file_path']}, hash {m['segment_hash'][:16]})",
                            tick, ref))
    for name in sorted(set(baseline.modules) - set(current)):
        alerts.append(Alert(MODULE, "critical", name, "MISSING", tick, ref))
    for name in sorted(set(baseline.modules) & set(current)):
        base, cur = baseline.modules[name], current[name]
        if base["segment_hash"] != cur["segment_hash"]:
            alerts.append(Alert(MODULE, "critical", name,
                                f"HASH_MISMATCH: {base['segment_hash'][:16]} -> "
                                f"{cur['segment_hash'][:16]}", tick, ref))
        if base["load_address"] != cur["load_address"]:
            alerts.append(Alert(MODULE, "warning", name,
                                f"RELOCATED: {base['load_address']:#x} -> "
                                f"{cur['load_address']:#x}", tick, ref))
    return alerts


def _callbacks_by_id(rows: List[list]) -> Dict[int, dict]:
    out = {}
    for depth, timer_id, period, callback_id, address, code_hash, kind in rows:
        if callback_id >= 0:
            out[callback_id] = {"timer_id": timer_id, "period": period,
                                "address": address, "code_hash": code_hash,
                                "kind": kind}
    return out


def _periods_by_timer(rows: List[list]) -> Dict[int, int]:
    return {row[1]: row[2] for row in rows}


def detect_timer(baseline: Baseline, current_tree: List[list],
                 tick: int = 0) -> List[Alert]:
    alerts = []
    ref = baseline.ref
    base_periods = _periods_by_timer(baseline.timer_tree)
    cur_periods = _periods_by_timer(current_tree)
    for timer_id in sorted(set(base_periods) & set(cur_periods)):
        if base_periods[timer_id] != cur_periods[timer_id]:
            alerts.append(Alert(TIMER, "critical", f"timer {timer_id}",
                                f"PERIOD_CHANGED: {base_periods[timer_id]} -> "
                                f"{cur_periods[timer_id]} ticks", tick, ref))
    base_cbs = _callbacks_by_id(baseline.timer_tree)
    cur_cbs = _callbacks_by_id(current_tree)
    for cb_id in sorted(set(cur_cbs) - set(base_cbs)):
        cb = cur_cbs[cb_id]
        alerts.append(Alert(TIMER, "critical", f"callback {cb_id}",
                            f"ADDED_CALLBACK: timer {cb['timer_id']} at "
                            f"{cb['address']:#x} ({cb['kind']})", tick, ref))
    for cb_id in sorted(set(base_cbs) - set(cur_cbs)):
        alerts.append(Alert(TIMER, "critical", f"callback {cb_id}",
                            "MISSING_CALLBACK", tick, ref))
    for cb_id in sorted(set(base_cbs) & set(cur_cbs)):
        base, cur = base_cbs[cb_id], cur_cbs[cb_id]
        changes = []
        if base["address"] != cur["address"]:
            changes.append(f"address {base['address']:#x} -> {cur['address']:#x}")
        if base["code_hash"] != cur["code_hash"]:
            changes.append(f"code hash {base['code_hash'][:16]} -> "
                           f"{cur['code_hash'][:16]}")
        if base["timer_id"] != cur["timer_id"]:
            changes.append(f"timer {base['timer_id']} -> {cur['timer_id']}")
        if changes:
            alerts.append(Alert(TIMER, "critical", f"callback {cb_id}",
                                "CALLBACK_MODIFIED: " + "; ".join(changes),
                                tick, ref))
    return alerts


def detect_runtime(baseline: Baseline, window: Dict[str, TaskProfile],
                   tick: int = 0, min_samples: int = 30) -> List[Alert]:
    """Compare a summarized observation window with baseline task
    statistics.  ``window`` comes from :func:`summarize_window`."""
    if not window or max(p.samples for p in window.values()) < min_samples:
        raise InsufficientSamples(f"need >= {min_samples} samples")
    alerts = []
    ref = baseline.ref
    eps = baseline.tolerances.get("state_fraction_eps", 0.15)
    pc_ratio = baseline.tolerances.get("distinct_pc_ratio", 0.25)
    for name in sorted(set(baseline.task_profiles) - set(window)):
        alerts.append(Alert(RUNTIME, "critical", name, "MISSING_TASK", tick, ref))
    for name in sorted(set(window) - set(baseline.task_profiles)):
        obs = window[name]
        alerts.append(Alert(RUNTIME, "critical", name,
                            f"UNEXPECTED_TASK: priority {obs.priority}, "
                            f"entry {obs.entry_point:#x}", tick, ref))
    for name in sorted(set(baseline.task_profiles) & set(window)):
        base, obs = baseline.task_profiles[name], window[name]
        for state in TASK_STATE_NAMES:
            b = base.state_fractions.get(state, 0.0)
            o = obs.state_fractions.get(state, 0.0)
            if abs(o - b) > eps:
                alerts.append(Alert(RUNTIME, "warning", name,
                                    f"STATE_SHIFT: {state} fraction "
                                    f"{b:.3f} -> {o:.3f}", tick, ref))
        if obs.distinct_pc < pc_ratio * base.distinct_pc:
            alerts.append(Alert(RUNTIME, "warning", name,
                                f"PC_STAGNATION: distinct pc {base.distinct_pc} "
                                f"-> {obs.distinct_pc}", tick, ref))
        if obs.priority != base.priority:
            alerts.append(Alert(RUNTIME, "warning", name,
                                f"PRIORITY_CHANGED: {base.priority} -> "
                                f"{obs.priority}", tick, ref))
    return alerts


def run_all_detectors(baseline: Baseline, *, config: Dict[str, str],
                      modules: List[dict], timer_tree_rows: List[list],
                      window_records: RecordSet,
                      min_samples: int = 30) -> List[Alert]:
    tick = window_records.tick
    alerts = []
    alerts += detect_config(baseline, config, tick)
    alerts += detect_modules(baseline, modules, tick)
    alerts += detect_timer(baseline, timer_tree_rows, tick)
    alerts += detect_runtime(baseline, summarize_window(window_records),
                             tick, min_samples=min_samples)
    return alerts


# --- activity buckets (dashboard color coding) ---

@dataclass(frozen=True)
class ActivityLevel:
    ready_bucket: str
    pc_bucket: str


def activity_level(ready_fraction: float, distinct_pc: int,
                   ready_bounds: Tuple[float, float] = (0.10, 0.50),
                   pc_bounds: Tuple[int, int] = (3, 10)) -> ActivityLevel:
    """Bucket activity for the two per-task icons.  Boundaries belong to
    the higher bucket: ready 0.10 is med, distinct pc 3 is med."""
    lo, hi = ready_bounds
    if ready_fraction < lo:
        ready = "low"
    elif ready_fraction <= hi:
        ready = "med"
    else:
        ready = "high"
    pc_lo, pc_hi = pc_bounds
    if distinct_pc < pc_lo:
        pc = "low"
    elif distinct_pc <= pc_hi:
        pc = "med"
    else:
        pc = "high"
    return ActivityLevel(ready, pc)
