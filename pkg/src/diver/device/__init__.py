"""Deterministic simulation of a small RTOS device: prioritized tasks
driven by per-task stochastic profiles, a hierarchical timer tree with
callbacks, loadable code modules, config, memory, I/O, and hooks to
inject the attack scenarios used to exercise the detectors."""

from .types import (TASK_STATES, BehaviorProfile, CallbackView, DeviceSnapshot,
                    LoadedModule, ModuleView, SimTask, TaskView, TimerCallback,
                    TimerNode, TimerView, profile_from_bias)
from .simulator import Device, read_mem
from .fixture import FixtureSpec, nominal_fixture, fixture_from_json, fixture_to_json
from .attacks import inject_attack, CONTROLLER_TASK
from .host import DeviceHost

__all__ = [
    "TASK_STATES", "BehaviorProfile", "CallbackView", "DeviceSnapshot",
    "LoadedModule", "ModuleView", "SimTask", "TaskView", "TimerCallback",
    "TimerNode", "TimerView", "profile_from_bias", "Device", "read_mem",
    "FixtureSpec", "nominal_fixture", "fixture_from_json", "fixture_to_json",
    "inject_attack", "CONTROLLER_TASK", "DeviceHost",
]
