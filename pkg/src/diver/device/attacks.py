"""The ten attack scenarios the detectors are evaluated against.

Each scenario applies exactly one class of mutation to a nominal device:

 1. new kernel module plus a flood task
 2. new user-space RTP plus a flood task
 3. kernel module replaced in place (same name, different bytes)
 4. period of an existing timer callback changed
 5. extra timer callback added at the 100 ms node
 6. existing timer callback redirected to attacker code
 7. controller task deleted
 8. controller task suspended
 9. controller task code overwritten with a blocking loop
10. controller task priority lowered
"""

from __future__ import annotations

from ..errors import InvalidScenario, NoSuchTask
from .fixture import pattern_bytes
from .simulator import Device
from .types import LoadedModule, TimerCallback, profile_from_bias

CONTROLLER_TASK = "tCtrl"

_FLOOD_MODULE_BASE = 0x0090_0000
_RTP_MODULE_BASE = 0x00A0_0000
_BLOB_ADDED_CB = 0x00B0_0000
_BLOB_REDIRECT_CB = 0x00B1_0000


def _controller(device: Device):
    task = device.find_task_by_name(CONTROLLER_TASK)
    if task is None:
        raise NoSuchTask(f"{CONTROLLER_TASK} not present")
    return task


def _insert_module_with_task(device: Device, name: str, kind: str,
                             file_path: str, base: int, task_name: str) -> None:
    seg = pattern_bytes(f"attack:{name}", device.fixture.seed, 8192)
    device.modules.append(LoadedModule(
        name=name, kind=kind, file_path=file_path, load_address=base,
        segment=seg, jump_table_addr=base + 0x100, control_fn_addr=base + 0x200))
    device.map_segment(base, seg)
    entry = base + 0x200
    profile = profile_from_bias(0.99, device.fixture.seed ^ 0xA77ACC,
                                [entry + 4 * i for i in range(10)])
    # Priority slots between the shell stub and idle: the flood task burns
    # background cycles without starving the real workload.
    device.spawn_task(task_name, 252, entry, profile, owner_module=name)


def scenario_1(device: Device) -> None:
    _insert_module_with_task(device, "modFlood", "kernel_module",
                             "/flash/modFlood.o", _FLOOD_MODULE_BASE, "tFlood")


def scenario_2(device: Device) -> None:
    _insert_module_with_task(device, "rtpExfil", "rtp",
                             "/flash/rtpExfil.vxe", _RTP_MODULE_BASE, "tExfil")


def scenario_3(device: Device) -> None:
    for i, mod in enumerate(device.modules):
        if mod.name == "netDrv":
            new_seg = pattern_bytes("attack:netDrv-doppel", device.fixture.seed,
                                    len(mod.segment))
            device.modules[i] = LoadedModule(
                name=mod.name, kind=mod.kind, file_path=mod.file_path,
                load_address=mod.load_address, segment=new_seg,
                jump_table_addr=mod.jump_table_addr,
                control_fn_addr=mod.control_fn_addr)
            device.replace_segment(mod.load_address, new_seg)
            return
    raise InvalidScenario("netDrv module not present")


def scenario_4(device: Device) -> None:
    node = device.timer_root.find(4)  # 100 ms leaf hosting sensor_log
    if node is None:
        raise InvalidScenario("timer 4 not present")
    node.divisor_from_parent = 5
    node.period_ticks = device.timer_root.period_ticks * 5


def scenario_5(device: Device) -> None:
    node = device.timer_root.find(2)  # 100 ms node
    if node is None:
        raise InvalidScenario("timer 2 not present")
    blob = pattern_bytes("attack:exfil-cb", device.fixture.seed, 128)
    device.map_segment(_BLOB_ADDED_CB, blob)
    device.native_callbacks.setdefault("exfil_pump", lambda d: None)
    node.callbacks.append(TimerCallback(
        callback_id=device.alloc_callback_id(), address=_BLOB_ADDED_CB,
        segment_len=128, kind="native", native_name="exfil_pump"))


def scenario_6(device: Device) -> None:
    node = device.timer_root.find(4)
    if node is None or not node.callbacks:
        raise InvalidScenario("timer 4 callback not present")
    blob = pattern_bytes("attack:redirect-cb", device.fixture.seed, 96)
    device.map_segment(_BLOB_REDIRECT_CB, blob)
    cb = node.callbacks[0]
    cb.address = _BLOB_REDIRECT_CB
    cb.segment_len = 96
    cb.native_name = "sensor_log_spoof"


def scenario_7(device: Device) -> None:
    device.control_task(_controller(device).task_id, "delete")


def scenario_8(device: Device) -> None:
    device.control_task(_controller(device).task_id, "suspend")


def scenario_9(device: Device) -> None:
    task = _controller(device)
    device.control_task(task.task_id, "overwrite_code",
                        addrs=[task.entry_point + 0x40])


def scenario_10(device: Device) -> None:
    device.control_task(_controller(device).task_id, "set_priority",
                        priority=200)


_SCENARIOS = {
    1: scenario_1, 2: scenario_2, 3: scenario_3, 4: scenario_4,
    5: scenario_5, 6: scenario_6, 7: scenario_7, 8: scenario_8,
    9: scenario_9, 10: scenario_10,
}


def inject_attack(device: Device, scenario: int) -> None:
    fn = _SCENARIOS.get(scenario)
    if fn is None:
        raise InvalidScenario(f"scenario must be 1..10, got {scenario}")
    fn(device)
