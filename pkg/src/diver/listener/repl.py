"""Interactive operator console.

Lines are forwarded verbatim to the device and rendered as tables.
Local verbs handled here: ``help``, ``quit``/``exit``, and
``baseline save|load|check`` against the shared listener state.
Connection errors are printed, not fatal.
"""

from __future__ import annotations

import shlex
from typing import Callable, Optional

from ..command import format_command
from ..errors import ConnectionLost, DiverError
from ..recordset import render_table
from .baseline import build_baseline, collect_window, load_baseline, \
    save_baseline, summarize_window
from .client import DeviceClient
from .detect import detect_config, detect_modules, detect_runtime, detect_timer
from .monitor import ListenerState

_LOCAL_HELP = """local verbs:
  help                        this text plus the device verb list
  baseline build [dur] [rate] build a baseline from the live device
  baseline save <path>        write the active baseline
  baseline load <path>        load a baseline file
  baseline check [win] [rate] pull a fresh window and run all detectors
  quit | exit                 leave the console
anything else is sent to the device (verb key=value ...)."""


def _print_alerts(alerts, output) -> None:
    if not alerts:
        output("no alerts: device matches baseline")
        return
    for a in alerts:
        output(f"[{a.category}] {a.severity:8s} {a.subject}: {a.detail}")


def _baseline_verb(parts, client, state, output) -> None:
    sub = parts[1] if len(parts) > 1 else ""
    if sub == "build":
        duration = float(parts[2]) if len(parts) > 2 else 60.0
        rate = float(parts[3]) if len(parts) > 3 else 1.0
        output(f"building baseline: {duration:.0f}s at {rate:g} Hz ...")
        state.baseline = build_baseline(client, sample_rate_hz=rate,
                                        duration_s=duration)
        output(f"baseline ready: {state.baseline.ref}, "
               f"{len(state.baseline.task_profiles)} tasks")
    elif sub == "save":
        if state.baseline is None:
            output("no baseline to save")
            return
        if len(parts) < 3:
            output("usage: baseline save <path>")
            return
        save_baseline(state.baseline, parts[2])
        output(f"saved {state.baseline.ref} -> {parts[2]}")
    elif sub == "load":
        if len(parts) < 3:
            output("usage: baseline load <path>")
            return
        state.baseline = load_baseline(parts[2])
        output(f"loaded baseline {state.baseline.ref}")
    elif sub == "check":
        if state.baseline is None:
            output("no baseline: run `baseline build` or `baseline load` first")
            return
        window = int(parts[2]) if len(parts) > 2 else 30
        rate = float(parts[3]) if len(parts) > 3 else state.baseline.sample_rate_hz
        baseline = state.baseline
        alerts = []
        sysinfo = client.command("sysinfo")
        config = {r[1]: r[2] for r in sysinfo.rows if r[0] == "config"}
        alerts += detect_config(baseline, config, sysinfo.tick)
        modules = client.command("modules")
        alerts += detect_modules(baseline, modules.dicts(), modules.tick)
        tree = client.command("timer_tree")
        alerts += detect_timer(baseline, [list(r) for r in tree.rows], tree.tick)
        output(f"sampling {window} snapshots at {rate:g} Hz ...")
        raw = collect_window(client, window, rate)
        alerts += detect_runtime(baseline, summarize_window(raw), raw.tick,
                                 min_samples=min(window, 30))
        state.add_alerts(alerts)
        _print_alerts(alerts, output)
    else:
        output("usage: baseline build|save|load|check ...")


def run_repl(client: DeviceClient, state: Optional[ListenerState] = None,
             input_fn: Callable[[str], str] = input,
             output: Callable[[str], None] = print) -> None:
    state = state or ListenerState()
    output("connected; type `help` for verbs, `quit` to leave")
    while True:
        try:
            line = input_fn("diver> ")
        except (EOFError, KeyboardInterrupt):
            output("")
            break
        line = line.strip()
        if not line:
            continue
        if line in ("quit", "exit"):
            break
        try:
            if line.split()[0] == "baseline":
                _baseline_verb(shlex.split(line), client, state, output)
                continue
            if line == "help":
                output(_LOCAL_HELP)
                rs = client.send_command("help")
                output(render_table(rs))
                continue
            if line.startswith("eval ") and "=" not in line:
                line = format_command("eval", expr=line[5:].strip())
            rs = client.send_command(line, timeout=120.0)
            output(render_table(rs))
        except ConnectionLost as e:
            output(f"connection lost: {e.msg}")
        except DiverError as e:
            output(f"error {e.code}: {e.msg}")
