"""Remote monitoring agent: protocol client, baseline builder, change
detectors, operator REPL, and the HTTP gateway behind the dashboard."""

from .client import DeviceClient
from .baseline import Baseline, build_baseline, summarize_window, load_baseline, save_baseline
from .detect import (Alert, activity_level, detect_config, detect_modules,
                     detect_runtime, detect_timer, run_all_detectors)

__all__ = [
    "DeviceClient", "Baseline", "build_baseline", "summarize_window",
    "load_baseline", "save_baseline", "Alert", "activity_level",
    "detect_config", "detect_modules", "detect_runtime", "detect_timer",
    "run_all_detectors",
]
