"""Closed-loop inverted-pendulum benchmark: physics on one side, the
controller inside the device process, UDP in between, latency and
jitter measured with and without measurement streaming."""

from .dynamics import (ControllerGains, PendulumParams, PendulumState,
                       control_law, dynamics_step, simulate_closed_loop)
from .controller import PendulumController
from .bench import LoopMetrics, run_benchmark, write_metrics_csv, write_trajectory_csv

__all__ = [
    "ControllerGains", "PendulumParams", "PendulumState", "control_law",
    "dynamics_step", "simulate_closed_loop", "PendulumController",
    "LoopMetrics", "run_benchmark", "write_metrics_csv", "write_trajectory_csv",
]
