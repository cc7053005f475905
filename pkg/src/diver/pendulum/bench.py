"""The closed-loop benchmark: physics paced at 100 Hz on the wall clock,
sensor state UDP'd to the on-device controller, command latency and
inter-command jitter recorded per sequence number.

A reply later than the drop timeout counts as dropped (the command is
still applied when it arrives, zero-order hold).  The run aborts if the
pendulum leaves +-pi, which would mean the loop lost stability.
"""

from __future__ import annotations

import csv
import math
import random
import socket
import threading
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from ..errors import DiverError
from .controller import COMMAND_STRUCT, SENSOR_STRUCT
from .dynamics import ControllerGains, PendulumParams, PendulumState, \
    control_law, dynamics_step


class DeviceUnreachable(DiverError):
    code = "DeviceUnreachable"


@dataclass
class LoopMetrics:
    n_samples: int
    latencies_ms: List[float]
    inter_command_ms: List[float]
    dropped: int
    latency_by_seq: Dict[int, float] = field(default_factory=dict)

    @property
    def mean_latency_ms(self) -> float:
        return sum(self.latencies_ms) / len(self.latencies_ms) if self.latencies_ms else float("nan")

    @property
    def p99_ms(self) -> float:
        if not self.latencies_ms:
            return float("nan")
        ordered = sorted(self.latencies_ms)
        return ordered[int(0.99 * (len(ordered) - 1))]

    def summary_line(self) -> str:
        return (f"mean_latency_ms={self.mean_latency_ms:.3f} "
                f"p99_ms={self.p99_ms:.3f} drops={self.dropped}")


def run_benchmark(device_addr: Tuple[str, int], duration_s: float = 20.0,
                  seed: Optional[int] = None,
                  params: PendulumParams = PendulumParams(),
                  gains: ControllerGains = ControllerGains(),
                  rate_hz: float = 100.0, dt: float = 0.001,
                  drop_timeout_s: float = 0.05
                  ) -> Tuple[LoopMetrics, List[Tuple[float, float, float, float]]]:
    """Drive the pendulum against the device's UDP controller.

    Returns (metrics, trajectory rows).  The caller arranges measurer
    streaming separately when comparing loaded vs unloaded runs.
    """
    rng = random.Random(seed)
    period = 1.0 / rate_hz
    steps_per_period = max(1, int(round(period / dt)))
    n_periods = int(round(duration_s * rate_hz))

    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sock.settimeout(0.1)
    sock.connect(device_addr)

    send_times: Dict[int, float] = {}
    recv_times: Dict[int, float] = {}
    shared = {"u": 0.0}
    stop = threading.Event()

    def reader():
        while not stop.is_set():
            try:
                data = sock.recv(1024)
            except socket.timeout:
                continue
            except OSError:
                break
            now = time.monotonic()
            if len(data) != COMMAND_STRUCT.size:
                continue
            seq, u = COMMAND_STRUCT.unpack(data)
            if seq not in recv_times:
                recv_times[seq] = now
                shared["u"] = u

    reader_thread = threading.Thread(target=reader, name="bench-reader",
                                     daemon=True)
    reader_thread.start()

    state = PendulumState(params.theta0, 0.0)
    trajectory: List[Tuple[float, float, float, float]] = []
    t_start = time.monotonic()
    next_deadline = t_start
    try:
        for seq in range(n_periods):
            delay = next_deadline - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            next_deadline += period
            u = shared["u"]
            delta = rng.gauss(0.0, params.noise_sigma) if params.noise_sigma > 0 else 0.0
            t_rel = seq * period
            trajectory.append((t_rel, state.theta, state.theta_dot, u))
            for _ in range(steps_per_period):
                state = dynamics_step(state, u, dt, delta, params)
            if abs(state.theta) > math.pi:
                raise DeviceUnreachable(
                    f"loop unstable: |theta|={abs(state.theta):.2f} rad at t={t_rel:.2f}s")
            now = time.monotonic()
            send_times[seq] = now
            sock.send(SENSOR_STRUCT.pack(seq, int(now * 1e9),
                                         state.theta, state.theta_dot))
            if seq == int(rate_hz) and not recv_times:
                raise DeviceUnreachable(
                    f"no controller replies from {device_addr} after 1 s")
        time.sleep(min(0.2, 4 * drop_timeout_s))  # let stragglers land
    finally:
        stop.set()
        reader_thread.join(timeout=2)
        sock.close()

    latencies_ms: List[float] = []
    latency_by_seq: Dict[int, float] = {}
    dropped = 0
    for seq, t_send in send_times.items():
        t_recv = recv_times.get(seq)
        if t_recv is None or t_recv - t_send > drop_timeout_s:
            dropped += 1
            continue
        lat = (t_recv - t_send) * 1000.0
        latencies_ms.append(lat)
        latency_by_seq[seq] = lat
    arrivals = sorted(recv_times.values())
    inter_command_ms = [(b - a) * 1000.0 for a, b in zip(arrivals, arrivals[1:])]
    metrics = LoopMetrics(n_samples=len(send_times), latencies_ms=latencies_ms,
                          inter_command_ms=inter_command_ms, dropped=dropped,
                          latency_by_seq=latency_by_seq)
    return metrics, trajectory


def write_trajectory_csv(path: str, trajectory) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "theta", "theta_dot", "u"])
        w.writerows(trajectory)


def write_metrics_csv(path: str, metrics: LoopMetrics) -> None:
    arrival_gaps = metrics.inter_command_ms
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["seq", "latency_ms", "inter_command_ms"])
        for i, seq in enumerate(sorted(metrics.latency_by_seq)):
            gap = arrival_gaps[i] if i < len(arrival_gaps) else ""
            w.writerow([seq, f"{metrics.latency_by_seq[seq]:.4f}", gap])
