"""Single-owner wrapper around a Device.

All reads and actions from other threads go through the host lock; the
ticker thread is the only place simulated time advances (tests may drive
``advance`` directly instead of starting the ticker).  ``tick_hz`` sets
how many simulated ticks elapse per wall second; 0 means free-run as
fast as the host allows, which is how long observation windows finish in
seconds instead of minutes.
"""

from __future__ import annotations

import threading
import time
from typing import Callable, Optional

from ..errors import Timeout
from .simulator import Device
from .types import DeviceSnapshot


class DeviceHost:
    def __init__(self, fixture, tick_hz: float = 1000.0):
        self._fixture = fixture
        self._lock = threading.RLock()
        self._cond = threading.Condition(self._lock)
        self._device = Device(fixture)
        self.tick_hz = tick_hz
        self.generation = 0
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._reset_listeners = []

    # --- lifecycle ---

    def start(self) -> "DeviceHost":
        """Start wall pacing.  With tick_hz == 0 there is no background
        ticker: simulated time advances only when a waiter drives it
        (wait_for_tick) or a test calls advance()."""
        if self._thread is not None or self.tick_hz <= 0:
            return self
        self._stop.clear()
        self._thread = threading.Thread(target=self._run, name="device-ticker",
                                        daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None

    def _run(self) -> None:
        batch = max(1, int(self.tick_hz / 200))
        period = batch / self.tick_hz
        next_deadline = time.monotonic()
        while not self._stop.is_set():
            with self._cond:
                for _ in range(batch):
                    self._device.tick()
                self._cond.notify_all()
            next_deadline += period
            delay = next_deadline - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            elif delay < -0.5:
                next_deadline = time.monotonic()  # fell behind; resync

    # --- device access ---

    def uptime(self) -> int:
        with self._lock:
            return self._device.uptime_ticks

    def snapshot(self) -> DeviceSnapshot:
        with self._lock:
            return self._device.snapshot()

    def with_device(self, fn: Callable[[Device], object]):
        with self._cond:
            result = fn(self._device)
            self._cond.notify_all()
            return result

    def advance(self, ticks: int) -> None:
        """Drive simulated time directly (tests / headless use)."""
        with self._cond:
            self._device.run_ticks(ticks)
            self._cond.notify_all()

    def wait_for_tick(self, target: int, wall_timeout: float) -> int:
        """Block until uptime >= target; returns the uptime seen.

        With a wall-paced ticker this waits; in on-demand mode
        (tick_hz == 0) the waiter drives the ticks itself, in batches so
        other readers can interleave, and lands exactly on target."""
        deadline = time.monotonic() + wall_timeout
        if self.tick_hz <= 0:
            while True:
                with self._cond:
                    remaining_ticks = target - self._device.uptime_ticks
                    if remaining_ticks <= 0:
                        return self._device.uptime_ticks
                    if time.monotonic() > deadline:
                        raise Timeout(f"device did not reach tick {target}")
                    self._device.run_ticks(min(remaining_ticks, 500))
                    self._cond.notify_all()
        with self._cond:
            while self._device.uptime_ticks < target:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise Timeout(f"device did not reach tick {target}")
                self._cond.wait(min(remaining, 0.1))
            return self._device.uptime_ticks

    # --- reset ---

    def on_reset(self, fn: Callable[[], None]) -> None:
        self._reset_listeners.append(fn)

    def reset(self) -> None:
        """Reinitialize from the fixture: uptime 0, fresh task ids."""
        with self._cond:
            next_id = self._device._next_task_id
            self._device = Device(self._fixture, task_id_start=next_id)
            self.generation += 1
            self._cond.notify_all()
        for fn in list(self._reset_listeners):
            fn()
