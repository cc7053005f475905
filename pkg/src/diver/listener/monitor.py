"""Shared listener state and the monitor loop.

``ListenerState`` is the rendezvous between the protocol client, the
detectors, the REPL, and the gateway: latest task table, rolling sample
window, append-only alert list, and a broadcast hub feeding /api/stream
subscribers.  ``Monitor`` subscribes to the device's task stream and
periodically re-pulls the static surfaces to run all four detectors.
"""

from __future__ import annotations

import collections
import json
import logging
import queue
import threading
import time
from typing import Dict, List, Optional

from ..errors import DiverError, InsufficientSamples
from ..recordset import RecordSet
from .baseline import Baseline, summarize_window
from .client import DeviceClient
from .detect import Alert, activity_level, detect_config, detect_modules, \
    detect_runtime, detect_timer

log = logging.getLogger("diver.listener")


class ListenerState:
    def __init__(self, alert_log_path: Optional[str] = None,
                 window_size: int = 60):
        self.lock = threading.RLock()
        self.baseline: Optional[Baseline] = None
        self.alerts: List[Alert] = []
        self._seen = set()
        self.window_size = window_size
        self._window = collections.deque(maxlen=window_size)  # (tick, rows)
        self._window_columns: Optional[List[str]] = None
        self.latest_tasks: List[dict] = []
        self._task_history: Dict[str, collections.deque] = {}
        self._subscribers: List[queue.Queue] = []
        self.alert_log_path = alert_log_path
        self.connected = True

    # --- stream fan-out ---

    def subscribe_events(self) -> queue.Queue:
        q = queue.Queue(maxsize=1000)
        with self.lock:
            self._subscribers.append(q)
        return q

    def unsubscribe_events(self, q: queue.Queue) -> None:
        with self.lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def broadcast(self, event: dict) -> None:
        with self.lock:
            subs = list(self._subscribers)
        for q in subs:
            try:
                q.put_nowait(event)
            except queue.Full:
                pass

    # --- ingest ---

    def ingest_taskstats(self, rs: RecordSet) -> None:
        """Feed one streamed task snapshot into the rolling window and
        the latest-table cache, then broadcast it."""
        with self.lock:
            cols = [c for c in rs.columns if c != "sub"]
            sub_idx = rs.columns.index("sub") if "sub" in rs.columns else None
            rows = [[v for i, v in enumerate(row) if i != sub_idx]
                    for row in rs.rows] if sub_idx is not None else [list(r) for r in rs.rows]
            self._window_columns = cols
            self._window.append((rs.tick, rows))
            latest = []
            name_i, state_i = cols.index("name"), cols.index("state")
            prio_i, pc_i = cols.index("priority"), cols.index("pc")
            for row in rows:
                name = row[name_i]
                hist = self._task_history.setdefault(
                    name, collections.deque(maxlen=self.window_size))
                hist.append((row[state_i], row[pc_i]))
                ready = sum(1 for s, _ in hist if s == "READY") / len(hist)
                distinct = len({p for _, p in hist})
                level = activity_level(ready, distinct)
                latest.append({
                    "name": name, "state": row[state_i],
                    "priority": row[prio_i],
                    "ready_fraction": round(ready, 4),
                    "distinct_pc": distinct,
                    "activity": {"ready": level.ready_bucket,
                                 "pc": level.pc_bucket},
                })
            self.latest_tasks = latest
        self.broadcast({"type": "record", "kind": rs.kind, "tick": rs.tick,
                        "columns": cols, "rows": rows})

    def window_records(self) -> Optional[RecordSet]:
        with self.lock:
            if not self._window or self._window_columns is None:
                return None
            rows = [row for _, batch in self._window for row in batch]
            tick = self._window[-1][0]
            return RecordSet("taskstats", list(self._window_columns), rows, tick)

    def window_depth(self) -> int:
        with self.lock:
            return len(self._window)

    # --- alerts ---

    def add_alerts(self, alerts: List[Alert]) -> List[Alert]:
        """Deduplicated append; returns only the genuinely new alerts."""
        fresh = []
        with self.lock:
            for alert in alerts:
                if alert.signature in self._seen:
                    continue
                self._seen.add(alert.signature)
                self.alerts.append(alert)
                fresh.append(alert)
        for alert in fresh:
            self._export(alert)
            self.broadcast({"type": "alert", "alert": alert.to_dict()})
        return fresh

    def _export(self, alert: Alert) -> None:
        if not self.alert_log_path:
            return
        try:
            with open(self.alert_log_path, "a") as f:
                f.write(json.dumps(alert.to_dict(), sort_keys=True) + "\n")
        except OSError as e:
            log.warning("cannot export alert: %s", e)


class Monitor:
    """Streams task snapshots and periodically runs the detectors."""

    def __init__(self, client: DeviceClient, state: ListenerState,
                 stream_rate_hz: float = 1.0, check_period_s: float = 10.0,
                 min_samples: int = 30):
        self.client = client
        self.state = state
        self.stream_rate_hz = stream_rate_hz
        self.check_period_s = check_period_s
        self.min_samples = min_samples
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._sub_id: Optional[int] = None

    def start(self) -> "Monitor":
        self._sub_id = self.client.subscribe("taskstats", self.stream_rate_hz,
                                             self.state.ingest_taskstats)
        self._thread = threading.Thread(target=self._check_loop,
                                        name="monitor-checks", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
        if self._sub_id is not None:
            try:
                self.client.unsubscribe(self._sub_id)
            except DiverError:
                pass
            self._sub_id = None

    def check_now(self) -> List[Alert]:
        """One detector pass over the current static state and rolling
        window; returns the (deduplicated) new alerts."""
        baseline = self.state.baseline
        if baseline is None:
            return []
        alerts: List[Alert] = []
        sysinfo = self.client.command("sysinfo")
        config = {r[1]: r[2] for r in sysinfo.rows if r[0] == "config"}
        alerts += detect_config(baseline, config, sysinfo.tick)
        modules = self.client.command("modules")
        alerts += detect_modules(baseline, modules.dicts(), modules.tick)
        tree = self.client.command("timer_tree")
        alerts += detect_timer(baseline, [list(r) for r in tree.rows], tree.tick)
        window = self.state.window_records()
        if window is not None:
            try:
                alerts += detect_runtime(baseline, summarize_window(window),
                                         window.tick,
                                         min_samples=self.min_samples)
            except InsufficientSamples:
                pass
        return self.state.add_alerts(alerts)

    def _check_loop(self) -> None:
        while not self._stop.wait(self.check_period_s):
            try:
                self.check_now()
            except DiverError as e:
                log.warning("detector pass failed: %s: %s", e.code, e)
                self.state.connected = False
            except Exception:
                log.exception("detector pass crashed")
            else:
                self.state.connected = True
