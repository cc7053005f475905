"""UDP controller endpoint running inside the device process.

Datagram layouts (little-endian):
    sensor:  seq u32 | t_send u64 (ns) | theta f64 | theta_dot f64
    command: seq u32 | u f64
"""

from __future__ import annotations

import socket
import struct
import threading
from typing import Optional, Tuple

from .dynamics import ControllerGains, control_law

SENSOR_STRUCT = struct.Struct("<IQdd")
COMMAND_STRUCT = struct.Struct("<Id")


class PendulumController:
    """Answers each sensor datagram with a control command."""

    def __init__(self, bind: Tuple[str, int] = ("127.0.0.1", 0),
                 gains: ControllerGains = ControllerGains(),
                 host=None, task_name: str = "tCtrl"):
        self.gains = gains
        self.host = host
        self.task_name = task_name
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.bind(bind)
        self._sock.settimeout(0.2)
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self.handled = 0

    @property
    def address(self) -> Tuple[str, int]:
        return self._sock.getsockname()[:2]

    def start(self) -> "PendulumController":
        self._thread = threading.Thread(target=self._serve,
                                        name="pendulum-controller", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
        self._sock.close()

    def _serve(self) -> None:
        while not self._stop.is_set():
            try:
                data, peer = self._sock.recvfrom(1024)
            except socket.timeout:
                continue
            except OSError:
                break
            if len(data) != SENSOR_STRUCT.size:
                continue
            seq, _t_send, theta, theta_dot = SENSOR_STRUCT.unpack(data)
            u = control_law(theta, theta_dot, self.gains)
            try:
                self._sock.sendto(COMMAND_STRUCT.pack(seq, u), peer)
            except OSError:
                continue
            self.handled += 1
