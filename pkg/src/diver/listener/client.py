"""Protocol client: one TCP connection to a measurer.

A reader thread demultiplexes incoming frames: command responses feed a
reply queue (one outstanding command at a time), pushed stream frames
are routed to per-subscription callbacks via their ``sub`` column.
"""

from __future__ import annotations

import collections
import logging
import queue
import socket
import threading
from typing import Callable, Dict, Optional, Tuple

from ..command import format_command
from ..errors import ConnectionLost, DiverError, Timeout
from ..framing import (DIR_CLIENT, DIR_SERVER, make_client_hello,
                       read_server_hello, recv_frame_bytes)
from ..recordset import RecordSet, parse

log = logging.getLogger("diver.listener")


class DeviceClient:
    def __init__(self, address: Tuple[str, int], psk: bytes,
                 encrypt: bool = True, skew_window_ms: int = 30_000,
                 connect_timeout: float = 10.0):
        self.address = address
        self.encrypt = encrypt
        self._sock = socket.create_connection(address, timeout=connect_timeout)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        hello, nonce = make_client_hello(psk, encrypt)
        self._sock.sendall(hello)
        reply = recv_frame_bytes(self._sock)
        self._session = read_server_hello(reply, psk, nonce, encrypt,
                                          skew_window_ms)
        self._send_lock = threading.Lock()
        self._request_lock = threading.Lock()
        self._replies: "queue.Queue" = queue.Queue()
        self._subs: Dict[int, Callable[[RecordSet], None]] = {}
        self._subs_lock = threading.Lock()
        self._early_stream = collections.deque(maxlen=256)
        self._closed = threading.Event()
        self._sock.settimeout(0.5)
        self._reader = threading.Thread(target=self._read_loop,
                                        name="client-reader", daemon=True)
        self._reader.start()

    @property
    def session_id(self) -> bytes:
        return self._session.session_id

    def close(self) -> None:
        if self._closed.is_set():
            return
        self._closed.set()
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()

    # --- wire ---

    def _send_payload(self, text: str, stream: bool = False) -> None:
        if self._closed.is_set():
            raise ConnectionLost("client is closed")
        with self._send_lock:
            raw = self._session.seal(DIR_CLIENT, text.encode(), stream=stream)
            try:
                self._sock.sendall(raw)
            except OSError as e:
                raise ConnectionLost(str(e)) from None

    def _read_loop(self) -> None:
        while not self._closed.is_set():
            try:
                raw = recv_frame_bytes(self._sock)
            except socket.timeout:
                continue
            except (ConnectionLost, OSError):
                break
            try:
                frame = self._session.open(DIR_SERVER, raw)
            except DiverError as e:
                log.warning("dropping connection: %s: %s", e.code, e)
                break
            text = frame.payload.decode("utf-8", errors="replace")
            if frame.stream:
                self._handle_stream(text)
            else:
                try:
                    self._replies.put(("ok", parse(text)))
                except DiverError as e:
                    self._replies.put(("err", e))
        self._closed.set()
        self._replies.put(("closed", ConnectionLost("connection closed")))

    def _handle_stream(self, text: str) -> None:
        try:
            rs = parse(text)
        except DiverError as e:
            log.info("stream subscription reported error: %s: %s", e.code, e)
            return
        if "sub" not in rs.columns or not rs.rows:
            return
        sub_id = rs.rows[0][rs.columns.index("sub")]
        with self._subs_lock:
            handler = self._subs.get(sub_id)
        if handler is None:
            self._early_stream.append((sub_id, rs))
            return
        try:
            handler(rs)
        except Exception:
            log.exception("stream handler failed")

    # --- commands ---

    def send_command(self, text: str, timeout: float = 30.0) -> RecordSet:
        """Send one command line; returns its RecordSet or raises the
        error the device reported."""
        with self._request_lock:
            while True:  # drop replies orphaned by an earlier timeout
                try:
                    status, value = self._replies.get_nowait()
                    if status == "closed":
                        raise value
                except queue.Empty:
                    break
            self._send_payload(text if text.endswith("\n") else text + "\n")
            try:
                status, value = self._replies.get(timeout=timeout)
            except queue.Empty:
                raise Timeout(f"no response within {timeout}s") from None
        if status == "ok":
            return value
        raise value

    def command(self, verb: str, timeout: float = 30.0, **args) -> RecordSet:
        return self.send_command(format_command(verb, **args), timeout=timeout)

    # --- streams ---

    def subscribe(self, verb: str, rate_hz: float,
                  on_record: Callable[[RecordSet], None], **args) -> int:
        rs = self.command(verb, stream="on", rate=float(rate_hz), **args)
        sub_id = rs.dicts()[0]["sub"]
        with self._subs_lock:
            self._subs[sub_id] = on_record
        # Deliver anything that raced ahead of the ack.
        for sid, early in list(self._early_stream):
            if sid == sub_id:
                self._early_stream.remove((sid, early))
                try:
                    on_record(early)
                except Exception:
                    log.exception("stream handler failed")
        return sub_id

    def unsubscribe(self, sub_id: int) -> None:
        with self._subs_lock:
            self._subs.pop(sub_id, None)
        try:
            self.command("stop", sub=sub_id, timeout=10.0)
        except DiverError:
            pass

    def __enter__(self) -> "DeviceClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
