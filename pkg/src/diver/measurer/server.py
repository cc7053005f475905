"""TCP front end of the implant.

One acceptor thread, one handler thread per client.  Per connection:
handshake, then a query-response loop until disconnect or idle timeout.
Stream subscriptions run as per-connection timer threads pushing frames
on the same socket, flagged and carrying a ``sub`` column; the sequence
counter is shared with responses so seal+send happens under one lock.
Protocol failures (bad frames, bad auth, replays) close only the
offending connection and clean up its subscriptions.
"""

from __future__ import annotations

import logging
import socket
import threading
import time
from typing import Dict, Optional, Tuple

from ..command import parse_command
from ..errors import BadArgument, DiverError, Timeout, UnknownVerb
from ..framing import (DIR_CLIENT, DIR_SERVER, Session, make_server_hello,
                       read_client_hello, recv_frame_bytes)
from ..recordset import ack, serialize, serialize_error
from .backends import MAX_RATE_HZ, Backends

log = logging.getLogger("diver.measurer")


class _Subscription(threading.Thread):
    def __init__(self, conn: "_Connection", sub_id: int, cmd, rate_hz: float):
        super().__init__(name=f"stream-{sub_id}", daemon=True)
        self.conn = conn
        self.sub_id = sub_id
        self.cmd = cmd
        self.period = 1.0 / rate_hz
        self.cancel = threading.Event()

    def run(self) -> None:
        next_t = time.monotonic() + self.period
        while not self.cancel.is_set():
            delay = next_t - time.monotonic()
            if delay > 0:
                if self.cancel.wait(delay):
                    break
            next_t += self.period
            if time.monotonic() - next_t > 2 * self.period:
                next_t = time.monotonic() + self.period  # fell behind; resync
            try:
                rs = self.conn.server.backends.dispatch(self.cmd)
                self.conn.send_text(serialize(rs.with_sub(self.sub_id)), stream=True)
            except DiverError as e:
                try:
                    self.conn.send_text(serialize_error(e), stream=True)
                except Exception:
                    pass
                break
            except Exception:
                break


class _Connection:
    def __init__(self, server: "MeasurerServer", sock: socket.socket, peer):
        self.server = server
        self.sock = sock
        self.peer = peer
        self.session: Optional[Session] = None
        self.send_lock = threading.Lock()
        self.subscriptions: Dict[int, _Subscription] = {}
        self.closed = threading.Event()

    def send_text(self, text: str, stream: bool = False) -> None:
        # Seal and write under one lock so wire order matches seq order.
        with self.send_lock:
            raw = self.session.seal(DIR_SERVER, text.encode(), stream=stream)
            self.sock.sendall(raw)

    def close(self) -> None:
        if self.closed.is_set():
            return
        self.closed.set()
        for sub in list(self.subscriptions.values()):
            sub.cancel.set()
        self.subscriptions.clear()
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()
        self.server._forget(self)

    # --- request handling ---

    def serve(self) -> None:
        try:
            self.sock.settimeout(self.server.idle_timeout_s)
            hello = recv_frame_bytes(self.sock)
            client_nonce = read_client_hello(hello, self.server.psk,
                                             self.server.encrypt,
                                             self.server.skew_window_ms)
            reply, session = make_server_hello(self.server.psk, client_nonce,
                                               self.server.encrypt,
                                               self.server.skew_window_ms)
            self.session = session
            self.sock.sendall(reply)
            while not self.closed.is_set():
                try:
                    raw = recv_frame_bytes(self.sock)
                except socket.timeout:
                    self._try_notify(Timeout("idle timeout, closing"))
                    break
                frame = self.session.open(DIR_CLIENT, raw)
                self._handle_payload(frame.payload)
        except DiverError as e:
            log.debug("connection %s dropped: %s: %s", self.peer, e.code, e)
        except OSError:
            pass
        finally:
            self.close()

    def _try_notify(self, err: DiverError) -> None:
        try:
            self.send_text(serialize_error(err))
        except Exception:
            pass

    def _handle_payload(self, payload: bytes) -> None:
        try:
            text = payload.decode("utf-8")
        except UnicodeDecodeError:
            self._try_notify(BadArgument("payload is not UTF-8"))
            return
        try:
            cmd = parse_command(text)
            self._dispatch(cmd)
        except DiverError as e:
            self.send_text(serialize_error(e))
        except Exception as e:  # backend bug: report, keep serving
            log.exception("dispatch failure")
            self.send_text(serialize_error(DiverError(f"internal: {e}")))

    def _dispatch(self, cmd) -> None:
        if cmd.verb == "stop":
            sub_id = cmd.get_int("sub")
            sub = self.subscriptions.pop(sub_id, None) if sub_id is not None else None
            if sub is None:
                raise BadArgument(f"no subscription {sub_id}")
            sub.cancel.set()
            self.send_text(serialize(ack(self.server.backends.host.uptime())))
            return
        stream_arg = cmd.args.pop("stream", None)
        if stream_arg in ("on", True, 1):
            rate = cmd.get_float("rate", 1.0)
            cmd.args.pop("rate", None)
            if rate is None or rate <= 0 or rate > MAX_RATE_HZ:
                raise BadArgument(f"rate must be in (0, {MAX_RATE_HZ}]")
            if cmd.verb not in self.server.backends.STREAMABLE:
                if cmd.verb not in self.server.backends._verbs:
                    raise UnknownVerb(f"no such verb: {cmd.verb}")
                raise BadArgument(f"verb {cmd.verb} is not streamable")
            if "window" in cmd.args:
                raise BadArgument("windowed collection cannot be streamed")
            self.server.backends.dispatch(cmd)  # validate args once, fail fast
            sub_id = self.server._next_sub_id()
            sub = _Subscription(self, sub_id, cmd, rate)
            self.subscriptions[sub_id] = sub
            self.send_text(serialize(ack(self.server.backends.host.uptime(),
                                         "stream started", sub=sub_id)))
            sub.start()
            return
        rs = self.server.backends.dispatch(cmd)
        self.send_text(serialize(rs))
        if cmd.verb == "reset":
            # Ack already flushed; now drop every session and rebuild.
            self.server.backends.host.reset()


class MeasurerServer:
    def __init__(self, host, psk: bytes, listen=("127.0.0.1", 0),
                 encrypt: bool = True, idle_timeout_s: float = 120.0,
                 skew_window_ms: int = 30_000):
        self.backends = Backends(host)
        self.psk = psk
        self.encrypt = encrypt
        self.idle_timeout_s = idle_timeout_s
        self.skew_window_ms = skew_window_ms
        self._listen_addr = listen
        self._sock: Optional[socket.socket] = None
        self._accept_thread: Optional[threading.Thread] = None
        self._stop = threading.Event()
        self._conns: Dict[int, _Connection] = {}
        self._conns_lock = threading.Lock()
        self._sub_counter = 0
        self._sub_lock = threading.Lock()
        host.on_reset(self.close_all_connections)

    # --- lifecycle ---

    @property
    def address(self) -> Tuple[str, int]:
        return self._sock.getsockname()[:2]

    def start(self) -> "MeasurerServer":
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind(self._listen_addr)
        sock.listen(128)
        sock.settimeout(0.2)
        self._sock = sock
        self._stop.clear()
        self._accept_thread = threading.Thread(target=self._accept_loop,
                                               name="measurer-accept", daemon=True)
        self._accept_thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=5)
            self._accept_thread = None
        self.close_all_connections()
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                sock, peer = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn = _Connection(self, sock, peer)
            with self._conns_lock:
                self._conns[id(conn)] = conn
            threading.Thread(target=conn.serve, name=f"measurer-{peer}",
                             daemon=True).start()

    def _forget(self, conn: _Connection) -> None:
        with self._conns_lock:
            self._conns.pop(id(conn), None)

    def close_all_connections(self) -> None:
        with self._conns_lock:
            conns = list(self._conns.values())
        for conn in conns:
            conn.close()

    def _next_sub_id(self) -> int:
        with self._sub_lock:
            self._sub_counter += 1
            return self._sub_counter

    def subscription_count(self) -> int:
        with self._conns_lock:
            return sum(len(c.subscriptions) for c in self._conns.values())

    def connection_count(self) -> int:
        with self._conns_lock:
            return len(self._conns)
