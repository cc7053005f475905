"""HTTP gateway: REST surface plus a line-delimited JSON event stream.

Serves the dashboard static files when a UI directory is configured.
Endpoints:

    GET  /api/tasks            latest task table with activity buckets
    GET  /api/timer-tree       nested timer tree
    GET  /api/modules          module list
    GET  /api/baseline         active baseline (404 when none)
    GET  /api/alerts           append-only alert list
    GET  /api/stream           NDJSON: every streamed record and alert
    POST /api/command          {"text": "..."} -> RecordSet as JSON
    POST /api/baseline/build   {"duration_s": .., "rate_hz": ..}

Malformed commands give 400; a dead device connection gives 502.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import queue
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional, Tuple

from ..errors import (BadArgument, ConnectionLost, DiverError, ParseError,
                      Timeout, UnknownVerb)
from .baseline import build_baseline, save_baseline
from .client import DeviceClient
from .monitor import ListenerState

log = logging.getLogger("diver.gateway")

_FALLBACK_PAGE = b"""<!doctype html>
<html><head><title>diver listener</title></head>
<body><h1>diver listener gateway</h1>
<p>No dashboard UI is configured. The JSON API lives under /api/.</p>
</body></html>
"""


def _tree_from_rows(rows):
    """Rebuild nesting from canonical pre-order (depth-first) rows."""
    root = None
    stack = []  # (depth, node)
    for depth, timer_id, period, callback_id, address, code_hash, kind in rows:
        while stack and stack[-1][0] >= depth:
            stack.pop()
        node = stack[-1][1] if stack else None
        current = None
        if node is not None:
            for child in node["children"]:
                if child["timer_id"] == timer_id:
                    current = child
                    break
        elif root is not None and root["timer_id"] == timer_id:
            current = root
        if current is None:
            current = {"timer_id": timer_id, "period_ticks": period,
                       "callbacks": [], "children": []}
            if node is None:
                root = current
            else:
                node["children"].append(current)
        if callback_id >= 0:
            current["callbacks"].append({"callback_id": callback_id,
                                         "address": address,
                                         "code_hash": code_hash,
                                         "kind": kind})
        stack.append((depth, current))
    return root


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "diver-gateway"

    def log_message(self, fmt, *args):
        log.debug("http: " + fmt, *args)

    @property
    def gw(self) -> "Gateway":
        return self.server.gateway

    # --- helpers ---

    def _json(self, status: int, body) -> None:
        data = json.dumps(body).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length", "0") or "0")
        if length <= 0:
            return {}
        raw = self.rfile.read(length)
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError:
            raise BadArgument("body must be JSON") from None
        if not isinstance(doc, dict):
            raise BadArgument("body must be a JSON object")
        return doc

    def _client(self) -> DeviceClient:
        client = self.gw.client
        if client is None:
            raise ConnectionLost("no device connection")
        return client

    # --- routes ---

    def do_GET(self):
        try:
            path = self.path.split("?", 1)[0]
            if path == "/api/tasks":
                return self._get_tasks()
            if path == "/api/timer-tree":
                rs = self._client().command("timer_tree")
                return self._json(200, {"tick": rs.tick,
                                        "tree": _tree_from_rows(rs.rows)})
            if path == "/api/modules":
                rs = self._client().command("modules")
                return self._json(200, {"tick": rs.tick, "modules": rs.dicts()})
            if path == "/api/baseline":
                baseline = self.gw.state.baseline
                if baseline is None:
                    return self._json(404, {"error": {"code": "NoBaseline",
                                                      "msg": "no baseline loaded"}})
                return self._json(200, baseline.to_dict())
            if path == "/api/alerts":
                return self._json(200, {"alerts": [a.to_dict()
                                                   for a in self.gw.state.alerts]})
            if path == "/api/stream":
                return self._stream()
            return self._static(path)
        except (ConnectionLost, Timeout) as e:
            self._json(502, {"error": {"code": e.code, "msg": e.msg}})
        except DiverError as e:
            self._json(400, {"error": {"code": e.code, "msg": e.msg}})
        except (BrokenPipeError, ConnectionResetError):
            pass

    def do_POST(self):
        try:
            path = self.path.split("?", 1)[0]
            if path == "/api/command":
                return self._post_command()
            if path == "/api/baseline/build":
                return self._post_build()
            self._json(404, {"error": {"code": "NotFound", "msg": self.path}})
        except (ConnectionLost, Timeout) as e:
            self._json(502, {"error": {"code": e.code, "msg": e.msg}})
        except (ParseError, UnknownVerb, BadArgument) as e:
            self._json(400, {"error": {"code": e.code, "msg": e.msg}})
        except DiverError as e:
            self._json(400, {"error": {"code": e.code, "msg": e.msg}})
        except (BrokenPipeError, ConnectionResetError):
            pass

    def _get_tasks(self):
        state = self.gw.state
        with state.lock:
            tasks = list(state.latest_tasks)
        if not tasks:
            rs = self._client().command("task_details", id="all")
            tasks = [{"name": d["name"], "state": d["state"],
                      "priority": d["priority"], "ready_fraction": None,
                      "distinct_pc": None, "activity": None}
                     for d in rs.dicts()]
        self._json(200, {"tasks": tasks})

    def _post_command(self):
        doc = self._read_body()
        text = doc.get("text", "")
        if not isinstance(text, str) or not text.strip():
            raise ParseError("command text is empty")
        rs = self._client().send_command(text, timeout=float(doc.get("timeout", 60.0)))
        self._json(200, {"kind": rs.kind, "tick": rs.tick,
                         "columns": rs.columns, "rows": rs.rows})

    def _post_build(self):
        doc = self._read_body()
        duration = float(doc.get("duration_s", 60.0))
        rate = float(doc.get("rate_hz", 1.0))
        baseline = build_baseline(self._client(), sample_rate_hz=rate,
                                  duration_s=duration)
        self.gw.state.baseline = baseline
        if self.gw.baseline_path:
            save_baseline(baseline, self.gw.baseline_path)
        self._json(200, {"built": True, "device_id": baseline.device_id,
                         "tasks": sorted(baseline.task_profiles),
                         "created_at_ms": baseline.created_at_ms})

    def _stream(self):
        q = self.gw.state.subscribe_events()
        try:
            self.send_response(200)
            self.send_header("Content-Type", "application/x-ndjson")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            hello = {"type": "hello", "baseline": self.gw.state.baseline is not None}
            self.wfile.write((json.dumps(hello) + "\n").encode())
            self.wfile.flush()
            while not self.gw.stopping.is_set():
                try:
                    event = q.get(timeout=10.0)
                except queue.Empty:
                    event = {"type": "ping"}
                self.wfile.write((json.dumps(event) + "\n").encode())
                self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError, OSError):
            pass
        finally:
            self.gw.state.unsubscribe_events(q)

    def _static(self, path: str):
        ui_dir = self.gw.ui_dir
        if path in ("/", "/index.html"):
            if ui_dir is not None and (ui_dir / "index.html").is_file():
                return self._send_file(ui_dir / "index.html")
            self.send_response(200)
            self.send_header("Content-Type", "text/html")
            self.send_header("Content-Length", str(len(_FALLBACK_PAGE)))
            self.end_headers()
            self.wfile.write(_FALLBACK_PAGE)
            return
        if ui_dir is not None:
            target = (ui_dir / path.lstrip("/")).resolve()
            if str(target).startswith(str(ui_dir.resolve())) and target.is_file():
                return self._send_file(target)
        self._json(404, {"error": {"code": "NotFound", "msg": path}})

    def _send_file(self, target: Path):
        data = target.read_bytes()
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


class Gateway:
    def __init__(self, state: ListenerState, client: Optional[DeviceClient],
                 bind: Tuple[str, int] = ("127.0.0.1", 0),
                 ui_dir: Optional[str] = None,
                 baseline_path: Optional[str] = None):
        self.state = state
        self.client = client
        self.ui_dir = Path(ui_dir) if ui_dir else None
        self.baseline_path = baseline_path
        self.stopping = threading.Event()
        self._httpd = ThreadingHTTPServer(bind, _Handler)
        self._httpd.daemon_threads = True
        self._httpd.gateway = self
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> Tuple[str, int]:
        return self._httpd.server_address[:2]

    def start(self) -> "Gateway":
        self._thread = threading.Thread(target=self._httpd.serve_forever,
                                        name="gateway-http", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.stopping.set()
        self.state.broadcast({"type": "bye"})
        self._httpd.shutdown()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
        self._httpd.server_close()
