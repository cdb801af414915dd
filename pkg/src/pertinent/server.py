"""Minimal HTTP scoring service speaking the remote-model protocol (for tests and demos)."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np


def make_stub_server(host: str = "127.0.0.1", port: int = 0, model=None, scores=None,
                     ) -> ThreadingHTTPServer:
    """Server answering ``POST /scores``.

    With ``model`` it scores the posted instances; with ``scores`` it
    echoes those fixed rows (cycled to the request length). The server
    counts requests in ``server.requests``.
    """
    if (model is None) == (scores is None):
        raise ValueError("pass exactly one of model or scores")

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def _reply(self, code, payload):
            body = json.dumps(payload).encode()
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_POST(self):
            if self.path.rstrip("/") != "/scores":
                self._reply(404, {"error": "not found"})
                return
            length = int(self.headers.get("Content-Length", 0))
            try:
                instances = json.loads(self.rfile.read(length))["instances"]
            except (ValueError, KeyError, TypeError):
                self._reply(400, {"error": "body must be {\"instances\": [...]}"})
                return
            with lock:
                server.requests += 1
                server.batch_sizes.append(len(instances))
            if model is not None:
                try:
                    out = model.predict_scores([tuple(r) for r in instances]).tolist()
                except Exception as e:  # reported to the client as a server error
                    self._reply(500, {"error": str(e)})
                    return
            else:
                out = [list(scores[i % len(scores)]) for i in range(len(instances))]
            self._reply(200, {"scores": out})

    lock = threading.Lock()
    server = ThreadingHTTPServer((host, port), Handler)
    server.daemon_threads = True
    server.requests = 0
    server.batch_sizes = []
    return server


def serve_in_thread(server: ThreadingHTTPServer) -> str:
    """Start ``server`` on a daemon thread and return its base URL."""
    threading.Thread(target=server.serve_forever, daemon=True).start()
    host, port = server.server_address[:2]
    return f"http://{host}:{port}"


def fixed_scores(text: str) -> list[list[float]]:
    rows = np.asarray(json.loads(text), dtype=float)
    if rows.ndim != 2:
        raise ValueError("scores must be a JSON list of lists")
    return rows.tolist()
