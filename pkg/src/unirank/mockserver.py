"""Scripted local HTTP server for exercising remote backends.

    with MockServer([MockResponse(429), MockResponse(200, {"results": [...]})]) as srv:
        client = ApiRerankClient(ApiConfig(srv.url, "key"))
        ...
        assert len(srv.requests) == 2

Responses are served in script order, one per request, on any path. Once
the script runs out every further request gets HTTP 500.
"""

from __future__ import annotations

import json
import threading
import time
from collections.abc import Sequence
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any


@dataclass(frozen=True)
class MockResponse:
    status: int = 200
    body: Any = None
    delay_s: float = 0.0
    headers: dict[str, str] = field(default_factory=dict)

    def encode(self) -> bytes:
        if self.body is None:
            return b""
        if isinstance(self.body, bytes):
            return self.body
        if isinstance(self.body, str):
            return self.body.encode()
        return json.dumps(self.body).encode()


@dataclass(frozen=True)
class RecordedRequest:
    method: str
    path: str
    headers: dict[str, str]
    raw: bytes

    @property
    def json(self) -> Any:
        return json.loads(self.raw)


class MockServer:
    def __init__(self, script: Sequence[MockResponse], host: str = "127.0.0.1") -> None:
        self.script = list(script)
        self.requests: list[RecordedRequest] = []
        self._lock = threading.Lock()
        self._cursor = 0
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self) -> None:
                length = int(self.headers.get("Content-Length") or 0)
                raw = self.rfile.read(length)
                reply = server._next(RecordedRequest("POST", self.path, dict(self.headers), raw))
                if reply.delay_s:
                    time.sleep(reply.delay_s)
                payload = reply.encode()
                try:
                    self.send_response(reply.status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(payload)))
                    for k, v in reply.headers.items():
                        self.send_header(k, v)
                    self.end_headers()
                    self.wfile.write(payload)
                except (BrokenPipeError, ConnectionResetError):
                    # client gave up (timeout path)
                    pass

            do_GET = do_POST

            def log_message(self, format: str, *args: Any) -> None:
                pass

        self._httpd = ThreadingHTTPServer((host, 0), Handler)
        self._httpd.daemon_threads = True
        self._thread = threading.Thread(target=self._httpd.serve_forever, args=(0.02,), daemon=True)

    def _next(self, req: RecordedRequest) -> MockResponse:
        with self._lock:
            self.requests.append(req)
            if self._cursor < len(self.script):
                reply = self.script[self._cursor]
                self._cursor += 1
                return reply
        return MockResponse(500, {"error": "mock script exhausted"})

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    @property
    def url(self) -> str:
        return f"{self.base_url}/v1/rerank"

    def start(self) -> MockServer:
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)

    def __enter__(self) -> MockServer:
        return self.start()

    def __exit__(self, *exc: object) -> None:
        self.stop()


def mock_server_fixture(script: Sequence[MockResponse]) -> MockServer:
    """Start a :class:`MockServer` for ``script``; caller stops it."""
    return MockServer(script).start()
