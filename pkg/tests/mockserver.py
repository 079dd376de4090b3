"""In-process mock of a chat-completions endpoint for transport tests.

Scripted: each incoming POST consumes the next (status, body, headers) entry;
when the script runs out, the last entry repeats. Counts every request so
tests can assert on call volume (or its absence in dry-run mode).
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


def completion_body(text: str) -> dict:
    return {"choices": [{"message": {"role": "assistant", "content": text}}]}


class MockChatServer:
    def __init__(self, script=None):
        # script: list of (status, body_dict, headers_dict) tuples
        self.script = list(script or [])
        self.lock = threading.Lock()
        self.request_count = 0
        self.received_prompts: list[str] = []

        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length) or b"{}")
                with outer.lock:
                    index = outer.request_count
                    outer.request_count += 1
                    messages = payload.get("messages", [])
                    if messages:
                        outer.received_prompts.append(messages[-1].get("content", ""))
                    entry = (
                        outer.script[min(index, len(outer.script) - 1)]
                        if outer.script
                        else (200, completion_body("ok"), {})
                    )
                status, body, headers = entry
                data = json.dumps(body).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                for key, value in headers.items():
                    self.send_header(key, value)
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}/v1"

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._server.shutdown()
        self._server.server_close()
        return False
