"""Deterministic local chat-completion endpoint for tests and offline runs.

Modes
-----
echo
    Replies with the "Combined preliminary forecast" list from the prompt.
garbage
    Replies with prose and no list.
fixed
    Replies with ``value`` repeated to the requested length.
"""

from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
import json
import re
import threading

import httpx

from .calibrate import SECTION_COMBINED, fmt

MODES = ("echo", "garbage", "fixed")
GARBAGE_REPLY = "I am not able to produce a forecast for this series right now."
_LEN_RE = re.compile(r"Output exactly (\d+) numbers")


def reply_for(prompt, mode="echo", value=9.9):
    if mode == "garbage":
        return GARBAGE_REPLY
    if mode == "fixed":
        m = _LEN_RE.search(prompt)
        n = int(m.group(1)) if m else 1
        return "[" + ", ".join([fmt(value)] * n) + "]"
    if mode == "echo":
        lines = prompt.splitlines()
        for i, line in enumerate(lines):
            if line.strip() == SECTION_COMBINED and i + 1 < len(lines):
                return lines[i + 1]
        return GARBAGE_REPLY
    raise ValueError(f"unknown mock mode {mode!r}")


def _completion(content):
    return {
        "id": "mock-0",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
    }


def _user_prompt(body):
    msgs = body.get("messages") or []
    users = [m.get("content", "") for m in msgs if m.get("role") == "user"]
    return users[-1] if users else ""


def mock_transport(mode="echo", value=9.9):
    """:class:`httpx.MockTransport` answering like the HTTP mock, without sockets."""

    def handler(request):
        body = json.loads(request.content or b"{}")
        return httpx.Response(200, json=_completion(reply_for(_user_prompt(body), mode, value)))

    return httpx.MockTransport(handler)


class _Handler(BaseHTTPRequestHandler):
    mode = "echo"
    value = 9.9

    def do_POST(self):
        if not self.path.rstrip("/").endswith("/chat/completions"):
            self.send_error(404)
            return
        length = int(self.headers.get("Content-Length") or 0)
        try:
            body = json.loads(self.rfile.read(length) or b"{}")
        except json.JSONDecodeError:
            self.send_error(400)
            return
        data = json.dumps(_completion(reply_for(_user_prompt(body), self.mode, self.value))).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


class MockServer:
    """Mock endpoint on a background thread. ``base_url`` ends in ``/v1``.

    Use as a context manager; port 0 picks a free port.
    """

    def __init__(self, mode="echo", value=9.9, host="127.0.0.1", port=0):
        if mode not in MODES:
            raise ValueError(f"unknown mock mode {mode!r}")
        handler = type("Handler", (_Handler,), {"mode": mode, "value": value})
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self._thread = None

    @property
    def base_url(self):
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}/v1"

    def start(self):
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self):
        self.httpd.serve_forever()

    def stop(self):
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
