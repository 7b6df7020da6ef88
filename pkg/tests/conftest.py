import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest


class _CompletionsHandler(BaseHTTPRequestHandler):
    """Deterministic completions endpoint: two steps, fixed logprobs."""

    fail_first = 0
    calls = 0

    def do_POST(self):
        cls = type(self)
        cls.calls += 1
        if cls.calls <= cls.fail_first:
            self.send_response(500)
            self.send_header("Content-Length", "0")
            self.end_headers()
            return
        length = int(self.headers["Content-Length"])
        req = json.loads(self.rfile.read(length))
        choices = []
        for i in range(req.get("n", 1)):
            choices.append(
                {
                    "index": i,
                    "text": f"answer text\n\\boxed{{{i}}}",
                    "logprobs": {
                        "tokens": ["alpha", "beta"],
                        "token_logprobs": [-0.25, -0.5],
                        "top_logprobs": [
                            {"alpha": -0.25, "gamma": -1.75},
                            {"beta": -0.5, "delta": -1.25},
                        ],
                    },
                }
            )
        body = json.dumps(
            {"id": "req-0001", "model": req.get("model", "m"), "choices": choices}
        ).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def completions_server():
    """Yields the base URL of a local deterministic completions server."""
    _CompletionsHandler.fail_first = 0
    _CompletionsHandler.calls = 0
    server = ThreadingHTTPServer(("127.0.0.1", 0), _CompletionsHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_address[1]}"
    finally:
        server.shutdown()
        thread.join(timeout=5)
