from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from zsvmr.datasets import generate_synthetic


class StubServer:
    """OpenAI-style endpoints with scripted replies.

    ``replies`` is a list of (status, body) consumed in order; when it runs
    out, the default chat/embedding payloads are returned.
    """

    def __init__(self):
        self.requests: list[tuple[str, dict, dict]] = []
        self.replies: list[tuple[int, str | bytes]] = []
        self.chat_content = "A person opens a door."
        self.embedding = [0.5, 0.25, 0.25]
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                stub.requests.append((self.path, dict(self.headers), body))
                if stub.replies:
                    status, payload = stub.replies.pop(0)
                elif self.path.endswith("/chat/completions"):
                    status = 200
                    payload = json.dumps(
                        {"choices": [{"index": 0, "message": {"role": "assistant", "content": stub.chat_content}}]}
                    )
                elif self.path.endswith("/embeddings"):
                    status = 200
                    data = [
                        {"index": i, "embedding": [v + i for v in stub.embedding]} for i in range(len(body["input"]))
                    ]
                    payload = json.dumps({"data": list(reversed(data))})
                else:
                    status, payload = 404, "{}"
                raw = payload.encode() if isinstance(payload, str) else payload
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(raw)))
                self.end_headers()
                self.wfile.write(raw)

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.httpd.server_address[1]}"
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def stub_server():
    with StubServer() as server:
        yield server


@pytest.fixture(scope="session")
def small_synthetic():
    return generate_synthetic(seed=7, n_videos=6)


# ---------------------------------------------------------------------------
# acceptance summary: test_acceptance.py appends one line per criterion
# ---------------------------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
