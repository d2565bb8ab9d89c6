from __future__ import annotations

import json
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


def chat_response(top: dict[str, float], token: str | None = None) -> dict:
    """Minimal chat-completions body with logprobs for the first position."""
    ranked = sorted(top.items(), key=lambda kv: -kv[1])
    tok, lp = (token, top[token]) if token else ranked[0]
    return {
        "id": "stub",
        "object": "chat.completion",
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": tok},
            "logprobs": {"content": [{
                "token": tok,
                "logprob": lp,
                "top_logprobs": [{"token": t, "logprob": v} for t, v in ranked],
            }]},
            "finish_reason": "length",
        }],
    }


class StubServer:
    """Local OpenAI-compatible endpoint; ``responder(body) -> (status, payload)``."""

    def __init__(self, responder):
        self.responder = responder
        self.requests: list[dict] = []
        self.lock = threading.Lock()
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length))
                with stub.lock:
                    stub.requests.append({"path": self.path, "body": body,
                                          "auth": self.headers.get("Authorization")})
                status, payload = stub.responder(body)
                data = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, kwargs={"poll_interval": 0.02}, daemon=True)

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}/v1"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def stub_server():
    servers = []

    def make(responder):
        s = StubServer(responder).__enter__()
        servers.append(s)
        return s

    yield make
    for s in servers:
        s.__exit__(None, None, None)


@pytest.fixture
def items_file(tmp_path):
    path = tmp_path / "items.jsonl"
    recs = [
        {"id": "a", "text": "What is the capital of France?", "score": 70.0},
        {"id": "b", "text": "Which enzyme unwinds DNA?", "score": 50.0},
        {"id": "c", "text": "Name the {braces} question.", "score": 30.0},
    ]
    path.write_text("".join(json.dumps(r) + "\n" for r in recs), encoding="utf-8")
    return path


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
