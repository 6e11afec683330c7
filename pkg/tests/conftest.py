import hashlib
import json
import threading
import time
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest


def stub_vector(prompt: str, dim: int) -> np.ndarray:
    """Deterministic per-prompt vector (what the stub embedder answers)."""
    seed = int.from_bytes(hashlib.sha256(prompt.encode()).digest()[:8], "little")
    return np.random.default_rng(seed).standard_normal(dim)


class _StubHandler(BaseHTTPRequestHandler):
    dim = 8
    delay = 0.0

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        doc = json.loads(self.rfile.read(length))
        if self.delay:
            time.sleep(self.delay)
        vec = stub_vector(doc["prompt"], self.dim)
        body = json.dumps({"dim": self.dim, "vector": vec.tolist()}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_embedder():
    """Start local HTTP embedders answering deterministic prompt vectors."""
    started = []

    def start(dim=8, delay=0.0):
        handler = type("Handler", (_StubHandler,), {"dim": dim, "delay": delay})
        server = HTTPServer(("127.0.0.1", 0), handler)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        started.append(server)
        return f"http://127.0.0.1:{server.server_port}/embed"

    yield start
    for server in started:
        server.shutdown()
        server.server_close()
