"""Shared fixtures: document builders, stub scorers, and a stub score server."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from tablescope.model import Document, document_from_dict

WORDS = [
    "accuracy", "baseline", "corpus", "dataset", "error", "feature", "gradient",
    "header", "inference", "judge", "kernel", "latency", "metric", "network",
    "outcome", "pipeline", "query", "recall", "sample", "token", "update",
    "vector", "weight", "yield", "zone",
]


def block_dict(block_id: str, kind: str, text: str, bbox=(0.0, 0.0, 10.0, 10.0)) -> dict:
    return {"block_id": block_id, "type": kind, "bbox": list(bbox), "text": text}


def doc_dict(doc_id: str, pages: list[list[dict]], source: str = "arXiv") -> dict:
    return {
        "doc_id": doc_id,
        "source": source,
        "pages": [
            {"page_id": i, "width_px": 1000.0, "height_px": 1400.0, "blocks": blocks}
            for i, blocks in enumerate(pages)
        ],
    }


def build_doc(doc_id: str, pages: list[list[dict]], source: str = "arXiv") -> Document:
    return document_from_dict(doc_dict(doc_id, pages, source=source))


def random_document(rng, doc_id: str, max_tables: int = 5, max_texts: int = 30) -> Document:
    """Synthetic document with numbered tables and a mix of citing/non-citing text."""
    n_tables = int(rng.integers(1, max_tables + 1))
    n_texts = int(rng.integers(1, max_texts + 1))
    n_pages = int(rng.integers(1, 4))
    pages: list[list[dict]] = [[] for _ in range(n_pages)]

    def words(lo, hi):
        return " ".join(rng.choice(WORDS, size=int(rng.integers(lo, hi))))

    for i in range(n_tables):
        text = f"Table {i + 1}: {words(2, 8)}" if rng.random() < 0.8 else words(2, 8)
        pages[int(rng.integers(0, n_pages))].append(block_dict(f"tab-{i:03d}", "Table", text))
    for j in range(n_texts):
        if rng.random() < 0.4:
            cited = int(rng.integers(1, n_tables + 1))
            text = f"As shown in Table {cited}, {words(3, 10)}."
        else:
            text = words(3, 12)
        kind = "List" if rng.random() < 0.2 else "Text"
        pages[int(rng.integers(0, n_pages))].append(block_dict(f"txt-{j:03d}", kind, text))
    return build_doc(doc_id, pages)


class StubPairScorer:
    """Scores each (table, text) pair through a plain function."""

    def __init__(self, fn):
        self.fn = fn

    def score_pairs(self, doc, pairs):
        return [self.fn(table, text) for table, text in pairs]


class StubQueryScorer:
    def __init__(self, fn):
        self.fn = fn

    def score_query(self, doc, query, tables):
        return [self.fn(query, table, i) for i, table in enumerate(tables)]


class StubScoreServer:
    """Minimal /score and /score_query HTTP stub with request recording.

    behavior(path, body) -> (status, payload) may be swapped per test.
    """

    def __init__(self):
        self.requests: list[tuple[str, dict]] = []
        self.behavior = lambda path, body: (200, {"scores": [0.5] * len(body.get("pairs", body.get("tables", [])))})
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length).decode("utf-8"))
                stub.requests.append((self.path, body))
                status, payload = stub.behavior(self.path, body)
                data = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def endpoint(self) -> str:
        return f"http://127.0.0.1:{self.server.server_address[1]}"

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def score_server():
    server = StubScoreServer()
    yield server
    server.close()


# ---------------------------------------------------------------------------
# Acceptance criterion reporting
# ---------------------------------------------------------------------------

ACCEPTANCE_RESULTS: dict[str, str] = {}


def record_criterion(name: str, status: str) -> None:
    ACCEPTANCE_RESULTS[name] = status


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"{name}: {ACCEPTANCE_RESULTS[name]}")
