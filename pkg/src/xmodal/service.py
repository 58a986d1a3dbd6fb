"""Small HTTP retrieval service over a loaded fused index.

Endpoints (JSON over HTTP/1.1):
  POST /v1/search  {vector | study_id+modality, k}  ->  ranked results
  GET  /v1/healthz ->  "ok"
  GET  /v1/stats   ->  entry count, dimension, build metadata

The index is immutable after load, so any number of concurrent requests
return the same results as sequential execution.
"""

from __future__ import annotations

import json
import logging
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .errors import DegenerateVectorError, NotFoundError, XmodalError
from .index import FusedIndex, load_index, query_by_id, search
from .ingest import EmbeddingSet, read_embeddings
from .model import ModelParams, load_params

logger = logging.getLogger(__name__)

MAX_K = 1000
LABEL_NAMES = {0: "normal", 1: "abnormal", 255: "unlabeled"}


class RequestProblem(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


class RetrievalApp:
    """Request handling logic, independent of the HTTP plumbing."""

    def __init__(
        self,
        index: FusedIndex,
        embeddings: EmbeddingSet | None = None,
        params: ModelParams | None = None,
        source: str = "",
    ):
        self.index = index
        self.embeddings = embeddings
        self.params = params
        self.source = source

    def stats(self) -> dict:
        return {
            "entries": len(self.index),
            "dim": self.index.dim,
            "source": self.source,
            "model_loaded": self.params is not None,
            "embeddings_loaded": self.embeddings is not None,
        }

    def search_request(self, body: dict) -> dict:
        started = time.perf_counter()
        if not isinstance(body, dict):
            raise RequestProblem(400, "request body must be a JSON object")
        has_vector = "vector" in body
        has_id = "study_id" in body
        if has_vector == has_id:
            raise RequestProblem(400, "provide exactly one of 'vector' or 'study_id'")

        k = body.get("k", 10)
        if not isinstance(k, int) or isinstance(k, bool) or not 1 <= k <= MAX_K:
            raise RequestProblem(400, f"'k' must be an integer in 1..{MAX_K}")

        try:
            if has_vector:
                vector = body["vector"]
                if not isinstance(vector, list) or not all(isinstance(v, (int, float)) for v in vector):
                    raise RequestProblem(400, "'vector' must be a list of numbers")
                if len(vector) != self.index.dim:
                    raise RequestProblem(
                        400, f"vector has dimension {len(vector)}, index expects {self.index.dim}"
                    )
                hits = search(self.index, vector, k)
            else:
                modality = body.get("modality")
                if modality not in ("image", "text"):
                    raise RequestProblem(400, "'modality' must be 'image' or 'text' for study_id queries")
                if self.embeddings is None:
                    raise RequestProblem(400, "service has no embedding set loaded; study_id queries unavailable")
                hits = query_by_id(
                    self.index,
                    self.embeddings,
                    self.params,
                    str(body["study_id"]),
                    modality,
                    k,
                    exclude_self=bool(body.get("exclude_self", False)),
                )
        except NotFoundError as exc:
            raise RequestProblem(404, str(exc)) from exc
        except DegenerateVectorError as exc:
            raise RequestProblem(400, str(exc)) from exc
        except XmodalError as exc:
            raise RequestProblem(400, str(exc)) from exc

        return {
            "results": [
                {"study_id": h.study_id, "label": LABEL_NAMES[h.label], "score": h.score} for h in hits
            ],
            "took_ms": (time.perf_counter() - started) * 1000.0,
        }


def _make_handler(app: RetrievalApp):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            logger.debug("%s - %s", self.address_string(), fmt % args)

        def _respond(self, status: int, payload, content_type="application/json"):
            body = payload if isinstance(payload, bytes) else json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            if self.path == "/v1/healthz":
                self._respond(200, b"ok", content_type="text/plain")
            elif self.path == "/v1/stats":
                self._respond(200, app.stats())
            else:
                self._respond(404, {"error": f"unknown path {self.path}"})

        def do_POST(self):
            if self.path != "/v1/search":
                self._respond(404, {"error": f"unknown path {self.path}"})
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                raw = self.rfile.read(length)
                body = json.loads(raw.decode("utf-8"))
            except (ValueError, UnicodeDecodeError):
                self._respond(400, {"error": "request body is not valid JSON"})
                return
            try:
                self._respond(200, app.search_request(body))
            except RequestProblem as exc:
                self._respond(exc.status, {"error": str(exc)})

    return Handler


def make_server(app: RetrievalApp, host: str = "127.0.0.1", port: int = 8080) -> ThreadingHTTPServer:
    return ThreadingHTTPServer((host, port), _make_handler(app))


def serve(
    index_path: str,
    embeddings_path: str | None = None,
    model_path: str | None = None,
    bind: str = "127.0.0.1:8080",
) -> None:
    """Load artifacts and block serving requests until interrupted."""
    app = RetrievalApp(
        index=load_index(index_path),
        embeddings=read_embeddings(embeddings_path) if embeddings_path else None,
        params=load_params(model_path) if model_path else None,
        source=str(index_path),
    )
    host, _, port = bind.rpartition(":")
    server = make_server(app, host or "127.0.0.1", int(port))
    logger.info("serving %d entries (dim %d) on %s", len(app.index), app.index.dim, bind)
    try:
        server.serve_forever()
    finally:
        server.server_close()
