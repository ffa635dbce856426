"""HTTP annotation service with live taxonomy updates.

Endpoints::

    POST   /v1/predict        {"text"| "vector", "k"?, "doc_id"?}
    POST   /v1/labels         {"id", "name", "description"}
    DELETE /v1/labels/{id}
    GET    /v1/taxonomy
    GET    /v1/healthz

State is an immutable (taxonomy, index) snapshot behind one attribute.
Readers take the current reference and never lock; writers serialize on a
lock, build a new snapshot and swap the reference.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import unquote, urlsplit

from .annotator import predict_label_similarity
from .core import LabelEntry, Taxonomy, check_closed_world
from .errors import (
    DimensionMismatch,
    DuplicateLabel,
    EmbeddingServiceError,
    EmptyDescription,
    EmptyIndex,
    EmptyText,
    InvalidK,
    NonFiniteEntry,
    UnknownLabel,
    ZeroVector,
)
from .gateway import Embedder
from .label_index import SemanticIndex, check_k

logger = logging.getLogger(__name__)


class BadRequest(ValueError):
    pass


class GatewayMissing(RuntimeError):
    pass


@dataclass(frozen=True)
class Snapshot:
    taxonomy: Taxonomy
    index: SemanticIndex

    @property
    def version(self) -> int:
        return self.index.taxonomy_version


class ServiceState:
    """Mutable deployment of an index: predictions plus label add/remove."""

    def __init__(self, index: SemanticIndex, taxonomy: Taxonomy, k: int = 5, embedder: Embedder | None = None):
        if list(index.ids) != taxonomy.ids:
            raise ValueError("index rows and taxonomy labels differ")
        taxonomy = taxonomy.copy()
        taxonomy.version = index.taxonomy_version
        self._snapshot = Snapshot(taxonomy, index)
        self._write_lock = threading.Lock()
        self.default_k = check_k(k)
        self.embedder = embedder
        self.started = time.time()
        self._counts_lock = threading.Lock()
        self.request_counts: dict[str, int] = {}

    @property
    def snapshot(self) -> Snapshot:
        return self._snapshot

    def count(self, path: str) -> None:
        with self._counts_lock:
            self.request_counts[path] = self.request_counts.get(path, 0) + 1

    def predict(self, *, text: str | None = None, vector=None, k: int | None = None, doc_id: str | None = None) -> dict:
        if (text is None) == (vector is None):
            raise BadRequest('supply exactly one of "text" or "vector"')
        k = self.default_k if k is None else check_k(k)
        if text is not None:
            if not isinstance(text, str):
                raise BadRequest('"text" must be a string')
            if not text.strip():
                raise EmptyText("cannot embed an empty text")
            if self.embedder is None:
                raise GatewayMissing("no embedding gateway configured; send a vector instead")
            vector = self.embedder.embed_texts([text])[0]
        elif not isinstance(vector, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in vector):
            raise BadRequest('"vector" must be a list of numbers')
        snap = self._snapshot
        pred = predict_label_similarity(vector, snap.index, k, doc_id or "")
        check_closed_world(pred, snap.taxonomy)
        out = {"labels": pred.labels, "scores": pred.scores, "taxonomy_version": snap.version}
        if doc_id is not None:
            out["doc_id"] = doc_id
        return out

    def add_label(self, label_id: str, name: str, description: str) -> int:
        entry = LabelEntry(label_id, name, description)
        if label_id in self._snapshot.index:
            raise DuplicateLabel(label_id)
        if self.embedder is None:
            raise GatewayMissing("no embedding gateway configured")
        vec = self.embedder.embed_texts([description])[0]
        entry = entry.with_embedding(vec)
        with self._write_lock:
            snap = self._snapshot
            index = snap.index.add(entry)
            taxonomy = snap.taxonomy.copy()
            taxonomy.add(entry)
            self._snapshot = Snapshot(taxonomy, index)
            return index.taxonomy_version

    def remove_label(self, label_id: str) -> int:
        with self._write_lock:
            snap = self._snapshot
            index = snap.index.remove(label_id)
            taxonomy = snap.taxonomy.copy()
            taxonomy.remove(label_id)
            self._snapshot = Snapshot(taxonomy, index)
            return index.taxonomy_version

    def taxonomy_json(self) -> dict:
        snap = self._snapshot
        return {"taxonomy_version": snap.version, "labels": [e.to_json() for e in snap.taxonomy]}

    def health(self) -> dict:
        stats = self._snapshot.index.stats
        return {
            "status": "ok",
            "labels": stats.K,
            "dim": stats.dim,
            "taxonomy_version": stats.version,
            "gateway": self.embedder is not None,
            "uptime_s": round(time.time() - self.started, 3),
        }


def _status_for(exc: Exception) -> HTTPStatus:
    if isinstance(exc, (BadRequest, InvalidK, EmptyText, EmptyDescription)):
        return HTTPStatus.BAD_REQUEST
    if isinstance(exc, (DimensionMismatch, ZeroVector, NonFiniteEntry)):
        return HTTPStatus.UNPROCESSABLE_ENTITY
    if isinstance(exc, (DuplicateLabel, EmptyIndex)):
        return HTTPStatus.CONFLICT
    if isinstance(exc, UnknownLabel):
        return HTTPStatus.NOT_FOUND
    if isinstance(exc, (EmbeddingServiceError, GatewayMissing)):
        return HTTPStatus.SERVICE_UNAVAILABLE
    return HTTPStatus.INTERNAL_SERVER_ERROR


class _Handler(BaseHTTPRequestHandler):
    state: ServiceState
    protocol_version = "HTTP/1.1"
    server_version = "rannot"

    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        pass

    def _send(self, status: int, body: dict) -> None:
        raw = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)
        self._status = status
        self._version = body.get("taxonomy_version", self.state.snapshot.version)

    def _body(self) -> dict:
        ctype = self.headers.get("Content-Type", "")
        if ctype.split(";")[0].strip().lower() != "application/json":
            raise BadRequest("Content-Type must be application/json")
        length = int(self.headers.get("Content-Length") or 0)
        try:
            body = json.loads(self.rfile.read(length).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise BadRequest(f"body is not valid UTF-8 JSON: {exc}") from None
        if not isinstance(body, dict):
            raise BadRequest("body must be a JSON object")
        return body

    def _dispatch(self, method: str) -> None:
        start = time.perf_counter()
        path = urlsplit(self.path).path
        self._status, self._version = 500, None
        try:
            self.state.count(path)
            self._route(method, path)
        except Exception as exc:  # mapped to a status code; unknown ones become 500
            status = _status_for(exc)
            if status == HTTPStatus.INTERNAL_SERVER_ERROR:
                logger.exception("unhandled error on %s %s", method, path)
            self._send(status, {"error": type(exc).__name__, "message": str(exc)})
        finally:
            logger.info(
                "%s %s %s %.1fms v=%s", method, path, self._status, 1000 * (time.perf_counter() - start), self._version
            )

    def _route(self, method: str, path: str) -> None:
        st = self.state
        if method == "POST" and path == "/v1/predict":
            b = self._body()
            k = b.get("k")
            if k is not None and (isinstance(k, bool) or not isinstance(k, int)):
                raise BadRequest('"k" must be an integer')
            doc_id = b.get("doc_id")
            self._send(200, st.predict(text=b.get("text"), vector=b.get("vector"), k=k, doc_id=doc_id))
        elif method == "POST" and path == "/v1/labels":
            b = self._body()
            fields = [b.get(f) for f in ("id", "name", "description")]
            if not all(isinstance(f, str) for f in fields) or not fields[0]:
                raise BadRequest('"id", "name" and "description" must be strings')
            self._send(201, {"taxonomy_version": st.add_label(*fields)})
        elif method == "DELETE" and path.startswith("/v1/labels/"):
            label_id = unquote(path[len("/v1/labels/") :])
            self._send(200, {"taxonomy_version": st.remove_label(label_id)})
        elif method == "GET" and path == "/v1/taxonomy":
            self._send(200, st.taxonomy_json())
        elif method == "GET" and path == "/v1/healthz":
            self._send(200, st.health())
        else:
            self._send(404, {"error": "NotFound", "message": f"no route for {method} {path}"})

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_DELETE(self):
        self._dispatch("DELETE")


def make_server(state: ServiceState, host: str = "127.0.0.1", port: int = 8080) -> ThreadingHTTPServer:
    """Bind a threaded HTTP server; call ``serve_forever()`` on the result."""
    handler = type("AnnotationHandler", (_Handler,), {"state": state})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server
