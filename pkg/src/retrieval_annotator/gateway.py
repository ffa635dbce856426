"""Embedding sources: binary vector files and a remote embedding service.

Vector file layout (all little-endian)::

    b"TXVE" | version u16 | dim u32 | count u64
    then per record: id_len u16 | id (UTF-8) | dim x float32

Remote protocol: ``POST {base_url}/embed`` with ``{"model", "texts"}``,
answered by ``{"vectors": [[...], ...]}``.
"""

from __future__ import annotations

import hashlib
import logging
import os
import struct
import tempfile
import threading
import time
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import httpx
import numpy as np
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt, wait_exponential

from .core import as_vector
from .errors import (
    CorruptHeader,
    CountMismatch,
    DimensionMismatch,
    EmbeddingServiceError,
    EmptyText,
    MalformedResponse,
    NonFiniteEntry,
    ServiceUnreachable,
    UnknownDoc,
)

logger = logging.getLogger(__name__)

MAGIC = b"TXVE"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIQ")
_IDLEN = struct.Struct("<H")

ENV_URL = "RANNOT_EMBED_URL"
ENV_TOKEN = "RANNOT_EMBED_TOKEN"
ENV_MODEL = "RANNOT_EMBED_MODEL"


# -- vector files ------------------------------------------------------------


def write_vector_file(path: str | Path, records: Sequence[tuple[str, np.ndarray]], dim: int | None = None) -> Path:
    """Write ``(id, vector)`` records; output bytes depend only on the input."""
    path = Path(path)
    if dim is None:
        dim = len(records[0][1]) if records else 0
    chunks = [_HEADER.pack(MAGIC, FORMAT_VERSION, dim, len(records))]
    for rec_id, vec in records:
        vec = np.asarray(vec)
        if vec.ndim != 1 or vec.size != dim:
            raise DimensionMismatch(dim, vec.size)
        raw_id = rec_id.encode("utf-8")
        chunks.append(_IDLEN.pack(len(raw_id)))
        chunks.append(raw_id)
        chunks.append(vec.astype("<f4").tobytes())
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(chunks))
    return path


def load_vector_file(path: str | Path) -> list[tuple[str, np.ndarray]]:
    """Read a vector file into ``(id, float64 vector)`` records.

    Raises:
        CorruptHeader: bad magic, unknown version or short header.
        CountMismatch: fewer or more records than the header announces.
        NonFiniteEntry: a stored value is NaN or infinite.
    """
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CorruptHeader(f"{path}: file shorter than header")
    magic, version, dim, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise CorruptHeader(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise CorruptHeader(f"{path}: unsupported format version {version}")
    offset = _HEADER.size
    stride = 4 * dim
    records = []
    for n in range(count):
        if offset + _IDLEN.size > len(data):
            raise CountMismatch(f"{path}: header says {count} records, found {n}")
        (id_len,) = _IDLEN.unpack_from(data, offset)
        offset += _IDLEN.size
        end = offset + id_len + stride
        if end > len(data):
            raise CountMismatch(f"{path}: header says {count} records, found {n}")
        rec_id = data[offset : offset + id_len].decode("utf-8")
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=offset + id_len).astype(np.float64)
        if not np.all(np.isfinite(vec)):
            raise NonFiniteEntry(f"{path}: record {rec_id!r} has non-finite entries")
        records.append((rec_id, vec))
        offset = end
    if offset != len(data):
        raise CountMismatch(f"{path}: trailing bytes after {count} records")
    return records


# -- sources -------------------------------------------------------------------


class Embedder(Protocol):
    def embed_texts(self, texts: Sequence[str]) -> list[np.ndarray]: ...


class VectorFileSource:
    """Precomputed embeddings looked up by record id."""

    def __init__(self, path: str | Path, expected_dim: int | None = None):
        self.path = Path(path)
        records = load_vector_file(self.path)
        self.vectors = dict(records)
        self.dim = len(records[0][1]) if records else expected_dim
        if expected_dim is not None and self.dim != expected_dim:
            raise DimensionMismatch(expected_dim, self.dim)

    def lookup(self, ids: Iterable[str]) -> list[np.ndarray]:
        out = []
        for i in ids:
            try:
                out.append(self.vectors[i])
            except KeyError:
                raise UnknownDoc(f"no vector for id {i!r} in {self.path}") from None
        return out


class EmbeddingCache:
    """Content-addressed cache: sha256(model, text) -> vector.

    In memory, optionally mirrored to ``directory`` (one file per key,
    raw little-endian float64, written atomically).
    """

    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory else None
        self._mem: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    @staticmethod
    def key(model: str, text: str) -> str:
        h = hashlib.sha256()
        for part in (model, text):
            raw = part.encode("utf-8")
            h.update(len(raw).to_bytes(8, "little"))
            h.update(raw)
        return h.hexdigest()

    def _file(self, key: str) -> Path:
        return self.directory / key[:2] / f"{key}.f64"

    def get(self, model: str, text: str) -> np.ndarray | None:
        key = self.key(model, text)
        with self._lock:
            hit = self._mem.get(key)
        if hit is not None:
            return hit.copy()
        if self.directory is not None:
            f = self._file(key)
            if f.exists():
                vec = np.frombuffer(f.read_bytes(), dtype="<f8").astype(np.float64)
                with self._lock:
                    self._mem[key] = vec
                return vec.copy()
        return None

    def put(self, model: str, text: str, vec: np.ndarray) -> None:
        key = self.key(model, text)
        vec = np.array(vec, dtype=np.float64)
        with self._lock:
            self._mem[key] = vec
        if self.directory is not None:
            f = self._file(key)
            f.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=f.parent)
            with os.fdopen(fd, "wb") as fh:
                fh.write(vec.astype("<f8").tobytes())
            os.replace(tmp, f)

    def __len__(self) -> int:
        return len(self._mem)


class _Transient(Exception):
    pass


class RemoteEmbedder:
    """Client for an HTTP embedding service with batching, retry and caching.

    Args:
        base_url: service root; ``/embed`` is appended.
        model: model name sent with each request and mixed into cache keys.
        batch_size: maximum texts per request.
        timeout: per-request timeout in seconds.
        max_retries: retries after the first attempt on transient failures
            (connection errors, timeouts, HTTP 429 and 5xx).
        expected_dim: if set, every returned vector must have this length.
        cache: an :class:`EmbeddingCache`, or ``None`` to disable caching.
        max_chars: texts longer than this only trigger a warning; text is
            never truncated here.
    """

    def __init__(
        self,
        base_url: str,
        model: str = "default",
        *,
        batch_size: int = 32,
        timeout: float = 30.0,
        max_retries: int = 3,
        expected_dim: int | None = None,
        cache: EmbeddingCache | None = None,
        token: str | None = None,
        max_in_flight: int = 4,
        max_chars: int | None = None,
        backoff: float = 0.5,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if timeout <= 0:
            raise ValueError("timeout must be > 0")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.batch_size = batch_size
        self.timeout = timeout
        self.max_retries = max_retries
        self.expected_dim = expected_dim
        self.cache = cache
        self.max_chars = max_chars
        self.backoff = backoff
        self._sleep = sleep
        self._gate = threading.BoundedSemaphore(max_in_flight)
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)
        self.n_requests = 0
        self.n_texts_sent = 0
        self._count_lock = threading.Lock()

    @classmethod
    def from_env(cls, base_url: str | None = None, model: str | None = None, **kwargs) -> RemoteEmbedder:
        url = base_url or os.environ.get(ENV_URL)
        if not url:
            raise ServiceUnreachable(f"no embedding service URL (set {ENV_URL} or pass one)")
        return cls(url, model or os.environ.get(ENV_MODEL, "default"), token=os.environ.get(ENV_TOKEN), **kwargs)

    def close(self) -> None:
        self._client.close()

    def embed_texts(self, texts: Sequence[str]) -> list[np.ndarray]:
        """Embed ``texts`` in order; cached texts are not re-sent."""
        for t in texts:
            if not isinstance(t, str) or not t.strip():
                raise EmptyText("cannot embed an empty text")
            if self.max_chars is not None and len(t) > self.max_chars:
                logger.warning("text of %d chars exceeds max_chars=%d; sent verbatim", len(t), self.max_chars)
        out: list[np.ndarray | None] = [None] * len(texts)
        pending: dict[str, list[int]] = {}
        for i, t in enumerate(texts):
            hit = self.cache.get(self.model, t) if self.cache is not None else None
            if hit is not None:
                out[i] = self._check_dim(hit)
            else:
                pending.setdefault(t, []).append(i)
        todo = list(pending)
        for start in range(0, len(todo), self.batch_size):
            batch = todo[start : start + self.batch_size]
            vectors = self._request(batch)
            for t, vec in zip(batch, vectors):
                if self.cache is not None:
                    self.cache.put(self.model, t, vec)
                for i in pending[t]:
                    out[i] = vec.copy()
        return out  # type: ignore[return-value]

    def _check_dim(self, vec: np.ndarray) -> np.ndarray:
        if self.expected_dim is not None and vec.size != self.expected_dim:
            raise DimensionMismatch(self.expected_dim, vec.size, what="embedding")
        return vec

    def _request(self, batch: list[str]) -> list[np.ndarray]:
        retrying = Retrying(
            stop=stop_after_attempt(self.max_retries + 1),
            wait=wait_exponential(multiplier=self.backoff, max=30),
            retry=retry_if_exception_type(_Transient),
            sleep=self._sleep,
            reraise=True,
        )
        try:
            with self._gate:
                payload = retrying(self._post, batch)
        except _Transient as exc:
            raise ServiceUnreachable(f"embedding service at {self.base_url} failed: {exc}") from exc
        return self._parse(payload, len(batch))

    def _post(self, batch: list[str]) -> object:
        with self._count_lock:
            self.n_requests += 1
            self.n_texts_sent += len(batch)
        try:
            resp = self._client.post(f"{self.base_url}/embed", json={"model": self.model, "texts": batch})
        except httpx.TransportError as exc:
            raise _Transient(repr(exc)) from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise _Transient(f"HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise EmbeddingServiceError(f"embedding service rejected request: HTTP {resp.status_code}")
        try:
            return resp.json()
        except ValueError as exc:
            raise MalformedResponse("response body is not JSON") from exc

    def _parse(self, payload: object, n: int) -> list[np.ndarray]:
        if not isinstance(payload, dict) or not isinstance(payload.get("vectors"), list):
            raise MalformedResponse('response lacks a "vectors" list')
        raw = payload["vectors"]
        if len(raw) != n:
            raise MalformedResponse(f"expected {n} vectors, received {len(raw)}")
        vectors = []
        for row in raw:
            try:
                vec = as_vector(row)
            except (TypeError, ValueError) as exc:
                raise MalformedResponse(f"vector is not a list of numbers: {exc}") from exc
            if vec.size == 0 or not np.all(np.isfinite(vec)):
                raise MalformedResponse("vector is empty or has non-finite entries")
            vectors.append(self._check_dim(vec))
        dims = {v.size for v in vectors}
        if len(dims) > 1:
            raise MalformedResponse(f"vectors of mixed dimension {sorted(dims)}")
        return vectors


def embed_texts(texts: Sequence[str], source: Embedder) -> list[np.ndarray]:
    """Embed texts through ``source`` (anything with an ``embed_texts`` method)."""
    return source.embed_texts(texts)
