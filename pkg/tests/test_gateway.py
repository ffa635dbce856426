import hashlib
import json
import struct

import httpx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from retrieval_annotator.errors import (
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
from retrieval_annotator.gateway import (
    EmbeddingCache,
    RemoteEmbedder,
    VectorFileSource,
    load_vector_file,
    write_vector_file,
)


def text_vector(text, dim=6):
    h = hashlib.sha256(text.encode("utf-8")).digest()
    return [b / 255.0 + 0.01 for b in h[:dim]]


class FakeService:
    """Deterministic /embed handler for httpx.MockTransport."""

    def __init__(self, dim=6, fail_first=0, status=503, vectors=None):
        self.dim = dim
        self.fail_first = fail_first
        self.status = status
        self.vectors = vectors
        self.requests = []

    def __call__(self, request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        self.requests.append(body)
        if len(self.requests) <= self.fail_first:
            return httpx.Response(self.status)
        if self.vectors is not None:
            return httpx.Response(200, json={"vectors": self.vectors})
        return httpx.Response(200, json={"vectors": [text_vector(t, self.dim) for t in body["texts"]]})


def client(service, **kw):
    kw.setdefault("sleep", lambda s: None)
    return RemoteEmbedder("http://embed.test", "m1", transport=httpx.MockTransport(service), **kw)


def test_request_shape_and_values():
    svc = FakeService()
    out = client(svc).embed_texts(["alpha", "beta"])
    assert svc.requests == [{"model": "m1", "texts": ["alpha", "beta"]}]
    np.testing.assert_array_equal(out[0], text_vector("alpha"))


def test_one_cached_text_means_one_remote_text(tmp_path):
    svc = FakeService()
    emb = client(svc, cache=EmbeddingCache(tmp_path))
    first = emb.embed_texts(["alpha"])
    both = emb.embed_texts(["alpha", "beta"])
    assert svc.requests[-1]["texts"] == ["beta"] and len(svc.requests) == 2
    assert both[0].tobytes() == first[0].tobytes()


def test_cache_persists_across_clients(tmp_path):
    svc = FakeService()
    client(svc, cache=EmbeddingCache(tmp_path)).embed_texts(["alpha"])
    again = client(svc, cache=EmbeddingCache(tmp_path)).embed_texts(["alpha"])
    assert len(svc.requests) == 1
    np.testing.assert_array_equal(again[0], text_vector("alpha"))


def test_cache_key_separates_models():
    assert EmbeddingCache.key("m1", "ab") != EmbeddingCache.key("m2", "ab")
    # length-prefixing: shifting a boundary changes the key
    assert EmbeddingCache.key("a", "bc") != EmbeddingCache.key("ab", "c")


def test_cache_transparency(tmp_path):
    texts = ["x", "y", "x", "z"]
    on = client(FakeService(), cache=EmbeddingCache(tmp_path)).embed_texts(texts)
    off = client(FakeService()).embed_texts(texts)
    assert [v.tobytes() for v in on] == [v.tobytes() for v in off]


def test_duplicates_sent_once():
    svc = FakeService()
    out = client(svc).embed_texts(["a", "b", "a"])
    assert svc.requests[0]["texts"] == ["a", "b"]
    np.testing.assert_array_equal(out[0], out[2])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.text(alphabet="abcdef", min_size=1, max_size=4), min_size=1, max_size=20), st.integers(1, 7))
def test_batching_invariance(texts, batch_size):
    whole = client(FakeService(), batch_size=100).embed_texts(texts)
    parts = client(FakeService(), batch_size=batch_size).embed_texts(texts)
    assert [v.tobytes() for v in whole] == [v.tobytes() for v in parts]


def test_batches_respect_size():
    svc = FakeService()
    client(svc, batch_size=3).embed_texts([f"t{i}" for i in range(8)])
    assert [len(r["texts"]) for r in svc.requests] == [3, 3, 2]


def test_wrong_dimension():
    with pytest.raises(DimensionMismatch):
        client(FakeService(dim=5), expected_dim=6).embed_texts(["a"])


def test_malformed_responses():
    with pytest.raises(MalformedResponse):
        client(FakeService(vectors=[[1.0, 2.0]])).embed_texts(["a", "b"])
    with pytest.raises(MalformedResponse):
        client(FakeService(vectors=[["x", 1.0]])).embed_texts(["a"])
    with pytest.raises(MalformedResponse):
        client(FakeService(vectors=[[1.0, 2.0], [1.0]])).embed_texts(["a", "b"])


def test_transient_failures_are_retried_with_backoff():
    waits = []
    svc = FakeService(fail_first=2, status=503)
    out = client(svc, max_retries=3, backoff=0.5, sleep=waits.append).embed_texts(["a"])
    assert len(svc.requests) == 3 and len(out) == 1
    assert len(waits) == 2 and waits[1] >= waits[0] > 0


def test_retries_exhausted_is_unreachable():
    svc = FakeService(fail_first=100, status=429)
    emb = client(svc, max_retries=2)
    with pytest.raises(ServiceUnreachable):
        emb.embed_texts(["a"])
    assert emb.n_requests == 3


def test_client_error_is_not_retried():
    svc = FakeService(fail_first=100, status=400)
    with pytest.raises(EmbeddingServiceError):
        client(svc, max_retries=5).embed_texts(["a"])
    assert len(svc.requests) == 1


def test_connection_refused_is_unreachable():
    def boom(request):
        raise httpx.ConnectError("refused", request=request)

    emb = RemoteEmbedder("http://embed.test", transport=httpx.MockTransport(boom), max_retries=1, sleep=lambda s: None)
    with pytest.raises(ServiceUnreachable):
        emb.embed_texts(["a"])


def test_empty_text_rejected():
    with pytest.raises(EmptyText):
        client(FakeService()).embed_texts(["ok", "  "])


def test_from_env(monkeypatch):
    monkeypatch.delenv("RANNOT_EMBED_URL", raising=False)
    with pytest.raises(ServiceUnreachable):
        RemoteEmbedder.from_env()
    monkeypatch.setenv("RANNOT_EMBED_URL", "http://e.test/")
    monkeypatch.setenv("RANNOT_EMBED_MODEL", "mx")
    emb = RemoteEmbedder.from_env()
    assert emb.base_url == "http://e.test" and emb.model == "mx"


# -- vector files ------------------------------------------------------------


def test_vector_file_example(tmp_path):
    recs = [("a", np.array([1, 2, 3, 4], float)), ("b", np.array([0.5, 0, 0, -1]))]
    p = write_vector_file(tmp_path / "v.txve", recs)
    raw = p.read_bytes()
    assert raw[:4] == b"TXVE" and struct.unpack_from("<HIQ", raw, 4) == (1, 4, 2)
    loaded = load_vector_file(p)
    assert [r[0] for r in loaded] == ["a", "b"]
    assert all(v.shape == (4,) for _, v in loaded)


@settings(max_examples=50, deadline=None)
@given(
    st.integers(1, 16).flatmap(
        lambda d: st.lists(
            st.tuples(
                st.text(min_size=1, max_size=12),
                st.lists(st.floats(-1e6, 1e6, width=32), min_size=d, max_size=d),
            ),
            max_size=8,
        )
    )
)
def test_vector_file_round_trip_bytes(tmp_path_factory, recs):
    d = tmp_path_factory.mktemp("v")
    recs = [(i, np.asarray(v, dtype=np.float32)) for i, v in recs]
    dim = len(recs[0][1]) if recs else 3
    p1 = write_vector_file(d / "a.txve", recs, dim)
    loaded = load_vector_file(p1)
    assert [i for i, _ in loaded] == [i for i, _ in recs]
    assert all(a.astype(np.float32).tobytes() == b.tobytes() for (_, a), (_, b) in zip(loaded, recs))
    p2 = write_vector_file(d / "b.txve", loaded, dim)
    assert p1.read_bytes() == p2.read_bytes()


def test_vector_file_corruption(tmp_path):
    p = write_vector_file(tmp_path / "v.txve", [("a", np.ones(4)), ("b", np.ones(4))])
    raw = p.read_bytes()
    (tmp_path / "short.txve").write_bytes(raw[:-3])
    with pytest.raises(CountMismatch):
        load_vector_file(tmp_path / "short.txve")
    (tmp_path / "long.txve").write_bytes(raw + b"\0")
    with pytest.raises(CountMismatch):
        load_vector_file(tmp_path / "long.txve")
    (tmp_path / "magic.txve").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(CorruptHeader):
        load_vector_file(tmp_path / "magic.txve")
    (tmp_path / "tiny.txve").write_bytes(raw[:5])
    with pytest.raises(CorruptHeader):
        load_vector_file(tmp_path / "tiny.txve")
    nan = write_vector_file(tmp_path / "nan.txve", [("a", np.array([1.0, np.nan]))])
    with pytest.raises(NonFiniteEntry):
        load_vector_file(nan)


def test_vector_file_source(tmp_path):
    p = write_vector_file(tmp_path / "v.txve", [("a", np.ones(2)), ("b", np.zeros(2) + 2)])
    src = VectorFileSource(p)
    assert [v.tolist() for v in src.lookup(["b", "a"])] == [[2.0, 2.0], [1.0, 1.0]]
    with pytest.raises(UnknownDoc):
        src.lookup(["zzz"])
