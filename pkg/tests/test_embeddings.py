import json
import threading
from datetime import date
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from contrasim.embeddings import (
    EmbeddingStore,
    FallbackEmbedder,
    FileEmbedder,
    HttpEmbedder,
    MockEmbedder,
    dns_text,
    embed_dns,
    embed_text,
    is_unit,
    normalize,
    text_key,
)
from contrasim.providers import ProviderError

from conftest import make_day


def test_normalize_three_four_five():
    np.testing.assert_allclose(normalize([3.0, 4.0]), [0.6, 0.8])


def test_normalize_idempotent_on_unit_vector():
    v = normalize([1.0, 2.0, 2.0])
    np.testing.assert_allclose(normalize(v), v)


def test_normalize_rejects_zero():
    with pytest.raises(ValueError):
        normalize([0.0, 0.0])


def test_normalize_rejects_nonfinite():
    with pytest.raises(ValueError):
        normalize([1.0, float("nan")])


def test_mock_embedder_deterministic():
    a = MockEmbedder(dim=32, seed=7).embed("same text")
    b = MockEmbedder(dim=32, seed=7).embed("same text")
    np.testing.assert_array_equal(a, b)
    assert is_unit(a)


def test_mock_embedder_seed_changes_vector():
    a = MockEmbedder(dim=32, seed=7).embed("text")
    b = MockEmbedder(dim=32, seed=8).embed("text")
    assert not np.allclose(a, b)


def test_mock_embedder_no_collisions_10k():
    embedder = MockEmbedder(dim=16, seed=0)
    seen = set()
    for i in range(10_000):
        vec = embedder.embed(f"distinct text {i}")
        key = vec.tobytes()
        assert key not in seen
        seen.add(key)


def test_store_roundtrip(tmp_path):
    store = EmbeddingStore(dim=8)
    rng = np.random.default_rng(0)
    for i in range(5):
        store.add(f"key{i}", rng.standard_normal(8))
    path = tmp_path / "store.jsonl"
    store.save(path)
    loaded = EmbeddingStore.load(path)
    assert loaded.dim == 8 and len(loaded) == 5
    for key in store.records:
        np.testing.assert_allclose(loaded.get(key), store.get(key))


def test_store_rejects_duplicate_key():
    store = EmbeddingStore(dim=4)
    store.add("k", np.ones(4))
    with pytest.raises(ValueError, match="duplicate"):
        store.add("k", np.ones(4))


def test_store_rejects_dim_mismatch():
    store = EmbeddingStore(dim=4)
    with pytest.raises(ValueError, match="dimension"):
        store.add("k", np.ones(5))


def test_file_provider_missing_key():
    store = EmbeddingStore(dim=4)
    store.add(text_key("known"), np.ones(4))
    provider = FileEmbedder(store)
    np.testing.assert_allclose(embed_text("known", provider), np.ones(4) / 2.0)
    with pytest.raises(KeyError, match="missing embedding"):
        embed_text("unknown", provider)


def test_fallback_embedder_uses_secondary_on_miss():
    store = EmbeddingStore(dim=16)
    mock = MockEmbedder(dim=16, seed=1)
    store.add(text_key("cached"), mock.embed("cached"))
    chained = FallbackEmbedder(FileEmbedder(store), mock)
    np.testing.assert_array_equal(chained.embed("cached"), mock.embed("cached"))
    np.testing.assert_array_equal(chained.embed("fresh"), mock.embed("fresh"))


def test_dns_text_and_embed_dns():
    day = make_day(date(2020, 5, 4), ["first headline", "second headline"])
    embedder = MockEmbedder(dim=16, seed=2)
    assert dns_text(day) == "first headline\nsecond headline"
    np.testing.assert_array_equal(
        embed_dns(day, embedder), embed_text("first headline\nsecond headline", embedder))


def test_embed_dns_single_headline_equals_embed_text():
    day = make_day(date(2020, 5, 4), ["only headline"])
    embedder = MockEmbedder(dim=16, seed=2)
    np.testing.assert_array_equal(embed_dns(day, embedder), embed_text("only headline", embedder))


def test_embed_dns_order_sensitive():
    embedder = MockEmbedder(dim=16, seed=2)
    a = make_day(date(2020, 5, 4), ["one", "two"])
    b = make_day(date(2020, 5, 4), ["two", "one"])
    assert not np.allclose(embed_dns(a, embedder), embed_dns(b, embedder))


# ---------------------------------------------------------------------------
# HTTP provider against a local server
# ---------------------------------------------------------------------------

KNOWN_VECTOR = [3.0, 0.0, 4.0, 0.0]


class _Handler(BaseHTTPRequestHandler):
    fail_first = 0

    def do_POST(self):
        cls = type(self)
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        if cls.fail_first > 0:
            cls.fail_first -= 1
            self.send_response(500)
            self.end_headers()
            return
        payload = {"data": [{"embedding": KNOWN_VECTOR} for _ in body["input"]]}
        raw = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)

    def log_message(self, *args):
        pass


@pytest.fixture
def http_endpoint():
    server = HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/embed"
    server.shutdown()


def test_http_embedder_normalizes_known_vector(http_endpoint):
    provider = HttpEmbedder(endpoint=http_endpoint, dim=4)
    got = embed_text("anything", provider)
    np.testing.assert_allclose(got, normalize(KNOWN_VECTOR))


def test_http_embedder_retries_then_succeeds(http_endpoint):
    _Handler.fail_first = 2
    provider = HttpEmbedder(endpoint=http_endpoint, dim=4, max_retries=3, backoff=0.01)
    np.testing.assert_allclose(provider.embed("x"), normalize(KNOWN_VECTOR))


def test_http_embedder_exhausts_retries(http_endpoint):
    _Handler.fail_first = 10
    provider = HttpEmbedder(endpoint=http_endpoint, dim=4, max_retries=2, backoff=0.01)
    with pytest.raises(ProviderError, match="after 2 attempts"):
        provider.embed("x")
    _Handler.fail_first = 0


def test_http_embedder_rejects_wrong_dim(http_endpoint):
    provider = HttpEmbedder(endpoint=http_endpoint, dim=7)
    with pytest.raises(ProviderError, match="dimension"):
        provider.embed("x")
