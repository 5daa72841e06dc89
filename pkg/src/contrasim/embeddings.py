"""Encoder embedding sources.

The encoder itself is external: callers get unit vectors from one of three
providers — a deterministic mock (content-hash seeded Gaussian), a precomputed
JSONL store keyed by content hash, or an HTTP embeddings endpoint. Everything
returned from this module is L2-normalized float64.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .providers import ProviderError

NORM_FLOOR = 1e-12


def normalize(v) -> np.ndarray:
    """Project a vector onto the unit sphere.

    Raises ValueError for near-zero norm or non-finite entries.
    """
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"expected a non-empty 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector has non-finite entries")
    norm = float(np.linalg.norm(arr))
    if norm < NORM_FLOOR:
        raise ValueError(f"cannot normalize near-zero vector (norm={norm:.3e})")
    return arr / norm


def is_unit(v, tol: float = 1e-9) -> bool:
    return abs(float(np.linalg.norm(v)) - 1.0) <= tol


def text_key(text: str) -> str:
    """Store key for a text: lowercase hex sha256 of the exact string."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class EmbeddingStore:
    """In-memory map from content-hash key to unit vector, one dimension throughout."""

    dim: int
    records: dict = field(default_factory=dict)

    def add(self, key: str, vector: np.ndarray) -> None:
        if key in self.records:
            raise ValueError(f"duplicate store key {key!r}")
        vec = normalize(vector)
        if vec.shape[0] != self.dim:
            raise ValueError(f"dimension mismatch: store dim {self.dim}, vector dim {vec.shape[0]}")
        self.records[key] = vec

    def get(self, key: str) -> np.ndarray:
        if key not in self.records:
            raise KeyError(f"missing embedding for key {key!r}")
        return self.records[key]

    def __contains__(self, key: str) -> bool:
        return key in self.records

    def __len__(self) -> int:
        return len(self.records)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for key in sorted(self.records):
                rec = {"key": key, "dim": self.dim, "vector": self.records[key].tolist()}
                fh.write(json.dumps(rec) + "\n")

    @classmethod
    def load(cls, path) -> "EmbeddingStore":
        path = Path(path)
        store = None
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    key, dim, vec = rec["key"], int(rec["dim"]), rec["vector"]
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise ValueError(f"{path}:{lineno}: malformed store record: {exc}") from exc
                if store is None:
                    store = cls(dim=dim)
                elif dim != store.dim:
                    raise ValueError(f"{path}:{lineno}: dimension {dim} != store dimension {store.dim}")
                store.add(key, np.asarray(vec, dtype=np.float64))
        if store is None:
            raise ValueError(f"{path}: empty embedding store")
        return store


class MockEmbedder:
    """Deterministic text -> unit vector map: seeded Gaussian from content hash.

    Distinct texts collide only if sha256 collides; same (seed, text) gives the
    same vector in any process.
    """

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.seed = seed

    def embed(self, text: str) -> np.ndarray:
        digest = hashlib.sha256(f"{self.seed}:{text}".encode("utf-8")).digest()
        rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest[:8], "little")))
        return normalize(rng.standard_normal(self.dim))


class FileEmbedder:
    """Provider backed by a precomputed EmbeddingStore."""

    def __init__(self, store: EmbeddingStore):
        self.store = store
        self.dim = store.dim

    def embed(self, text: str) -> np.ndarray:
        return self.store.get(text_key(text))


class FallbackEmbedder:
    """Try one provider, fall back to another on a missing key.

    Lets queries over a precomputed store still embed unseen text through a
    live (mock or HTTP) provider.
    """

    def __init__(self, primary, fallback):
        self.primary = primary
        self.fallback = fallback
        self.dim = getattr(primary, "dim", getattr(fallback, "dim", None))

    def embed(self, text: str) -> np.ndarray:
        try:
            return self.primary.embed(text)
        except KeyError:
            return self.fallback.embed(text)


class HttpEmbedder:
    """Client for an embeddings endpoint: POST {input: [texts]} -> {data: [{embedding}]}."""

    def __init__(self, endpoint: str, dim: int, api_key: str | None = None,
                 max_retries: int = 3, backoff: float = 0.5, timeout: float = 30.0):
        self.endpoint = endpoint
        self.dim = dim
        self.api_key = api_key
        self.max_retries = max_retries
        self.backoff = backoff
        self.timeout = timeout

    def _headers(self):
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        import requests

        last_exc = None
        for attempt in range(self.max_retries):
            try:
                resp = requests.post(
                    self.endpoint,
                    json={"input": list(texts)},
                    headers=self._headers(),
                    timeout=self.timeout,
                )
                resp.raise_for_status()
                data = resp.json()["data"]
                break
            except Exception as exc:  # transport or shape failure, retry with backoff
                last_exc = exc
                if attempt + 1 < self.max_retries:
                    time.sleep(self.backoff * (2**attempt))
        else:
            raise ProviderError(f"embeddings endpoint failed after {self.max_retries} attempts: {last_exc}")
        vectors = []
        for item in data:
            vec = normalize(np.asarray(item["embedding"], dtype=np.float64))
            if vec.shape[0] != self.dim:
                raise ProviderError(f"embedding dimension {vec.shape[0]} != configured {self.dim}")
            vectors.append(vec)
        if len(vectors) != len(texts):
            raise ProviderError(f"endpoint returned {len(vectors)} vectors for {len(texts)} inputs")
        return vectors

    def embed(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]


def embed_text(text: str, provider) -> np.ndarray:
    """Embed one text through `provider`, guaranteeing a unit vector out."""
    vec = provider.embed(text)
    return vec if is_unit(vec) else normalize(vec)


def dns_text(obj, joiner: str = "\n") -> str:
    """Join an object's headline texts in stored order for embedding."""
    if hasattr(obj, "headlines"):
        return joiner.join(h.text for h in obj.headlines)
    if hasattr(obj, "slots"):
        return joiner.join(slot.text for slot in obj.slots)
    raise TypeError(f"cannot extract texts from {type(obj).__name__}")


def embed_dns(obj, provider, joiner: str = "\n") -> np.ndarray:
    """Embed a daily news set (or augmented set) as one joined document."""
    return embed_text(dns_text(obj, joiner), provider)
