"""Similarity search and graph-expanded context assembly.

Seeds come from an exact top-k cosine scan over node embeddings; expansion
walks the graph breadth-first (edges treated as undirected), keeping the
``per_hop_k`` nodes most similar to the original query at each hop. Every
tie anywhere is broken by ascending node id so runs are reproducible.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import threading
from dataclasses import dataclass
from math import ceil
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import httpx
import numpy as np

from ._http import DEFAULT_BACKOFF, post_json
from .errors import EmbeddingError, GraphLoadError
from .graph import GraphStore

logger = logging.getLogger(__name__)

PER_NODE_CHAR_CAP = 4000
TOTAL_CHAR_CAP = 24000
CHARS_PER_TOKEN = 4


def cosine(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    """Cosine similarity of two vectors; raises on mismatch or zero norm."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape or va.ndim != 1:
        raise EmbeddingError(f"cosine requires equal-length flat vectors, got {va.shape} and {vb.shape}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise EmbeddingError("cosine is undefined for zero-norm vectors")
    return float(np.dot(va, vb)) / (na * nb)


# ---------------------------------------------------------------------------
# embedding providers
# ---------------------------------------------------------------------------


def text_sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class EmbeddingProvider(Protocol):
    def embed(self, texts: list[str]) -> list[list[float]]: ...


class HttpEmbeddingProvider:
    """OpenAI-style ``/embeddings`` endpoint client."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        client: httpx.Client | None = None,
        backoff: Sequence[float] = DEFAULT_BACKOFF,
        sleep: Callable[[float], None] | None = None,
    ) -> None:
        self.url = base_url.rstrip("/") + "/embeddings"
        self.model = model
        self.api_key = api_key
        self.client = client or httpx.Client(timeout=60.0)
        self.backoff = backoff
        self.sleep = sleep

    def embed(self, texts: list[str]) -> list[list[float]]:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        kwargs = {"sleep": self.sleep} if self.sleep is not None else {}
        body, _ = post_json(
            self.client,
            self.url,
            {"model": self.model, "input": texts},
            headers=headers,
            backoff=self.backoff,
            **kwargs,
        )
        try:
            rows = sorted(body["data"], key=lambda row: row["index"])
            return [row["embedding"] for row in rows]
        except (KeyError, TypeError) as exc:
            raise EmbeddingError(f"malformed embeddings response: {exc}") from exc


class MockEmbeddingProvider:
    """Replays vectors from a JSONL fixture keyed by sha256 of the text."""

    def __init__(self, entries: Iterable[dict]) -> None:
        self.by_hash: dict[str, list[float]] = {}
        for entry in entries:
            self.by_hash[entry["text_hash"]] = list(entry["vector"])

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "MockEmbeddingProvider":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.loads(line) for line in fh if line.strip())

    def embed(self, texts: list[str]) -> list[list[float]]:
        out = []
        for text in texts:
            key = text_sha256(text)
            if key not in self.by_hash:
                raise EmbeddingError(f"mock embeddings have no entry for text hash {key[:12]}")
            out.append(self.by_hash[key])
        return out


class HashEmbeddingProvider:
    """Deterministic pseudo-embeddings derived from sha256 of the text.

    Integer-only derivation, so vectors are identical across platforms.
    Useful for fixtures and offline runs; carries no semantic signal.
    """

    def __init__(self, dimension: int = 16) -> None:
        if dimension <= 0:
            raise EmbeddingError("dimension must be positive")
        self.dimension = dimension

    def _vector(self, text: str) -> list[float]:
        values: list[float] = []
        seed = hashlib.sha256(text.encode("utf-8")).digest()
        counter = 0
        while len(values) < self.dimension:
            block = hashlib.sha256(seed + counter.to_bytes(4, "little")).digest()
            for i in range(0, len(block) - 3, 4):
                if len(values) >= self.dimension:
                    break
                word = int.from_bytes(block[i : i + 4], "little")
                values.append(word / 2**32 * 2.0 - 1.0)
            counter += 1
        if all(v == 0.0 for v in values):
            values[0] = 1.0
        return values

    def embed(self, texts: list[str]) -> list[list[float]]:
        return [self._vector(text) for text in texts]


class Embedder:
    """Caches provider calls by content hash; safe under concurrent use."""

    def __init__(self, provider: EmbeddingProvider, dimension: int | None = None) -> None:
        self.provider = provider
        self.dimension = dimension
        self.provider_calls = 0
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        self._inflight: dict[str, threading.Event] = {}

    def _validate(self, vec: np.ndarray) -> np.ndarray:
        if self.dimension is None:
            self.dimension = int(vec.size)
        elif vec.size != self.dimension:
            raise EmbeddingError(f"provider returned dimension {vec.size}, expected {self.dimension}")
        if not np.all(np.isfinite(vec)):
            raise EmbeddingError("provider returned non-finite values")
        return vec

    def embed_text(self, text: str) -> np.ndarray:
        if not text.strip():
            raise EmbeddingError("cannot embed empty text")
        key = text_sha256(text)
        while True:
            with self._lock:
                if key in self._cache:
                    return self._cache[key]
                waiter = self._inflight.get(key)
                if waiter is None:
                    self._inflight[key] = threading.Event()
                    break
            # Another thread is already fetching this text.
            waiter.wait()
        try:
            vec = np.asarray(self.provider.embed([text])[0], dtype=np.float64)
            vec = self._validate(vec)
            with self._lock:
                self.provider_calls += 1
                self._cache[key] = vec
            return vec
        finally:
            with self._lock:
                self._inflight.pop(key).set()

    def embed_node_texts(self, texts: dict[int, str]) -> dict[int, np.ndarray]:
        return {node_id: self.embed_text(text) for node_id, text in sorted(texts.items())}


def node_embedding_text(title: str, content: str) -> str:
    """Canonical text a node is embedded under."""
    return f"{title}\n{content}".strip()


def embed_store(store: GraphStore, embedder: Embedder) -> int:
    """Attach an embedding for every node; returns how many were attached."""
    for node_id in sorted(store.nodes):
        node = store.nodes[node_id]
        store.attach_embedding(node_id, embedder.embed_text(node_embedding_text(node.title, node.content)))
    return len(store.nodes)


# ---------------------------------------------------------------------------
# search and expansion
# ---------------------------------------------------------------------------


def _require_full_coverage(store: GraphStore) -> None:
    # An empty store is legal and searches to nothing; partial coverage is not.
    if store.embedding_count != len(store.nodes):
        missing = len(store.nodes) - store.embedding_count
        raise EmbeddingError(f"store is missing embeddings for {missing} of {len(store.nodes)} nodes")


def top_k_seed(store: GraphStore, query_vec: np.ndarray, k: int) -> list[tuple[int, float]]:
    """Exact scan: the k nodes most cosine-similar to the query.

    Ordered by descending score, ties by ascending node id.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    _require_full_coverage(store)
    scored = [(node_id, cosine(store.embedding(node_id), query_vec)) for node_id in store.embedded_ids]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[: min(k, len(scored))]


def shuffled_top_k(
    store: GraphStore,
    query_vec: np.ndarray,
    k: int,
    seed: int,
    subset_size: int | None = None,
) -> list[int]:
    """Seeded shuffle of the deterministic top-k, optionally cut to a subset.

    The output is always drawn from the same top-k set ``top_k_seed``
    returns; the seed only controls order and which subset survives.
    """
    ranked = [node_id for node_id, _ in top_k_seed(store, query_vec, k)]
    rng = random.Random(seed)
    rng.shuffle(ranked)
    if subset_size is None:
        return ranked
    if subset_size <= 0:
        raise ValueError("subset_size must be positive")
    return ranked[: min(subset_size, len(ranked))]


@dataclass
class ContextEntry:
    node_id: int
    score: float
    hop: int


@dataclass
class RetrievalContext:
    entries: list[ContextEntry]
    rendered: str
    token_estimate: int


@dataclass
class RetrievalQuery:
    query_text: str
    k: int = 5
    depth: int = 2
    seed: int | None = None
    subset_size: int | None = None

    def __post_init__(self) -> None:
        if self.k <= 0:
            raise ValueError("k must be positive")
        if self.depth < 0:
            raise ValueError("depth must be non-negative")


def expand(
    store: GraphStore,
    query_vec: np.ndarray,
    seed_ids: Sequence[int],
    depth: int,
    per_hop_k: int,
) -> list[ContextEntry]:
    """Breadth-first expansion from the seeds, scored against the query.

    Hop 0 holds the seeds sorted by similarity; each later hop keeps the
    ``per_hop_k`` unvisited neighbors most similar to the original query.
    """
    if depth < 0:
        raise ValueError("depth must be non-negative")
    if per_hop_k <= 0:
        raise ValueError("per_hop_k must be positive")
    _require_full_coverage(store)
    entries: list[ContextEntry] = []
    for node_id in seed_ids:
        if node_id not in store.nodes:
            raise GraphLoadError(f"seed references unknown node id {node_id}")
        entries.append(ContextEntry(node_id, cosine(store.embedding(node_id), query_vec), 0))
    entries.sort(key=lambda e: (-e.score, e.node_id))
    visited = {e.node_id for e in entries}
    frontier = [e.node_id for e in entries]
    for hop in range(1, depth + 1):
        candidates: dict[int, float] = {}
        for node_id in frontier:
            for neighbor, _rel in store.neighbors(node_id, direction="both"):
                if neighbor.id in visited or neighbor.id in candidates:
                    continue
                candidates[neighbor.id] = cosine(store.embedding(neighbor.id), query_vec)
        if not candidates:
            break
        picked = sorted(candidates.items(), key=lambda pair: (-pair[1], pair[0]))[:per_hop_k]
        entries.extend(ContextEntry(node_id, score, hop) for node_id, score in picked)
        visited.update(node_id for node_id, _ in picked)
        frontier = [node_id for node_id, _ in picked]
    return entries


def render_context(
    store: GraphStore,
    entries: Sequence[ContextEntry],
    per_node_chars: int = PER_NODE_CHAR_CAP,
    total_chars: int = TOTAL_CHAR_CAP,
) -> RetrievalContext:
    """Concatenate node texts in entry order under per-node and total caps."""
    parts: list[str] = []
    used = 0
    for entry in entries:
        node = store.nodes[entry.node_id]
        text = f"## {node.title}\n{node.content}"
        if len(text) > per_node_chars:
            text = text[:per_node_chars]
        sep = 2 if parts else 0
        if used + sep + len(text) > total_chars:
            room = total_chars - used - sep
            if room <= 0:
                break
            text = text[:room]
        parts.append(text)
        used += sep + len(text)
    rendered = "\n\n".join(parts)
    return RetrievalContext(
        entries=list(entries),
        rendered=rendered,
        token_estimate=ceil(len(rendered) / CHARS_PER_TOKEN),
    )


def retrieve(store: GraphStore, embedder: Embedder, query: RetrievalQuery) -> RetrievalContext:
    """Embed the query, pick seeds, expand, and render, end to end."""
    query_vec = embedder.embed_text(query.query_text)
    if query.seed is None:
        seed_ids = [node_id for node_id, _ in top_k_seed(store, query_vec, query.k)]
    else:
        seed_ids = shuffled_top_k(store, query_vec, query.k, query.seed, query.subset_size)
    entries = expand(store, query_vec, seed_ids, query.depth, per_hop_k=query.k)
    return render_context(store, entries)
