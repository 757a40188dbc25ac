"""In-memory typed property graph with embeddings and sealed reads.

A store is built (or loaded), optionally gets an embedding per node, then
is sealed. Sealing makes every later mutation raise, which lets the
retrieval layer assume a frozen graph for the lifetime of a run.
"""

from __future__ import annotations

import logging
from collections import Counter
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import EmbeddingError, GraphLoadError, SealedStoreError
from .model import Edge, Node, RelType
from .storage import (
    EDGES_FILENAME,
    EMBEDDINGS_FILENAME,
    NODES_FILENAME,
    read_edges_csv,
    read_embeddings,
    read_nodes_jsonl,
    write_edges_csv,
    write_embeddings,
    write_nodes_jsonl,
)

logger = logging.getLogger(__name__)


class GraphStore:
    def __init__(self) -> None:
        self.nodes: dict[int, Node] = {}
        self._edges: list[Edge] = []
        self._edge_keys: set[tuple[int, int, RelType]] = set()
        self._out: dict[int, list[tuple[int, RelType]]] = {}
        self._in: dict[int, list[tuple[int, RelType]]] = {}
        self._embeddings: dict[int, np.ndarray] = {}
        self._dim: int | None = None
        self._sealed = False

    # -- construction -------------------------------------------------------

    def _check_mutable(self) -> None:
        if self._sealed:
            raise SealedStoreError("store is sealed; mutation is not allowed")

    def add_node(self, node: Node) -> None:
        self._check_mutable()
        if node.id in self.nodes:
            raise GraphLoadError(f"duplicate node id {node.id}")
        self.nodes[node.id] = node
        self._out[node.id] = []
        self._in[node.id] = []

    def add_edge(self, edge: Edge) -> None:
        self._check_mutable()
        if edge.from_id not in self.nodes:
            raise GraphLoadError(f"edge references unknown node id {edge.from_id}")
        if edge.to_id not in self.nodes:
            raise GraphLoadError(f"edge references unknown node id {edge.to_id}")
        key = (edge.from_id, edge.to_id, edge.rel_type)
        if key in self._edge_keys:
            raise GraphLoadError(
                f"duplicate edge {edge.from_id}->{edge.to_id} ({edge.rel_type.value})"
            )
        self._edge_keys.add(key)
        self._edges.append(edge)
        self._out[edge.from_id].append((edge.to_id, edge.rel_type))
        self._in[edge.to_id].append((edge.from_id, edge.rel_type))

    @classmethod
    def from_parts(cls, nodes: Iterable[Node], edges: Iterable[Edge]) -> "GraphStore":
        store = cls()
        for node in nodes:
            store.add_node(node)
        for edge in edges:
            store.add_edge(edge)
        return store

    @classmethod
    def load(cls, nodes_path: str | Path, edges_path: str | Path) -> "GraphStore":
        return cls.from_parts(read_nodes_jsonl(nodes_path), read_edges_csv(edges_path))

    @classmethod
    def load_dir(cls, graph_dir: str | Path) -> "GraphStore":
        """Load nodes and edges from a graph directory, plus embeddings if present."""
        base = Path(graph_dir)
        nodes_path = base / NODES_FILENAME
        edges_path = base / EDGES_FILENAME
        if not nodes_path.exists() or not edges_path.exists():
            raise GraphLoadError(f"{base}: missing {NODES_FILENAME} or {EDGES_FILENAME}")
        store = cls.load(nodes_path, edges_path)
        emb_path = base / EMBEDDINGS_FILENAME
        if emb_path.exists():
            store.attach_embeddings(read_embeddings(emb_path))
        return store

    # -- embeddings ----------------------------------------------------------

    def attach_embedding(self, node_id: int, vector: np.ndarray) -> None:
        self._check_mutable()
        if node_id not in self.nodes:
            raise GraphLoadError(f"embedding references unknown node id {node_id}")
        vec = np.asarray(vector, dtype=np.float64)
        if vec.ndim != 1 or vec.size == 0:
            raise EmbeddingError(f"embedding for node {node_id} is not a flat non-empty vector")
        if not np.all(np.isfinite(vec)):
            raise EmbeddingError(f"embedding for node {node_id} contains non-finite values")
        if self._dim is None:
            self._dim = int(vec.size)
        elif vec.size != self._dim:
            raise EmbeddingError(
                f"embedding for node {node_id} has dimension {vec.size}, expected {self._dim}"
            )
        self._embeddings[node_id] = vec

    def attach_embeddings(self, source: str | Path | Mapping[int, np.ndarray]) -> None:
        vectors = read_embeddings(source) if isinstance(source, (str, Path)) else source
        for node_id in sorted(vectors):
            self.attach_embedding(node_id, vectors[node_id])

    def save_embeddings(self, path: str | Path) -> None:
        write_embeddings(self._embeddings, path)

    def embedding(self, node_id: int) -> np.ndarray:
        try:
            return self._embeddings[node_id]
        except KeyError:
            raise EmbeddingError(f"no embedding attached for node {node_id}") from None

    @property
    def embedding_dim(self) -> int | None:
        return self._dim

    @property
    def embedded_ids(self) -> list[int]:
        return sorted(self._embeddings)

    @property
    def embedding_count(self) -> int:
        return len(self._embeddings)

    # -- reads ---------------------------------------------------------------

    @property
    def sealed(self) -> bool:
        return self._sealed

    def seal(self) -> "GraphStore":
        self._sealed = True
        return self

    @property
    def edges(self) -> list[Edge]:
        return list(self._edges)

    def neighbors(
        self,
        node_id: int,
        direction: str = "both",
        rel_types: Iterable[RelType] | None = None,
    ) -> list[tuple[Node, RelType]]:
        """Adjacent nodes with the connecting edge type, deterministically ordered."""
        if node_id not in self.nodes:
            raise GraphLoadError(f"unknown node id {node_id}")
        if direction not in ("out", "in", "both"):
            raise ValueError(f"direction must be out, in, or both, not {direction!r}")
        wanted = set(rel_types) if rel_types is not None else None
        found: set[tuple[int, RelType]] = set()
        if direction in ("out", "both"):
            found.update(self._out[node_id])
        if direction in ("in", "both"):
            found.update(self._in[node_id])
        if wanted is not None:
            found = {(nid, rel) for nid, rel in found if rel in wanted}
        ordered = sorted(found, key=lambda pair: (pair[0], pair[1].value))
        return [(self.nodes[nid], rel) for nid, rel in ordered]

    def stats(self) -> dict:
        return {
            "node_count": len(self.nodes),
            "edge_count": len(self._edges),
            "nodes_by_type": dict(
                sorted(Counter(n.node_type.value for n in self.nodes.values()).items())
            ),
            "edges_by_type": dict(
                sorted(Counter(e.rel_type.value for e in self._edges).items())
            ),
        }

    def export(self, out_dir: str | Path, include_embeddings: bool = True) -> None:
        """Write the store back out in the same formats the loader reads."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ordered_nodes = [self.nodes[nid] for nid in sorted(self.nodes)]
        write_nodes_jsonl(ordered_nodes, out / NODES_FILENAME)
        write_edges_csv(self._edges, out / EDGES_FILENAME)
        if include_embeddings and self._embeddings:
            write_embeddings(self._embeddings, out / EMBEDDINGS_FILENAME)
