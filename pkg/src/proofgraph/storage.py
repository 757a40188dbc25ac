"""Readers and writers for the on-disk graph formats.

Three artifacts make up a graph directory:

* ``nodes.jsonl``      one JSON object per node with keys
                       ``id``, ``type``, ``title``, ``name``, ``content``
* ``edges.csv``        header ``from_id,to_id,type``, one edge per row
* ``embeddings.bin``   packed records: int64 node id, int32 dimension,
                       then ``dimension`` float32 values, all little-endian
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import BinaryIO, Iterable

import numpy as np

from .errors import GraphLoadError
from .model import Edge, Node, RelType

NODES_FILENAME = "nodes.jsonl"
EDGES_FILENAME = "edges.csv"
STATS_FILENAME = "stats.json"
EMBEDDINGS_FILENAME = "embeddings.bin"

EDGES_HEADER = "from_id,to_id,type"

_EMB_RECORD_HEAD = struct.Struct("<qi")


def write_nodes_jsonl(nodes: Iterable[Node], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for node in nodes:
            fh.write(json.dumps(node.to_dict(), ensure_ascii=False))
            fh.write("\n")


def read_nodes_jsonl(path: str | Path) -> list[Node]:
    nodes: list[Node] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                nodes.append(Node.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise GraphLoadError(f"{path}: bad node record on line {lineno}: {exc}") from exc
    return nodes


def write_edges_csv(edges: Iterable[Edge], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(EDGES_HEADER + "\n")
        for edge in edges:
            fh.write(f"{edge.from_id},{edge.to_id},{edge.rel_type.value}\n")


def read_edges_csv(path: str | Path) -> list[Edge]:
    edges: list[Edge] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        # Tolerate stray spaces around fields; some exports pad after commas.
        if [c.strip() for c in header.strip().split(",")] != EDGES_HEADER.split(","):
            raise GraphLoadError(f"{path}: expected header {EDGES_HEADER!r}, got {header.strip()!r}")
        for lineno, line in enumerate(fh, 2):
            if not line.strip():
                continue
            parts = [c.strip() for c in line.strip().split(",")]
            if len(parts) != 3:
                raise GraphLoadError(f"{path}: line {lineno}: expected 3 fields, got {len(parts)}")
            try:
                from_id, to_id = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise GraphLoadError(f"{path}: line {lineno}: non-integer node id") from exc
            try:
                rel = RelType(parts[2])
            except ValueError as exc:
                raise GraphLoadError(f"{path}: line {lineno}: unknown edge type {parts[2]!r}") from exc
            edges.append(Edge(from_id, to_id, rel))
    return edges


def write_stats_json(stats: dict, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_embeddings(vectors: dict[int, np.ndarray], path: str | Path) -> None:
    """Write embeddings sorted by node id so output bytes are reproducible."""
    with open(path, "wb") as fh:
        for node_id in sorted(vectors):
            vec = np.asarray(vectors[node_id], dtype="<f4")
            if vec.ndim != 1:
                raise GraphLoadError(f"embedding for node {node_id} is not a flat vector")
            fh.write(_EMB_RECORD_HEAD.pack(node_id, vec.shape[0]))
            fh.write(vec.tobytes())


def _read_exact(fh: BinaryIO, count: int, path: str | Path) -> bytes | None:
    data = fh.read(count)
    if not data:
        return None
    if len(data) != count:
        raise GraphLoadError(f"{path}: truncated embedding record")
    return data


def read_embeddings(path: str | Path) -> dict[int, np.ndarray]:
    vectors: dict[int, np.ndarray] = {}
    dim: int | None = None
    with open(path, "rb") as fh:
        while True:
            head = _read_exact(fh, _EMB_RECORD_HEAD.size, path)
            if head is None:
                break
            node_id, rec_dim = _EMB_RECORD_HEAD.unpack(head)
            if rec_dim <= 0:
                raise GraphLoadError(f"{path}: non-positive dimension {rec_dim} for node {node_id}")
            if dim is None:
                dim = rec_dim
            elif rec_dim != dim:
                raise GraphLoadError(
                    f"{path}: dimension mismatch for node {node_id}: {rec_dim} != {dim}"
                )
            payload = _read_exact(fh, 4 * rec_dim, path)
            if payload is None:
                raise GraphLoadError(f"{path}: truncated embedding record for node {node_id}")
            vec = np.frombuffer(payload, dtype="<f4").astype(np.float64)
            if node_id in vectors:
                raise GraphLoadError(f"{path}: duplicate embedding for node {node_id}")
            vectors[node_id] = vec
    return vectors
