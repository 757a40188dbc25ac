from __future__ import annotations

import struct

import numpy as np
import pytest

from proofgraph.errors import EmbeddingError, GraphLoadError, SealedStoreError
from proofgraph.graph import GraphStore
from proofgraph.model import Edge, Node, NodeType, RelType
from proofgraph.storage import read_embeddings, write_embeddings

from conftest import GOLDEN_INGEST, SAMPLE_STORE


def _node(node_id: int, title: str = "", node_type: NodeType = NodeType.THEOREM) -> Node:
    title = title or f"Node {node_id}"
    return Node(node_id, node_type, title, title, f"content {node_id}")


def _small_store() -> GraphStore:
    store = GraphStore()
    for i in range(4):
        store.add_node(_node(i))
    store.add_edge(Edge(0, 1, RelType.LINK))
    store.add_edge(Edge(0, 2, RelType.USES_DEFINITION))
    store.add_edge(Edge(3, 0, RelType.PROOF_DEPENDENCY))
    return store


def test_neighbors_directions_and_order():
    store = _small_store()
    both = store.neighbors(0)
    assert [(n.id, rel) for n, rel in both] == [
        (1, RelType.LINK),
        (2, RelType.USES_DEFINITION),
        (3, RelType.PROOF_DEPENDENCY),
    ]
    assert [(n.id, rel) for n, rel in store.neighbors(0, direction="out")] == [
        (1, RelType.LINK),
        (2, RelType.USES_DEFINITION),
    ]
    assert [(n.id, rel) for n, rel in store.neighbors(0, direction="in")] == [
        (3, RelType.PROOF_DEPENDENCY)
    ]
    assert store.neighbors(0, rel_types=[RelType.LINK]) == [(store.nodes[1], RelType.LINK)]


def test_neighbors_dedupes_mutual_edges():
    store = GraphStore()
    store.add_node(_node(0))
    store.add_node(_node(1))
    store.add_edge(Edge(0, 1, RelType.LINK))
    store.add_edge(Edge(1, 0, RelType.LINK))
    assert [(n.id, rel) for n, rel in store.neighbors(0)] == [(1, RelType.LINK)]


def test_duplicate_and_unknown_rejected():
    store = _small_store()
    with pytest.raises(GraphLoadError, match="duplicate node"):
        store.add_node(_node(0))
    with pytest.raises(GraphLoadError, match="duplicate edge"):
        store.add_edge(Edge(0, 1, RelType.LINK))
    with pytest.raises(GraphLoadError, match="unknown node"):
        store.add_edge(Edge(0, 99, RelType.LINK))
    with pytest.raises(GraphLoadError, match="unknown node"):
        store.neighbors(99)


def test_seal_blocks_every_mutation():
    store = _small_store()
    store.attach_embedding(0, np.ones(4))
    store.seal()
    assert store.sealed
    with pytest.raises(SealedStoreError):
        store.add_node(_node(9))
    with pytest.raises(SealedStoreError):
        store.add_edge(Edge(1, 2, RelType.LINK))
    with pytest.raises(SealedStoreError):
        store.attach_embedding(1, np.ones(4))
    # Reads still work.
    assert store.neighbors(0)
    assert store.stats()["node_count"] == 4


def test_load_sample_store_tolerates_spaces_in_csv():
    store = GraphStore.load(SAMPLE_STORE / "nodes.jsonl", SAMPLE_STORE / "edges.csv")
    assert sorted(store.nodes) == [149, 167, 6780, 41289, 67015]
    assert [(e.from_id, e.to_id, e.rel_type) for e in store.edges] == [
        (149, 167, RelType.LINK),
        (149, 41289, RelType.PROOF_TECHNIQUE),
        (67015, 6780, RelType.USES_DEFINITION),
    ]
    assert store.nodes[149].node_type is NodeType.THEOREM


def test_load_rejects_bad_edges(tmp_path):
    nodes = SAMPLE_STORE / "nodes.jsonl"
    bad_header = tmp_path / "bad_header.csv"
    bad_header.write_text("source,target,kind\n", encoding="utf-8")
    with pytest.raises(GraphLoadError, match="expected header"):
        GraphStore.load(nodes, bad_header)

    unknown_type = tmp_path / "unknown_type.csv"
    unknown_type.write_text("from_id,to_id,type\n149,167,FRIENDS\n", encoding="utf-8")
    with pytest.raises(GraphLoadError, match="unknown edge type"):
        GraphStore.load(nodes, unknown_type)

    unknown_id = tmp_path / "unknown_id.csv"
    unknown_id.write_text("from_id,to_id,type\n149,99999,LINK\n", encoding="utf-8")
    with pytest.raises(GraphLoadError, match="unknown node id 99999"):
        GraphStore.load(nodes, unknown_id)


def test_export_round_trip_byte_identical(tmp_path):
    store = GraphStore.load(GOLDEN_INGEST / "nodes.jsonl", GOLDEN_INGEST / "edges.csv")
    store.export(tmp_path)
    assert (tmp_path / "nodes.jsonl").read_bytes() == (GOLDEN_INGEST / "nodes.jsonl").read_bytes()
    assert (tmp_path / "edges.csv").read_bytes() == (GOLDEN_INGEST / "edges.csv").read_bytes()


def test_export_round_trip_semantic_for_noncanonical_input(tmp_path):
    first = GraphStore.load(SAMPLE_STORE / "nodes.jsonl", SAMPLE_STORE / "edges.csv")
    first.export(tmp_path)
    second = GraphStore.load_dir(tmp_path)
    assert second.nodes == first.nodes
    assert second.edges == first.edges


def test_embeddings_sidecar_layout_and_round_trip(tmp_path):
    path = tmp_path / "embeddings.bin"
    vectors = {7: np.array([1.0, -2.5, 0.25]), 3: np.array([0.5, 0.5, 0.5])}
    write_embeddings(vectors, path)
    raw = path.read_bytes()
    # Records are sorted by id: int64 id, int32 dim, then dim float32 values.
    node_id, dim = struct.unpack_from("<qi", raw, 0)
    assert (node_id, dim) == (3, 3)
    values = struct.unpack_from("<3f", raw, 12)
    assert values == (0.5, 0.5, 0.5)
    assert len(raw) == 2 * (12 + 3 * 4)

    loaded = read_embeddings(path)
    assert sorted(loaded) == [3, 7]
    np.testing.assert_allclose(loaded[7], vectors[7], rtol=1e-6)


def test_embeddings_read_rejects_corruption(tmp_path):
    path = tmp_path / "embeddings.bin"
    path.write_bytes(struct.pack("<qi", 1, 3) + struct.pack("<2f", 1.0, 2.0))
    with pytest.raises(GraphLoadError, match="truncated"):
        read_embeddings(path)
    path.write_bytes(struct.pack("<qi", 1, -2))
    with pytest.raises(GraphLoadError, match="non-positive dimension"):
        read_embeddings(path)


def test_attach_embedding_validation():
    store = _small_store()
    store.attach_embedding(0, np.ones(4))
    with pytest.raises(EmbeddingError, match="dimension"):
        store.attach_embedding(1, np.ones(5))
    with pytest.raises(EmbeddingError, match="non-finite"):
        store.attach_embedding(1, np.array([1.0, np.nan, 0.0, 0.0]))
    with pytest.raises(GraphLoadError, match="unknown node"):
        store.attach_embedding(42, np.ones(4))
    with pytest.raises(EmbeddingError, match="no embedding attached"):
        store.embedding(2)
    assert store.embedding_dim == 4
    assert store.embedded_ids == [0]


def test_stats_histograms():
    store = _small_store()
    stats = store.stats()
    assert stats["node_count"] == 4
    assert stats["edge_count"] == 3
    assert stats["edges_by_type"] == {
        "LINK": 1,
        "PROOF_DEPENDENCY": 1,
        "USES_DEFINITION": 1,
    }
    assert stats["nodes_by_type"] == {"theorem": 4}
