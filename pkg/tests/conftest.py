from __future__ import annotations

from pathlib import Path

import pytest

from proofgraph.graph import GraphStore
from proofgraph.ingest import build_corpus, write_outputs
from proofgraph.retrieval import Embedder, HashEmbeddingProvider, embed_store
from proofgraph.storage import EMBEDDINGS_FILENAME

DATA_DIR = Path(__file__).parent / "data"

FIXTURE_DUMP = DATA_DIR / "fixture_dump.xml"
GOLDEN_INGEST = DATA_DIR / "golden" / "ingest"
MOCK_BENCH = DATA_DIR / "mock_bench"
MOCK_TREE = DATA_DIR / "mock_tree"
PROBLEMS_20 = DATA_DIR / "problems_20.jsonl"
SAMPLE_STORE = DATA_DIR / "sample_store"


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def fixture_graph_dir(tmp_path_factory) -> Path:
    """Graph directory built from the fixture dump with hash embeddings."""
    out = tmp_path_factory.mktemp("graph") / "fixture"
    nodes, edges, stats = build_corpus(FIXTURE_DUMP)
    write_outputs(nodes, edges, stats, out)
    store = GraphStore.load_dir(out)
    embed_store(store, Embedder(HashEmbeddingProvider(16)))
    store.save_embeddings(out / EMBEDDINGS_FILENAME)
    return out


@pytest.fixture
def fixture_store(fixture_graph_dir) -> GraphStore:
    return GraphStore.load_dir(fixture_graph_dir).seal()
