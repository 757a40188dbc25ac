"""FastAPI application exposing the pipeline over HTTP.

Loaded graph stores are cached per resolved directory and invalidated by
the write endpoints (ingest, embed), so repeated queries do not re-read
the corpus from disk.
"""

from __future__ import annotations

import logging
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import JSONResponse

from .. import __version__
from ..bench import emit_report, run_bench
from ..config import ServiceConfig, build_services
from ..datasets import Problem, load_problems
from ..errors import ProofGraphError, TransportError
from ..graph import GraphStore
from ..ingest import build_corpus, write_outputs
from ..pipeline import Method, prove, tree_search
from ..retrieval import (
    Embedder,
    HashEmbeddingProvider,
    HttpEmbeddingProvider,
    MockEmbeddingProvider,
    RetrievalQuery,
    embed_store,
    retrieve,
)
from ..storage import EMBEDDINGS_FILENAME
from . import schemas

logger = logging.getLogger(__name__)


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    cfg = config or ServiceConfig()
    app = FastAPI(title="proofgraph", version=__version__)

    stores: dict[str, GraphStore] = {}
    stores_lock = threading.Lock()

    def _resolve(graph_dir: str) -> str:
        return str(Path(graph_dir).resolve())

    def get_store(graph_dir: str) -> GraphStore:
        key = _resolve(graph_dir)
        with stores_lock:
            store = stores.get(key)
            if store is None:
                store = GraphStore.load_dir(key).seal()
                stores[key] = store
            return store

    def invalidate_store(graph_dir: str) -> None:
        with stores_lock:
            stores.pop(_resolve(graph_dir), None)

    def _provider(kind: str, dimension: int, mock_dir: str | None):
        if kind == "hash":
            return HashEmbeddingProvider(dimension)
        if kind == "mock":
            if not mock_dir:
                raise HTTPException(400, "provider 'mock' requires mock_dir")
            path = Path(mock_dir) / "embeddings.jsonl"
            if not path.exists():
                raise HTTPException(400, f"{path} not found")
            return MockEmbeddingProvider.from_jsonl(path)
        if not cfg.embed_base_url or not cfg.embed_model:
            raise HTTPException(400, "provider 'http' requires embed_base_url and embed_model in config")
        return HttpEmbeddingProvider(
            cfg.embed_base_url, cfg.embed_model, api_key=cfg._api_key(cfg.embed_api_key_env)
        )

    def _load_problem(
        problem: schemas.ProblemModel | None,
        dataset_path: str | None,
        problem_name: str | None,
    ) -> Problem:
        if problem is not None:
            return problem.to_problem()
        if not dataset_path or not problem_name:
            raise HTTPException(400, "provide either an inline problem or dataset_path with problem_name")
        for candidate in load_problems(dataset_path):
            if candidate.name == problem_name:
                return candidate
        raise HTTPException(404, f"problem {problem_name!r} not found in {dataset_path}")

    def _services(config, graph_dir: str | None, mock_dir: str | None):
        store = None
        if config.method is not Method.BASE:
            if not graph_dir:
                raise HTTPException(400, f"method {config.method.value!r} requires graph_dir")
            store = get_store(graph_dir)
        return build_services(cfg, store=store, mock_dir=mock_dir)

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/ingest", response_model=schemas.IngestResponse)
    def ingest(req: schemas.IngestRequest) -> schemas.IngestResponse:
        if not Path(req.dump_path).exists():
            raise HTTPException(400, f"dump not found: {req.dump_path}")
        nodes, edges, stats = build_corpus(req.dump_path)
        write_outputs(nodes, edges, stats, req.out_dir)
        invalidate_store(req.out_dir)
        return schemas.IngestResponse(
            out_dir=req.out_dir, nodes=len(nodes), edges=len(edges), stats=stats.to_dict()
        )

    @app.post("/embed", response_model=schemas.EmbedResponse)
    def embed(req: schemas.EmbedRequest) -> schemas.EmbedResponse:
        store = GraphStore.load_dir(req.graph_dir)
        provider = _provider(req.provider, req.dimension, req.mock_dir)
        count = embed_store(store, Embedder(provider))
        store.save_embeddings(Path(req.graph_dir) / EMBEDDINGS_FILENAME)
        invalidate_store(req.graph_dir)
        return schemas.EmbedResponse(
            graph_dir=req.graph_dir, embedded=count, dimension=store.embedding_dim or 0
        )

    @app.get("/graph/stats", response_model=schemas.StatsResponse)
    def graph_stats(graph_dir: str = Query(...)) -> schemas.StatsResponse:
        return schemas.StatsResponse(**get_store(graph_dir).stats())

    @app.post("/query", response_model=schemas.QueryResponse)
    def query(req: schemas.QueryRequest) -> schemas.QueryResponse:
        store = get_store(req.graph_dir)
        provider = _provider(req.provider, store.embedding_dim or 16, req.mock_dir)
        embedder = Embedder(provider, dimension=store.embedding_dim)
        context = retrieve(
            store,
            embedder,
            RetrievalQuery(
                query_text=req.text,
                k=req.k,
                depth=req.depth,
                seed=req.seed,
                subset_size=req.subset_size,
            ),
        )
        return schemas.QueryResponse(
            entries=[
                schemas.QueryEntryModel(
                    node_id=e.node_id,
                    title=store.nodes[e.node_id].title,
                    score=e.score,
                    hop=e.hop,
                )
                for e in context.entries
            ],
            rendered=context.rendered,
            token_estimate=context.token_estimate,
        )

    @app.post("/prove", response_model=schemas.ProveResponse)
    def prove_endpoint(req: schemas.ProveRequest) -> schemas.ProveResponse:
        problem = _load_problem(req.problem, req.dataset_path, req.problem_name)
        config = req.config.to_run_config()
        services = _services(config, req.graph_dir, req.mock_dir)
        outcome = prove(problem, config, services)
        return schemas.ProveResponse(outcome=schemas.OutcomeModel(**outcome.to_dict()))

    @app.post("/bench", response_model=schemas.BenchResponse)
    def bench_endpoint(req: schemas.BenchRequest) -> schemas.BenchResponse:
        problems = load_problems(req.dataset_path, format_hint=req.format_hint)
        if req.limit is not None:
            problems = problems[: req.limit]
        config = req.config.to_run_config()
        services = _services(config, req.graph_dir, req.mock_dir)
        report = run_bench(problems, config, services, workers=req.workers or cfg.workers)
        emit_report(report, req.out_dir)
        return schemas.BenchResponse(
            run_id=report.run_id,
            n_problems=len(report.per_problem),
            accuracy=report.accuracy,
            accuracy_by_attempt=report.accuracy_by_attempt,
            failure_histogram=report.failure_histogram,
            out_dir=req.out_dir,
        )

    @app.post("/tree-search", response_model=schemas.TreeSearchResponse)
    def tree_search_endpoint(req: schemas.TreeSearchRequest) -> schemas.TreeSearchResponse:
        problem = _load_problem(req.problem, req.dataset_path, req.problem_name)
        config = req.config.to_run_config()
        services = _services(config, req.graph_dir, req.mock_dir)
        trace: list[dict] = []
        best = tree_search(problem, config, services, trace_sink=trace)
        return schemas.TreeSearchResponse(
            best=schemas.CandidateModel(
                index=best.index,
                informal_proof=best.informal_proof,
                formal_code=best.formal_code,
                judge_score=best.judge_score,
                justification=best.justification,
                extraction_error=best.extraction_error,
                verified=best.verified,
            ),
            trace=trace,
        )

    @app.exception_handler(ProofGraphError)
    async def proofgraph_error_handler(request, exc: ProofGraphError):
        status = 502 if isinstance(exc, TransportError) else 400
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    @app.exception_handler(FileNotFoundError)
    async def not_found_handler(request, exc: FileNotFoundError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    return app
