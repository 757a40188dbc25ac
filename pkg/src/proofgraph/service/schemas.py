"""Request and response models for the HTTP service."""

from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, Field

from ..datasets import Problem
from ..gateway import SamplingParams
from ..pipeline import RunConfig


class HealthResponse(BaseModel):
    status: str
    version: str


class IngestRequest(BaseModel):
    dump_path: str
    out_dir: str


class IngestResponse(BaseModel):
    out_dir: str
    nodes: int
    edges: int
    stats: dict[str, int]


class EmbedRequest(BaseModel):
    graph_dir: str
    provider: Literal["hash", "mock", "http"] = "hash"
    dimension: int = 16
    mock_dir: str | None = None


class EmbedResponse(BaseModel):
    graph_dir: str
    embedded: int
    dimension: int


class StatsResponse(BaseModel):
    node_count: int
    edge_count: int
    nodes_by_type: dict[str, int]
    edges_by_type: dict[str, int]


class QueryRequest(BaseModel):
    graph_dir: str
    text: str
    k: int = 5
    depth: int = 2
    seed: int | None = None
    subset_size: int | None = None
    provider: Literal["hash", "mock", "http"] = "hash"
    mock_dir: str | None = None


class QueryEntryModel(BaseModel):
    node_id: int
    title: str
    score: float
    hop: int


class QueryResponse(BaseModel):
    entries: list[QueryEntryModel]
    rendered: str
    token_estimate: int


class ProblemModel(BaseModel):
    name: str
    informal_statement: str
    formal_statement: str
    header: str = ""
    informal_prefix: str = ""
    goal: str | None = None
    split: str = ""

    def to_problem(self) -> Problem:
        return Problem(
            name=self.name,
            informal_statement=self.informal_statement,
            formal_statement=self.formal_statement,
            header=self.header,
            informal_prefix=self.informal_prefix,
            goal=self.goal,
            split=self.split,
        )


class RunConfigModel(BaseModel):
    method: Literal["base", "rag", "graph"] = "graph"
    attempts: int = 3
    max_depth: int = 2
    top_k: int = 5
    temperature: float = 0.0
    top_p: float = 1.0
    max_tokens: int = 2048
    sampling_seed: int | None = None
    seed: int | None = None
    n_candidates: int = 5
    beam_width: int = 4
    search_depth: int = 2

    def to_run_config(self) -> RunConfig:
        return RunConfig(
            method=self.method,
            attempts=self.attempts,
            max_depth=self.max_depth,
            top_k=self.top_k,
            sampling=SamplingParams(
                temperature=self.temperature,
                top_p=self.top_p,
                max_tokens=self.max_tokens,
                seed=self.sampling_seed,
            ),
            seed=self.seed,
            n_candidates=self.n_candidates,
            beam_width=self.beam_width,
            search_depth=self.search_depth,
        )


class LeanErrorModel(BaseModel):
    line: int
    column: int
    message: str


class VerificationModel(BaseModel):
    status: str
    errors: list[LeanErrorModel] = Field(default_factory=list)
    raw_output: str = ""
    elapsed: float = 0.0


class AttemptModel(BaseModel):
    attempt_index: int
    context_depth_used: int
    context_node_ids: list[int]
    informal_proof: str
    formal_code: str
    extraction_error: bool = False
    verification: VerificationModel


class OutcomeModel(BaseModel):
    problem_name: str
    method: str
    status: str
    winning_attempt: int | None = None
    failure_class: str | None = None
    error_message: str | None = None
    attempts: list[AttemptModel] = Field(default_factory=list)


class ProveRequest(BaseModel):
    problem: ProblemModel | None = None
    dataset_path: str | None = None
    problem_name: str | None = None
    config: RunConfigModel = Field(default_factory=RunConfigModel)
    graph_dir: str | None = None
    mock_dir: str | None = None


class ProveResponse(BaseModel):
    outcome: OutcomeModel


class BenchRequest(BaseModel):
    dataset_path: str
    out_dir: str
    config: RunConfigModel = Field(default_factory=RunConfigModel)
    graph_dir: str | None = None
    mock_dir: str | None = None
    workers: int = 1
    format_hint: str | None = None
    limit: int | None = None


class BenchResponse(BaseModel):
    run_id: str
    n_problems: int
    accuracy: float
    accuracy_by_attempt: list[float]
    failure_histogram: dict[str, int]
    out_dir: str


class CandidateModel(BaseModel):
    index: int
    informal_proof: str
    formal_code: str | None = None
    judge_score: int
    justification: str = ""
    extraction_error: bool = False
    verified: bool = False


class TreeSearchRequest(BaseModel):
    problem: ProblemModel | None = None
    dataset_path: str | None = None
    problem_name: str | None = None
    config: RunConfigModel = Field(default_factory=RunConfigModel)
    graph_dir: str | None = None
    mock_dir: str | None = None


class TreeSearchResponse(BaseModel):
    best: CandidateModel
    trace: list[dict[str, Any]] = Field(default_factory=list)
