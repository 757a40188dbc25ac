"""Proof orchestration: the retry loop, sampling strategies, failure labels.

One proof attempt is informal proof -> Lean formalization -> verification.
The loop widens graph context as attempts fail (depth min(t-1, d)) and
feeds checker errors back into the next formalization prompt. Everything
here is deterministic given the backends' outputs.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable

from .datasets import Problem
from .errors import ConfigError, LeanExtractionError, MockScriptError, TransportError
from .gateway import (
    JudgeParseError,
    ModelResponse,
    PromptBundle,
    SamplingParams,
    complete,
    extract_lean_block,
    parse_judge_score,
    render_formalize_prompt,
    render_informal_prompt,
    render_judge_prompt,
)
from .graph import GraphStore
from .retrieval import Embedder, RetrievalContext, RetrievalQuery, retrieve
from .verifier import (
    VerificationResult,
    VerificationStatus,
    assemble_submission,
    render_error_feedback,
)

logger = logging.getLogger(__name__)


class Method(str, Enum):
    BASE = "base"
    RAG = "rag"
    GRAPH = "graph"


# Failure classes for unproved problems.
MISSING_KNOWLEDGE = "missing_knowledge"
MODEL_ERROR = "model_error"
FORMALIZATION_GAP = "formalization_gap"
OTHER_FAILURE = "other"

# Sampling temperatures cycled across best-of-n candidates.
TEMPERATURE_LADDER = (0.2, 0.4, 0.6, 0.8, 1.0)


@dataclass
class RunConfig:
    method: Method = Method.GRAPH
    attempts: int = 3
    max_depth: int = 2
    top_k: int = 5
    sampling: SamplingParams = field(default_factory=SamplingParams)
    seed: int | None = None
    n_candidates: int = 5
    beam_width: int = 4
    search_depth: int = 2

    def __post_init__(self) -> None:
        self.method = Method(self.method)
        if self.attempts < 1:
            raise ConfigError("attempts must be at least 1")
        if self.max_depth < 0:
            raise ConfigError("max_depth must be non-negative")
        if self.top_k < 1:
            raise ConfigError("top_k must be at least 1")
        if self.n_candidates < 1:
            raise ConfigError("n_candidates must be at least 1")
        if self.beam_width < 1:
            raise ConfigError("beam_width must be at least 1")
        if self.search_depth < 0:
            raise ConfigError("search_depth must be non-negative")
        if self.method is Method.RAG:
            # Retrieval without graph expansion is the depth-0 special case.
            self.max_depth = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method.value,
            "attempts": self.attempts,
            "max_depth": self.max_depth,
            "top_k": self.top_k,
            "sampling": {
                "temperature": self.sampling.temperature,
                "top_p": self.sampling.top_p,
                "max_tokens": self.sampling.max_tokens,
                "seed": self.sampling.seed,
            },
            "seed": self.seed,
            "n_candidates": self.n_candidates,
            "beam_width": self.beam_width,
            "search_depth": self.search_depth,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        sampling = data.get("sampling", {})
        return cls(
            method=Method(data.get("method", "graph")),
            attempts=int(data.get("attempts", 3)),
            max_depth=int(data.get("max_depth", 2)),
            top_k=int(data.get("top_k", 5)),
            sampling=SamplingParams(
                temperature=float(sampling.get("temperature", 0.0)),
                top_p=float(sampling.get("top_p", 1.0)),
                max_tokens=int(sampling.get("max_tokens", 2048)),
                seed=sampling.get("seed"),
            ),
            seed=data.get("seed"),
            n_candidates=int(data.get("n_candidates", 5)),
            beam_width=int(data.get("beam_width", 4)),
            search_depth=int(data.get("search_depth", 2)),
        )


@dataclass
class Services:
    """Everything a run needs, wired once and passed around."""

    backend: Any
    verifier: Any
    store: GraphStore | None = None
    embedder: Embedder | None = None
    judge_backend: Any = None
    clock: Callable[[], float] = time.perf_counter

    @property
    def judge(self) -> Any:
        return self.judge_backend if self.judge_backend is not None else self.backend


@dataclass
class AttemptTrace:
    """One attempt's inputs and outcome.

    ``context_depth_used`` records the depth schedule value even for the
    no-retrieval method, where ``context_node_ids`` stays empty.
    """

    attempt_index: int
    context_depth_used: int
    context_node_ids: list[int]
    informal_proof: str
    formal_code: str
    verification: VerificationResult
    extraction_error: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "attempt_index": self.attempt_index,
            "context_depth_used": self.context_depth_used,
            "context_node_ids": list(self.context_node_ids),
            "informal_proof": self.informal_proof,
            "formal_code": self.formal_code,
            "extraction_error": self.extraction_error,
            "verification": self.verification.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AttemptTrace":
        return cls(
            attempt_index=int(data["attempt_index"]),
            context_depth_used=int(data["context_depth_used"]),
            context_node_ids=[int(n) for n in data["context_node_ids"]],
            informal_proof=data["informal_proof"],
            formal_code=data["formal_code"],
            verification=VerificationResult.from_dict(data["verification"]),
            extraction_error=bool(data.get("extraction_error", False)),
        )


@dataclass
class ProofOutcome:
    problem_name: str
    method: Method
    status: str  # verified | failed | error
    attempts: list[AttemptTrace] = field(default_factory=list)
    winning_attempt: int | None = None
    failure_class: str | None = None
    error_message: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "problem_name": self.problem_name,
            "method": self.method.value,
            "status": self.status,
            "winning_attempt": self.winning_attempt,
            "failure_class": self.failure_class,
            "error_message": self.error_message,
            "attempts": [a.to_dict() for a in self.attempts],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ProofOutcome":
        return cls(
            problem_name=data["problem_name"],
            method=Method(data["method"]),
            status=data["status"],
            attempts=[AttemptTrace.from_dict(a) for a in data.get("attempts", [])],
            winning_attempt=data.get("winning_attempt"),
            failure_class=data.get("failure_class"),
            error_message=data.get("error_message"),
        )


@dataclass
class Candidate:
    """One sampled proof candidate; ``index`` is creation order."""

    index: int
    informal_proof: str
    formal_code: str | None = None
    judge_score: int = 0
    justification: str = ""
    verification: VerificationResult | None = None
    extraction_error: bool = False

    @property
    def verified(self) -> bool:
        return self.verification is not None and self.verification.verified

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "informal_proof": self.informal_proof,
            "formal_code": self.formal_code,
            "judge_score": self.judge_score,
            "justification": self.justification,
            "extraction_error": self.extraction_error,
            "verification": None if self.verification is None else self.verification.to_dict(),
        }


_INFORMAL_LABEL = "informal proof:"


def strip_informal_label(text: str) -> str:
    """Drop a leading 'Informal Proof:' label the template invites."""
    stripped = text.lstrip()
    if stripped[: len(_INFORMAL_LABEL)].casefold() == _INFORMAL_LABEL:
        return stripped[len(_INFORMAL_LABEL) :].lstrip("\n ").rstrip()
    return text.strip()


def _check_services(config: RunConfig, services: Services) -> None:
    if config.method is not Method.BASE:
        if services.store is None or services.embedder is None:
            raise ConfigError(f"method {config.method.value!r} needs a graph store and an embedder")
        if not services.store.sealed:
            raise ConfigError("graph store must be sealed before proving")


def _build_context(
    problem: Problem,
    config: RunConfig,
    services: Services,
    depth: int,
) -> RetrievalContext | None:
    if config.method is Method.BASE:
        return None
    assert services.store is not None and services.embedder is not None
    query = RetrievalQuery(
        query_text=problem.informal_statement,
        k=config.top_k,
        depth=depth,
        seed=config.seed,
    )
    return retrieve(services.store, services.embedder, query)


def _formalize(
    problem: Problem,
    informal: str,
    feedback: str,
    config: RunConfig,
    services: Services,
) -> tuple[str, VerificationResult | None, bool]:
    """Formal code for an informal proof: (code, synthesized failure, extraction flag).

    When no code block can be extracted we synthesize a failed result
    instead of burning a checker run on input known to be unusable.
    """
    bundle = render_formalize_prompt(
        header=problem.header,
        informal_proof=informal,
        informal_prefix=problem.informal_prefix,
        formal_statement=problem.formal_statement,
        goal=problem.goal,
        error_feedback=feedback,
        problem_id=problem.name,
    )
    response = complete(bundle, config.sampling, services.backend)
    try:
        return extract_lean_block(response.text), None, False
    except LeanExtractionError:
        logger.warning("no code block extracted for %s", problem.name)
        synthesized = VerificationResult(
            VerificationStatus.FAILED,
            [],
            "no Lean code block could be extracted from the model response",
            0.0,
        )
        return "", synthesized, True


def prove(problem: Problem, config: RunConfig, services: Services) -> ProofOutcome:
    """Run the attempt loop for one problem; never raises for model trouble.

    Unrecoverable transport or toolchain failures end the run with
    status ``error`` and whatever trace accumulated; ordinary failed
    verification just moves on to the next attempt.
    """
    _check_services(config, services)
    attempts: list[AttemptTrace] = []
    prev_result: VerificationResult | None = None
    prev_code = ""
    try:
        for attempt_index in range(1, config.attempts + 1):
            depth_used = min(attempt_index - 1, config.max_depth)
            context = _build_context(problem, config, services, depth_used)
            node_ids = [entry.node_id for entry in context.entries] if context else []

            informal_bundle = render_informal_prompt(
                problem.informal_statement, context, problem_id=problem.name
            )
            informal = strip_informal_label(
                complete(informal_bundle, config.sampling, services.backend).text
            )

            feedback = ""
            if prev_result is not None and prev_result.errors:
                feedback = render_error_feedback(prev_result.errors, prev_code)
            code, synthesized, extraction_error = _formalize(
                problem, informal, feedback, config, services
            )
            if synthesized is not None:
                result = synthesized
            else:
                submission = assemble_submission(problem.header, problem.informal_prefix, code)
                result = services.verifier.verify(submission, problem_id=problem.name)

            attempts.append(
                AttemptTrace(
                    attempt_index=attempt_index,
                    context_depth_used=depth_used,
                    context_node_ids=node_ids,
                    informal_proof=informal,
                    formal_code=code,
                    verification=result,
                    extraction_error=extraction_error,
                )
            )
            prev_result, prev_code = result, code

            if result.status is VerificationStatus.VERIFIED:
                return ProofOutcome(
                    problem_name=problem.name,
                    method=config.method,
                    status="verified",
                    attempts=attempts,
                    winning_attempt=attempt_index,
                )
            if result.status is VerificationStatus.TOOLCHAIN_ERROR:
                return ProofOutcome(
                    problem_name=problem.name,
                    method=config.method,
                    status="error",
                    attempts=attempts,
                    error_message=f"checker toolchain error: {result.raw_output.strip()}",
                )
    except (TransportError, MockScriptError) as exc:
        logger.error("prove aborted for %s: %s", problem.name, exc)
        return ProofOutcome(
            problem_name=problem.name,
            method=config.method,
            status="error",
            attempts=attempts,
            error_message=str(exc),
        )
    outcome = ProofOutcome(
        problem_name=problem.name,
        method=config.method,
        status="failed",
        attempts=attempts,
    )
    outcome.failure_class = classify_failure(outcome)
    return outcome


def classify_failure(outcome: ProofOutcome) -> str:
    """Label a failed outcome with its most diagnostic cause.

    Checked in order: retrieval produced nothing for every attempt (only
    meaningful when retrieval ran at all), then malformed model responses,
    then formalizations the checker rejected.
    """
    if not outcome.attempts:
        return OTHER_FAILURE
    if outcome.method is not Method.BASE:
        if all(len(a.context_node_ids) == 0 for a in outcome.attempts):
            return MISSING_KNOWLEDGE
    if any(a.extraction_error for a in outcome.attempts):
        return MODEL_ERROR
    last = outcome.attempts[-1]
    if last.informal_proof.strip() and last.verification.errors:
        return FORMALIZATION_GAP
    return OTHER_FAILURE


# ---------------------------------------------------------------------------
# sampling strategies
# ---------------------------------------------------------------------------

_JUDGE_PARAMS = SamplingParams(temperature=0.0)


def _judge(problem: Problem, candidate_text: str, services: Services) -> tuple[int, str]:
    bundle = render_judge_prompt(problem.informal_statement, candidate_text, problem_id=problem.name)
    response: ModelResponse = complete(bundle, _JUDGE_PARAMS, services.judge)
    try:
        return parse_judge_score(response.text)
    except JudgeParseError:
        logger.warning("unparsable judge response for %s, scoring 0", problem.name)
        return 0, "judge response had no parsable score"


def _sample_informal(
    problem: Problem,
    context: RetrievalContext | None,
    index: int,
    config: RunConfig,
    services: Services,
) -> str:
    params = replace(
        config.sampling,
        temperature=TEMPERATURE_LADDER[index % len(TEMPERATURE_LADDER)],
    )
    bundle = render_informal_prompt(problem.informal_statement, context, problem_id=problem.name)
    return strip_informal_label(complete(bundle, params, services.backend).text)


def best_of_n(
    problem: Problem,
    config: RunConfig,
    services: Services,
) -> tuple[Candidate, list[Candidate]]:
    """Sample ``n_candidates`` informal proofs and keep the judge's favorite.

    Ties go to the earlier candidate. Candidates are returned best-first
    alongside the winner.
    """
    _check_services(config, services)
    context = _build_context(problem, config, services, config.max_depth)
    candidates: list[Candidate] = []
    for index in range(config.n_candidates):
        informal = _sample_informal(problem, context, index, config, services)
        score, justification = _judge(problem, informal, services)
        candidates.append(
            Candidate(index=index, informal_proof=informal, judge_score=score, justification=justification)
        )
    ranked = sorted(candidates, key=lambda c: (-c.judge_score, c.index))
    return ranked[0], ranked


def _ensure_formal(
    candidate: Candidate,
    problem: Problem,
    feedback: str,
    config: RunConfig,
    services: Services,
) -> None:
    if candidate.formal_code is not None:
        return
    code, synthesized, extraction_error = _formalize(
        problem, candidate.informal_proof, feedback, config, services
    )
    candidate.formal_code = code
    candidate.extraction_error = extraction_error
    if synthesized is not None:
        candidate.verification = synthesized


def tree_search(
    problem: Problem,
    config: RunConfig,
    services: Services,
    trace_sink: list[dict] | None = None,
) -> Candidate:
    """Beam search over proof candidates with judge-guided pruning.

    Each iteration formalizes and verifies beam members that have not been
    verified yet (each candidate is checked exactly once, on its first
    beam appearance), returns immediately on success, refines every
    survivor once using checker feedback, and keeps the ``beam_width``
    best of old and new by judge score. Ties break toward earlier
    creation. If nothing verifies, the best-scored candidate wins.
    """
    _check_services(config, services)
    context = _build_context(problem, config, services, config.max_depth)

    all_candidates: list[Candidate] = []

    def create(informal: str, formal: str | None = None) -> Candidate:
        candidate = Candidate(index=len(all_candidates), informal_proof=informal, formal_code=formal)
        candidate.judge_score, candidate.justification = _judge(
            problem, formal if formal is not None else informal, services
        )
        all_candidates.append(candidate)
        return candidate

    beam = [
        create(_sample_informal(problem, context, i, config, services))
        for i in range(config.beam_width)
    ]
    if trace_sink is not None:
        trace_sink.append(
            {
                "iteration": 0,
                "created": [c.index for c in beam],
                "scores": [c.judge_score for c in beam],
            }
        )
    # Explore best-scored candidates first, same order later beams use.
    beam.sort(key=lambda c: (-c.judge_score, c.index))

    for iteration in range(1, config.search_depth + 1):
        refinements: list[Candidate] = []
        for candidate in beam:
            if candidate.verification is None:
                _ensure_formal(candidate, problem, "", config, services)
            if candidate.verification is None:
                submission = assemble_submission(
                    problem.header, problem.informal_prefix, candidate.formal_code or ""
                )
                candidate.verification = services.verifier.verify(submission, problem_id=problem.name)
            if candidate.verified:
                if trace_sink is not None:
                    trace_sink.append({"iteration": iteration, "verified": candidate.index})
                return candidate
            feedback = render_error_feedback(
                candidate.verification.errors, candidate.formal_code or ""
            )
            code, synthesized, extraction_error = _formalize(
                problem, candidate.informal_proof, feedback, config, services
            )
            refined = create(candidate.informal_proof, formal=code)
            refined.extraction_error = extraction_error
            if synthesized is not None:
                refined.verification = synthesized
            refinements.append(refined)
        pool = sorted(beam + refinements, key=lambda c: (-c.judge_score, c.index))
        beam = pool[: config.beam_width]
        if trace_sink is not None:
            trace_sink.append(
                {
                    "iteration": iteration,
                    "refined": [c.index for c in refinements],
                    "scores": [c.judge_score for c in refinements],
                    "beam": [c.index for c in beam],
                }
            )

    best = sorted(all_candidates, key=lambda c: (not c.verified, -c.judge_score, c.index))[0]
    if trace_sink is not None:
        trace_sink.append({"final": best.index, "verified": best.verified})
    return best
