from __future__ import annotations

import pytest

from proofgraph.datasets import Problem
from proofgraph.errors import ConfigError
from proofgraph.gateway import MockChatBackend, SamplingParams, TemplateId
from proofgraph.graph import GraphStore
from proofgraph.pipeline import (
    FORMALIZATION_GAP,
    MISSING_KNOWLEDGE,
    MODEL_ERROR,
    OTHER_FAILURE,
    AttemptTrace,
    Method,
    ProofOutcome,
    RunConfig,
    Services,
    best_of_n,
    classify_failure,
    prove,
    strip_informal_label,
    tree_search,
)
from proofgraph.retrieval import Embedder, HashEmbeddingProvider
from proofgraph.verifier import (
    LeanError,
    MockVerifier,
    VerificationResult,
    VerificationStatus,
)


def _problem(name: str = "p1") -> Problem:
    return Problem(
        name=name,
        informal_statement="Show that 1 + 1 = 2.",
        formal_statement=f"theorem {name} : 1 + 1 = 2 := by",
        header="import Mathlib\n",
        informal_prefix="/-- Show that 1 + 1 = 2. -/\n",
        goal="1 + 1 = 2",
    )


def _lean_block(marker: str) -> str:
    return f"# Start\n```lean4\ntheorem p : 1 + 1 = 2 := by\n  -- {marker}\n  norm_num\n```\n# End"


def _chat_rows(name: str, informal_turns: int, formalize_turns: int) -> list[dict]:
    rows = []
    for t in range(1, informal_turns + 1):
        rows.append(
            {
                "problem_id": name,
                "template_id": "informal",
                "turn": t,
                "response_text": f"Informal Proof:\nBoth sides equal 2. (attempt {t})",
            }
        )
    for t in range(1, formalize_turns + 1):
        rows.append(
            {
                "problem_id": name,
                "template_id": "formalize",
                "turn": t,
                "response_text": _lean_block(f"formalize turn {t}"),
            }
        )
    return rows


class _Recording:
    """Wraps a backend and records every (prompt, params) pair."""

    def __init__(self, inner) -> None:
        self.inner = inner
        self.calls = []

    def complete(self, prompt, params):
        self.calls.append((prompt, params))
        return self.inner.complete(prompt, params)


def _embedder() -> Embedder:
    return Embedder(HashEmbeddingProvider(16))


# -- config -----------------------------------------------------------------------


def test_run_config_validation():
    with pytest.raises(ConfigError, match="attempts"):
        RunConfig(attempts=0)
    with pytest.raises(ConfigError, match="top_k"):
        RunConfig(top_k=0)
    with pytest.raises(ConfigError, match="beam_width"):
        RunConfig(beam_width=0)
    assert RunConfig(method="rag", max_depth=3).max_depth == 0
    assert RunConfig(method="base").method is Method.BASE


def test_run_config_round_trip():
    config = RunConfig(
        method="rag",
        attempts=2,
        top_k=7,
        sampling=SamplingParams(temperature=0.3, seed=5),
        seed=11,
        n_candidates=4,
        beam_width=3,
        search_depth=1,
    )
    assert RunConfig.from_dict(config.to_dict()) == config


def test_strip_informal_label():
    assert strip_informal_label("Informal Proof:\nThe claim holds.") == "The claim holds."
    assert strip_informal_label("  informal proof: compact form  ") == "compact form"
    assert strip_informal_label("No label here.") == "No label here."
    assert strip_informal_label("See the Informal Proof: section.") == "See the Informal Proof: section."


def test_services_judge_falls_back_to_backend():
    primary, judge = object(), object()
    assert Services(backend=primary, verifier=None).judge is primary
    assert Services(backend=primary, verifier=None, judge_backend=judge).judge is judge


# -- prove loop --------------------------------------------------------------------


def test_prove_base_first_attempt_verified():
    problem = _problem()
    backend = MockChatBackend(_chat_rows("p1", 1, 1))
    verifier = MockVerifier.scripted("p1", ["verified"])
    outcome = prove(problem, RunConfig(method="base"), Services(backend, verifier))

    assert outcome.status == "verified"
    assert outcome.winning_attempt == 1
    assert outcome.failure_class is None
    assert len(outcome.attempts) == 1
    trace = outcome.attempts[0]
    assert trace.informal_proof == "Both sides equal 2. (attempt 1)"
    assert "norm_num" in trace.formal_code
    assert trace.context_node_ids == []
    assert trace.context_depth_used == 0
    assert backend.call_count == 2
    assert verifier.call_count == 1


def test_prove_graph_retries_widen_depth_and_feed_back_errors(fixture_store):
    problem = _problem()
    backend = _Recording(MockChatBackend(_chat_rows("p1", 3, 3)))
    verifier = MockVerifier.scripted("p1", ["failed", "failed", "verified"])
    services = Services(backend, verifier, store=fixture_store, embedder=_embedder())
    outcome = prove(problem, RunConfig(method="graph", attempts=3, max_depth=2), services)

    assert outcome.status == "verified"
    assert outcome.winning_attempt == 3
    assert [a.context_depth_used for a in outcome.attempts] == [0, 1, 2]
    assert all(a.context_node_ids for a in outcome.attempts)
    assert verifier.call_count == 3

    formalize = [p for p, _ in backend.calls if p.template_id is TemplateId.FORMALIZE]
    assert len(formalize) == 3
    assert "previous attempt failed" not in formalize[0].body
    assert "scripted failure" in formalize[1].body
    assert "scripted failure" in formalize[2].body
    informal = [p for p, _ in backend.calls if p.template_id is TemplateId.INFORMAL]
    assert all("Context: ##" in p.body for p in informal)


def test_prove_rag_keeps_depth_zero(fixture_store):
    problem = _problem()
    backend = MockChatBackend(_chat_rows("p1", 2, 2))
    verifier = MockVerifier.scripted("p1", ["failed", "verified"])
    services = Services(backend, verifier, store=fixture_store, embedder=_embedder())
    outcome = prove(problem, RunConfig(method="rag", attempts=2, max_depth=2), services)
    assert outcome.status == "verified"
    assert [a.context_depth_used for a in outcome.attempts] == [0, 0]


def test_prove_all_attempts_fail():
    problem = _problem()
    backend = MockChatBackend(_chat_rows("p1", 3, 3))
    verifier = MockVerifier.scripted("p1", ["failed", "failed", "failed"])
    outcome = prove(problem, RunConfig(method="base", attempts=3), Services(backend, verifier))

    assert outcome.status == "failed"
    assert outcome.winning_attempt is None
    assert outcome.failure_class == FORMALIZATION_GAP
    assert len(outcome.attempts) == 3
    assert backend.call_count == 6
    assert verifier.call_count == 3


def test_prove_extraction_error_skips_checker():
    problem = _problem()
    backend = MockChatBackend(
        _chat_rows("p1", 1, 0)
        + [
            {
                "problem_id": "p1",
                "template_id": "formalize",
                "turn": 1,
                "response_text": "I am unable to produce Lean code for this problem.",
            }
        ]
    )
    verifier = MockVerifier.scripted("p1", ["verified"])  # must never be consulted
    outcome = prove(problem, RunConfig(method="base", attempts=1), Services(backend, verifier))

    assert outcome.status == "failed"
    assert outcome.failure_class == MODEL_ERROR
    assert verifier.call_count == 0
    trace = outcome.attempts[0]
    assert trace.extraction_error
    assert trace.formal_code == ""
    assert trace.verification.status is VerificationStatus.FAILED
    assert "no Lean code block" in trace.verification.raw_output


def test_prove_toolchain_error_aborts_run():
    problem = _problem()
    backend = MockChatBackend(_chat_rows("p1", 3, 3))
    verifier = MockVerifier(
        [{"problem_id": "p1", "attempt": 1, "status": "toolchain_error", "raw_output": "lean missing"}]
    )
    outcome = prove(problem, RunConfig(method="base", attempts=3), Services(backend, verifier))
    assert outcome.status == "error"
    assert "toolchain" in outcome.error_message
    assert len(outcome.attempts) == 1
    assert backend.call_count == 2


def test_prove_script_exhaustion_becomes_error_status():
    problem = _problem()
    backend = MockChatBackend(_chat_rows("p1", 1, 0))  # no formalize turns scripted
    verifier = MockVerifier.scripted("p1", ["verified"])
    outcome = prove(problem, RunConfig(method="base", attempts=1), Services(backend, verifier))
    assert outcome.status == "error"
    assert "formalize" in outcome.error_message
    assert outcome.attempts == []


def test_prove_non_base_requires_sealed_store():
    problem = _problem()
    services = Services(MockChatBackend([]), MockVerifier([]))
    with pytest.raises(ConfigError, match="graph store"):
        prove(problem, RunConfig(method="graph"), services)
    open_store = GraphStore()
    services = Services(MockChatBackend([]), MockVerifier([]), store=open_store, embedder=_embedder())
    with pytest.raises(ConfigError, match="sealed"):
        prove(problem, RunConfig(method="graph"), services)


def test_prove_empty_store_yields_missing_knowledge():
    problem = _problem()
    backend = MockChatBackend(_chat_rows("p1", 2, 2))
    verifier = MockVerifier.scripted("p1", ["failed", "failed"])
    services = Services(backend, verifier, store=GraphStore().seal(), embedder=_embedder())
    outcome = prove(problem, RunConfig(method="graph", attempts=2), services)
    assert outcome.status == "failed"
    assert outcome.failure_class == MISSING_KNOWLEDGE
    assert all(a.context_node_ids == [] for a in outcome.attempts)


def test_outcome_round_trip():
    problem = _problem()
    backend = MockChatBackend(_chat_rows("p1", 2, 2))
    verifier = MockVerifier.scripted("p1", ["failed", "verified"])
    outcome = prove(problem, RunConfig(method="base", attempts=2), Services(backend, verifier))
    assert ProofOutcome.from_dict(outcome.to_dict()) == outcome


def test_prove_trace_is_reproducible(fixture_store):
    problem = _problem()

    def run() -> dict:
        backend = MockChatBackend(_chat_rows("p1", 3, 3))
        verifier = MockVerifier.scripted("p1", ["failed", "failed", "failed"])
        services = Services(backend, verifier, store=fixture_store, embedder=_embedder())
        return prove(problem, RunConfig(method="graph", attempts=3), services).to_dict()

    assert run() == run()


# -- failure taxonomy ----------------------------------------------------------------


def _trace(
    informal: str = "a proof",
    errors: list[LeanError] | None = None,
    context: list[int] | None = None,
    extraction: bool = False,
) -> AttemptTrace:
    return AttemptTrace(
        attempt_index=1,
        context_depth_used=0,
        context_node_ids=[0] if context is None else context,
        informal_proof=informal,
        formal_code="code",
        verification=VerificationResult(
            VerificationStatus.FAILED,
            [LeanError(1, 0, "boom")] if errors is None else errors,
        ),
        extraction_error=extraction,
    )


def _outcome(method: Method, *attempts: AttemptTrace) -> ProofOutcome:
    return ProofOutcome("p", method, "failed", attempts=list(attempts))


def test_classify_failure_precedence():
    assert classify_failure(_outcome(Method.BASE)) == OTHER_FAILURE
    # Empty retrieval on every attempt dominates, even over extraction errors.
    assert (
        classify_failure(_outcome(Method.GRAPH, _trace(context=[], extraction=True), _trace(context=[])))
        == MISSING_KNOWLEDGE
    )
    # One attempt with context means knowledge was not the problem.
    assert (
        classify_failure(_outcome(Method.GRAPH, _trace(context=[]), _trace(context=[3])))
        == FORMALIZATION_GAP
    )
    assert classify_failure(_outcome(Method.BASE, _trace(), _trace(extraction=True))) == MODEL_ERROR
    assert classify_failure(_outcome(Method.BASE, _trace())) == FORMALIZATION_GAP
    assert classify_failure(_outcome(Method.BASE, _trace(informal="  "))) == OTHER_FAILURE
    assert classify_failure(_outcome(Method.BASE, _trace(errors=[]))) == OTHER_FAILURE


# -- best of n ----------------------------------------------------------------------


def _judge_rows(name: str, scores: list[str]) -> list[dict]:
    return [
        {"problem_id": name, "template_id": "judge", "turn": t, "response_text": text}
        for t, text in enumerate(scores, 1)
    ]


def test_best_of_n_picks_highest_score_earliest_tie():
    problem = _problem()
    rows = []
    for t, text in enumerate(["proof A", "proof B", "proof C"], 1):
        rows.append({"problem_id": "p1", "template_id": "informal", "turn": t, "response_text": text})
    rows += _judge_rows("p1", ["fine\nSCORE: 4", "strong\nSCORE: 7", "also strong\nSCORE: 7"])
    backend = _Recording(MockChatBackend(rows))
    winner, ranked = best_of_n(problem, RunConfig(method="base", n_candidates=3), Services(backend, None))

    assert winner.index == 1
    assert winner.informal_proof == "proof B"
    assert winner.judge_score == 7
    assert winner.justification == "strong"
    assert [c.index for c in ranked] == [1, 2, 0]

    informal_temps = [
        params.temperature for p, params in backend.calls if p.template_id is TemplateId.INFORMAL
    ]
    judge_temps = [params.temperature for p, params in backend.calls if p.template_id is TemplateId.JUDGE]
    assert informal_temps == [0.2, 0.4, 0.6]
    assert judge_temps == [0.0, 0.0, 0.0]


def test_best_of_n_temperature_ladder_wraps():
    problem = _problem()
    rows = [
        {"problem_id": "p1", "template_id": "informal", "turn": t, "response_text": f"proof {t}"}
        for t in range(1, 8)
    ] + _judge_rows("p1", [f"ok\nSCORE: {t % 10}" for t in range(1, 8)])
    backend = _Recording(MockChatBackend(rows))
    best_of_n(problem, RunConfig(method="base", n_candidates=7), Services(backend, None))
    temps = [params.temperature for p, params in backend.calls if p.template_id is TemplateId.INFORMAL]
    assert temps == [0.2, 0.4, 0.6, 0.8, 1.0, 0.2, 0.4]


def test_best_of_n_unparsable_judge_scores_zero():
    problem = _problem()
    rows = [
        {"problem_id": "p1", "template_id": "informal", "turn": 1, "response_text": "proof A"},
        {"problem_id": "p1", "template_id": "informal", "turn": 2, "response_text": "proof B"},
    ] + _judge_rows("p1", ["I cannot decide.", "fine\nSCORE: 2"])
    winner, ranked = best_of_n(
        problem, RunConfig(method="base", n_candidates=2), Services(MockChatBackend(rows), None)
    )
    assert winner.index == 1
    assert ranked[1].judge_score == 0
    assert ranked[1].justification == "judge response had no parsable score"


# -- tree search --------------------------------------------------------------------


def test_tree_search_early_exit_on_verification(data_dir):
    import json

    from proofgraph.datasets import load_problems

    mock_dir = data_dir / "mock_tree"
    backend = MockChatBackend.from_jsonl(mock_dir / "chat_script.jsonl")
    verifier = MockVerifier.from_jsonl(mock_dir / "verifier_script.jsonl")
    problem_data = json.loads((mock_dir / "problem.json").read_text(encoding="utf-8"))
    problem = Problem(
        name=problem_data["name"],
        informal_statement=problem_data["informal_statement"],
        formal_statement=problem_data["formal_statement"],
        header=problem_data.get("header", ""),
        informal_prefix=problem_data.get("informal_prefix", ""),
        goal=problem_data.get("goal"),
    )
    trace: list[dict] = []
    config = RunConfig(method="base", beam_width=2, search_depth=2)
    winner = tree_search(problem, config, Services(backend, verifier), trace_sink=trace)

    assert winner.verified
    assert winner.index == 0
    assert verifier.call_count == 1
    # informal x2 + judge x2 + formalize x1
    assert backend.call_count == 5
    assert trace[-1] == {"iteration": 1, "verified": 0}


def test_tree_search_exhausts_budget_and_keeps_best():
    problem = _problem("tree_nv")
    rows = [
        {"problem_id": "tree_nv", "template_id": "informal", "turn": 1, "response_text": "candidate zero"},
        {"problem_id": "tree_nv", "template_id": "informal", "turn": 2, "response_text": "candidate one"},
    ]
    rows += _judge_rows(
        "tree_nv",
        ["SCORE: 5", "SCORE: 3", "SCORE: 6", "SCORE: 4", "SCORE: 2", "SCORE: 1"],
    )
    rows += [
        {
            "problem_id": "tree_nv",
            "template_id": "formalize",
            "turn": t,
            "response_text": _lean_block(f"variant {t}"),
        }
        for t in range(1, 7)
    ]
    backend = MockChatBackend(rows)
    verifier = MockVerifier.scripted("tree_nv", ["failed", "failed", "failed"])
    trace: list[dict] = []
    config = RunConfig(method="base", beam_width=2, search_depth=2)
    winner = tree_search(problem, config, Services(backend, verifier), trace_sink=trace)

    assert not winner.verified
    assert winner.index == 2
    assert winner.judge_score == 6
    # One verification per candidate on first beam appearance; cached after.
    assert verifier.call_count == 3
    assert trace == [
        {"iteration": 0, "created": [0, 1], "scores": [5, 3]},
        {"iteration": 1, "refined": [2, 3], "scores": [6, 4], "beam": [2, 0]},
        {"iteration": 2, "refined": [4, 5], "scores": [2, 1], "beam": [2, 0]},
        {"final": 2, "verified": False},
    ]


def test_tree_search_zero_depth_returns_best_initial():
    problem = _problem("tz")
    rows = [
        {"problem_id": "tz", "template_id": "informal", "turn": 1, "response_text": "first"},
        {"problem_id": "tz", "template_id": "informal", "turn": 2, "response_text": "second"},
    ] + _judge_rows("tz", ["SCORE: 2", "SCORE: 9"])
    backend = MockChatBackend(rows)
    verifier = MockVerifier([])
    config = RunConfig(method="base", beam_width=2, search_depth=0)
    winner = tree_search(problem, config, Services(backend, verifier), trace_sink=None)
    assert winner.index == 1
    assert winner.judge_score == 9
    assert not winner.verified
    assert verifier.call_count == 0
