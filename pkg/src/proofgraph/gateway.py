"""Prompt construction, chat backends, and response parsing.

Three prompt templates drive the pipeline: one elicits an informal proof,
one formalizes it into Lean 4, and one scores a candidate 0-10. Rendering
is a single substitution pass, so braces inside user text never trigger a
second expansion.
"""

from __future__ import annotations

import json
import logging
import re
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

import httpx

from ._http import DEFAULT_BACKOFF, post_json
from .errors import JudgeParseError, LeanExtractionError, MockScriptError, TransportError
from .retrieval import RetrievalContext

logger = logging.getLogger(__name__)


class TemplateId(str, Enum):
    INFORMAL = "informal"
    FORMALIZE = "formalize"
    JUDGE = "judge"


@dataclass
class SamplingParams:
    temperature: float = 0.0
    top_p: float = 1.0
    max_tokens: int = 2048
    seed: int | None = None


@dataclass
class PromptBundle:
    role_header: str
    body: str
    template_id: TemplateId
    problem_id: str = ""


@dataclass
class ModelResponse:
    text: str
    usage: dict[str, int] = field(default_factory=dict)
    backend_id: str = ""
    retries: int = 0


# ---------------------------------------------------------------------------
# templates
# ---------------------------------------------------------------------------

INFORMAL_ROLE = "You are a mathematics expert focused on generating clear informal proofs."

INFORMAL_BODY = """Given the following mathematical problem and context, generate a clear and detailed informal proof in natural language.

Context: {context}

Problem: {problem}

Provide your proof in the following format:

Informal Proof:
[Your proof here]"""

FORMALIZE_ROLE = "You are a Lean 4 code generator."

FORMALIZE_BODY = """We have:
HEADER:
{header}

INFORMAL PROOF:
{informal_proof}

PREFIX:
{informal_prefix}

STATEMENT:
{formal_statement}

GOAL (optional):
{goal}

INSTRUCTIONS:
1. Output exactly one triple-backtick code block containing valid Lean 4 code.
2. Do not include any text or explanations outside the code block.
3. Make sure the code compiles in Lean 4.

Required Format:
# Start
```lean4
<Lean code here>
```
# End"""

JUDGE_ROLE = "You are an expert judge of mathematical proofs."

JUDGE_BODY = """Evaluate the candidate proof for the problem below along three dimensions: mathematical correctness, clarity, and reasoning completeness.

Problem: {problem}

Candidate Proof:
{candidate_proof}

Give a short justification, then assign a single integer score from 0 to 10.
End your response with a final line in exactly this format:
SCORE: <n>"""

EMPTY_CONTEXT_TEXT = "(none)"

_PLACEHOLDER_RE = re.compile(
    r"\{(context|problem|header|informal_proof|informal_prefix|formal_statement|goal|candidate_proof)\}"
)


def _render_body(template: str, values: dict[str, str]) -> str:
    # Single pass: placeholders inside substituted values stay literal.
    body = _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], template)
    return body.replace("\r\n", "\n").replace("\r", "\n")


def render_informal_prompt(
    problem_statement: str,
    context: RetrievalContext | None = None,
    problem_id: str = "",
) -> PromptBundle:
    context_text = EMPTY_CONTEXT_TEXT
    if context is not None and context.rendered:
        context_text = context.rendered
    body = _render_body(INFORMAL_BODY, {"context": context_text, "problem": problem_statement})
    return PromptBundle(INFORMAL_ROLE, body, TemplateId.INFORMAL, problem_id)


def render_formalize_prompt(
    header: str,
    informal_proof: str,
    informal_prefix: str,
    formal_statement: str,
    goal: str | None = None,
    error_feedback: str = "",
    problem_id: str = "",
) -> PromptBundle:
    body = _render_body(
        FORMALIZE_BODY,
        {
            "header": header,
            "informal_proof": informal_proof,
            "informal_prefix": informal_prefix,
            "formal_statement": formal_statement,
            "goal": goal or "",
        },
    )
    if error_feedback:
        body += (
            "\n\nYour previous attempt failed verification with these errors:\n"
            + error_feedback
            + "\nFix them in this attempt."
        )
    return PromptBundle(FORMALIZE_ROLE, body, TemplateId.FORMALIZE, problem_id)


def render_judge_prompt(
    problem_statement: str,
    candidate_proof: str,
    problem_id: str = "",
) -> PromptBundle:
    body = _render_body(JUDGE_BODY, {"problem": problem_statement, "candidate_proof": candidate_proof})
    return PromptBundle(JUDGE_ROLE, body, TemplateId.JUDGE, problem_id)


# ---------------------------------------------------------------------------
# backends
# ---------------------------------------------------------------------------


class HttpChatBackend:
    """OpenAI-style ``/chat/completions`` client with bounded retries."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        client: httpx.Client | None = None,
        backoff: Sequence[float] = DEFAULT_BACKOFF,
        sleep: Callable[[float], None] = time.sleep,
        max_inflight: int | None = None,
    ) -> None:
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.model = model
        self.api_key = api_key
        self.client = client or httpx.Client(timeout=120.0)
        self.backoff = backoff
        self.sleep = sleep
        self._gate = threading.Semaphore(max_inflight) if max_inflight else None

    def complete(self, prompt: PromptBundle, params: SamplingParams) -> ModelResponse:
        payload: dict = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": prompt.role_header},
                {"role": "user", "content": prompt.body},
            ],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
        }
        if params.seed is not None:
            payload["seed"] = params.seed
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        if self._gate is not None:
            self._gate.acquire()
        try:
            body, retries = post_json(
                self.client, self.url, payload, headers=headers, backoff=self.backoff, sleep=self.sleep
            )
        finally:
            if self._gate is not None:
                self._gate.release()
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed chat response from {self.url}") from exc
        usage = {k: int(v) for k, v in (body.get("usage") or {}).items() if isinstance(v, (int, float))}
        return ModelResponse(text=text, usage=usage, backend_id=self.model, retries=retries)


class MockChatBackend:
    """Replays scripted responses keyed by (problem_id, template_id, turn).

    ``turn`` counts calls per key starting at 1, which pins down the exact
    call order a pipeline makes. Running past the script raises, loudly.
    """

    def __init__(self, entries: Iterable[dict]) -> None:
        self.script: dict[tuple[str, str], dict[int, str]] = {}
        for entry in entries:
            key = (str(entry["problem_id"]), str(entry["template_id"]))
            turn = int(entry["turn"])
            if turn in self.script.setdefault(key, {}):
                raise MockScriptError(f"duplicate mock entry for {key} turn {turn}")
            self.script[key][turn] = str(entry["response_text"])
        self._cursors: dict[tuple[str, str], int] = {}
        self._lock = threading.Lock()
        self.call_count = 0

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "MockChatBackend":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.loads(line) for line in fh if line.strip())

    def complete(self, prompt: PromptBundle, params: SamplingParams) -> ModelResponse:
        key = (prompt.problem_id, prompt.template_id.value)
        with self._lock:
            turn = self._cursors.get(key, 0) + 1
            self._cursors[key] = turn
            self.call_count += 1
        turns = self.script.get(key)
        if turns is None or turn not in turns:
            raise MockScriptError(
                f"mock chat script has no response for problem={key[0]!r} "
                f"template={key[1]!r} turn={turn}"
            )
        text = turns[turn]
        usage = {
            "prompt_tokens": len(prompt.body) // 4,
            "completion_tokens": len(text) // 4,
        }
        return ModelResponse(text=text, usage=usage, backend_id="mock", retries=0)


ChatBackend = HttpChatBackend | MockChatBackend


def complete(prompt: PromptBundle, params: SamplingParams, backend) -> ModelResponse:
    return backend.complete(prompt, params)


# ---------------------------------------------------------------------------
# response parsing
# ---------------------------------------------------------------------------

_FENCE_RE = re.compile(r"```(?:lean4|lean)?[ \t]*\r?\n(.*?)(?:\r?\n)?```", re.DOTALL)
_OPEN_FENCE_RE = re.compile(r"```(?:lean4|lean)?[ \t]*\r?\n(.*)\Z", re.DOTALL)
_SCORE_LINE_RE = re.compile(r"\s*SCORE:\s*(-?\d+)\s*")


def extract_lean_block(text: str) -> str:
    """Code inside the first fenced block; a lone open fence takes the rest."""
    m = _FENCE_RE.search(text)
    if m is None:
        m = _OPEN_FENCE_RE.search(text)
    if m is None:
        raise LeanExtractionError("no fenced code block in model response", raw_response=text)
    code = m.group(1).strip("\n")
    if not code.strip():
        raise LeanExtractionError("fenced code block is empty", raw_response=text)
    return code


def parse_judge_score(text: str) -> tuple[int, str]:
    """(score, justification) from a judge response; score clamped to 0-10."""
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    for i in range(len(lines) - 1, -1, -1):
        m = _SCORE_LINE_RE.fullmatch(lines[i])
        if m is None:
            continue
        score = int(m.group(1))
        if not 0 <= score <= 10:
            clamped = min(10, max(0, score))
            logger.warning("judge score %d outside 0-10, clamped to %d", score, clamped)
            score = clamped
        justification = "\n".join(lines[:i]).strip()
        return score, justification
    raise JudgeParseError("no SCORE line found in judge response")
