"""Lean 4 verification: submission assembly, checker invocation, diagnostics.

The live path writes the submission to a scratch ``Main.lean`` and runs a
configurable checker command; the mock path replays scripted outcomes so
the rest of the pipeline can be exercised hermetically.
"""

from __future__ import annotations

import json
import logging
import re
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Sequence

from .errors import MockScriptError

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 60.0
MAX_FEEDBACK_ERRORS = 10


class VerificationStatus(str, Enum):
    VERIFIED = "verified"
    FAILED = "failed"
    TIMEOUT = "timeout"
    TOOLCHAIN_ERROR = "toolchain_error"


@dataclass
class LeanError:
    line: int
    column: int
    message: str

    def to_dict(self) -> dict[str, Any]:
        return {"line": self.line, "column": self.column, "message": self.message}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "LeanError":
        return cls(int(data["line"]), int(data["column"]), data["message"])


@dataclass
class VerificationResult:
    status: VerificationStatus
    errors: list[LeanError] = field(default_factory=list)
    raw_output: str = ""
    elapsed: float = 0.0

    @property
    def verified(self) -> bool:
        return self.status is VerificationStatus.VERIFIED

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status.value,
            "errors": [e.to_dict() for e in self.errors],
            "raw_output": self.raw_output,
            "elapsed": self.elapsed,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "VerificationResult":
        return cls(
            status=VerificationStatus(data["status"]),
            errors=[LeanError.from_dict(e) for e in data.get("errors", [])],
            raw_output=data.get("raw_output", ""),
            elapsed=float(data.get("elapsed", 0.0)),
        )


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

_DIAG_RE = re.compile(r"^(?P<path>[^:\s][^:]*):(?P<line>\d+):(?P<col>\d+):\s*(?P<sev>error|warning|info):\s*(?P<msg>.*)$")


def parse_errors(raw_output: str) -> list[LeanError]:
    """Error diagnostics from checker output.

    Warnings and info lines are dropped; lines that match no diagnostic
    shape are folded into one trailing synthetic entry so nothing the
    checker said is silently lost.
    """
    errors: list[LeanError] = []
    leftovers: list[str] = []
    for line in raw_output.splitlines():
        if not line.strip():
            continue
        m = _DIAG_RE.match(line)
        if m is None:
            leftovers.append(line)
            continue
        if m.group("sev") == "error":
            errors.append(LeanError(int(m.group("line")), int(m.group("col")), m.group("msg").strip()))
    if leftovers:
        errors.append(LeanError(0, 0, "unrecognized checker output:\n" + "\n".join(leftovers)))
    return errors


def render_error_feedback(
    errors: Sequence[LeanError],
    previous_code: str,
    max_errors: int = MAX_FEEDBACK_ERRORS,
) -> str:
    """Compact error list for the next formalization prompt.

    Each entry carries the offending source line when the location is
    valid; output is capped at ``max_errors`` entries, ASCII arrows only.
    """
    if not errors:
        return ""
    code_lines = previous_code.split("\n")
    blocks: list[str] = []
    for err in errors[:max_errors]:
        block = f"line {err.line}, column {err.column}: {err.message}"
        if 1 <= err.line <= len(code_lines) and code_lines[err.line - 1].strip():
            block += f"\n> {code_lines[err.line - 1]}"
        blocks.append(block)
    if len(errors) > max_errors:
        blocks.append(f"... and {len(errors) - max_errors} more errors")
    return "\n".join(blocks)


def assemble_submission(header: str, informal_prefix: str, code: str) -> str:
    """Header, prefix, and generated code joined with duplicate imports removed.

    Models often repeat the header's imports inside the code block; Lean
    rejects imports after the first declaration, so only the first
    occurrence of each import line survives.
    """
    merged = "\n".join(part.strip("\n") for part in (header, informal_prefix, code) if part and part.strip())
    seen_imports: set[str] = set()
    lines: list[str] = []
    for line in merged.split("\n"):
        stripped = line.strip()
        if stripped.startswith("import "):
            if stripped in seen_imports:
                continue
            seen_imports.add(stripped)
        lines.append(line)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# verifiers
# ---------------------------------------------------------------------------


class LeanVerifier:
    """Runs a checker command against a scratch file holding the submission.

    ``command`` may reference the scratch file as ``{file}``; without the
    placeholder the path is appended as the last argument.
    """

    def __init__(
        self,
        command: Sequence[str] = ("lean", "{file}"),
        project_dir: str | Path | None = None,
        timeout: float = DEFAULT_TIMEOUT,
    ) -> None:
        self.command = list(command)
        self.project_dir = str(project_dir) if project_dir else None
        self.timeout = timeout
        self.call_count = 0

    def verify(self, code: str, problem_id: str = "", timeout: float | None = None) -> VerificationResult:
        self.call_count += 1
        limit = timeout if timeout is not None else self.timeout
        start = time.perf_counter()
        with tempfile.TemporaryDirectory(prefix="proofgraph-lean-") as workspace:
            source = Path(workspace) / "Main.lean"
            source.write_text(code, encoding="utf-8")
            if any("{file}" in arg for arg in self.command):
                cmd = [arg.replace("{file}", str(source)) for arg in self.command]
            else:
                cmd = self.command + [str(source)]
            try:
                proc = subprocess.run(
                    cmd,
                    cwd=self.project_dir or workspace,
                    capture_output=True,
                    text=True,
                    timeout=limit,
                )
            except FileNotFoundError as exc:
                elapsed = time.perf_counter() - start
                logger.error("checker command not found: %s", cmd[0])
                return VerificationResult(
                    VerificationStatus.TOOLCHAIN_ERROR,
                    [],
                    f"checker command not found: {exc}",
                    elapsed,
                )
            except subprocess.TimeoutExpired as exc:
                elapsed = time.perf_counter() - start
                partial = _decode(exc.stdout) + _decode(exc.stderr)
                return VerificationResult(
                    VerificationStatus.TIMEOUT,
                    [],
                    partial + f"\nchecker timed out after {limit}s",
                    elapsed,
                )
        elapsed = time.perf_counter() - start
        raw = (proc.stdout or "") + (proc.stderr or "")
        # Exit 0 with a sorry warning is still an unfinished proof.
        if proc.returncode == 0 and "sorry" not in raw:
            return VerificationResult(VerificationStatus.VERIFIED, [], raw, elapsed)
        return VerificationResult(VerificationStatus.FAILED, parse_errors(raw), raw, elapsed)


def _decode(data: Any) -> str:
    if data is None:
        return ""
    if isinstance(data, bytes):
        return data.decode("utf-8", errors="replace")
    return str(data)


class MockVerifier:
    """Replays scripted verification outcomes per problem, in attempt order."""

    def __init__(self, entries: Iterable[dict]) -> None:
        staged: dict[str, list[tuple[int, str, str]]] = {}
        for entry in entries:
            staged.setdefault(str(entry["problem_id"]), []).append(
                (int(entry["attempt"]), str(entry["status"]), str(entry.get("raw_output", "")))
            )
        self.script: dict[str, list[tuple[str, str]]] = {
            pid: [(status, raw) for _, status, raw in sorted(rows)] for pid, rows in staged.items()
        }
        self._cursors: dict[str, int] = {}
        self._lock = threading.Lock()
        self.call_count = 0

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "MockVerifier":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.loads(line) for line in fh if line.strip())

    @classmethod
    def scripted(cls, problem_id: str, statuses: Sequence[str], raw_output: str = "Main.lean:1:0: error: scripted failure") -> "MockVerifier":
        return cls(
            {
                "problem_id": problem_id,
                "attempt": i + 1,
                "status": status,
                "raw_output": "" if status == "verified" else raw_output,
            }
            for i, status in enumerate(statuses)
        )

    def verify(self, code: str, problem_id: str = "", timeout: float | None = None) -> VerificationResult:
        with self._lock:
            cursor = self._cursors.get(problem_id, 0)
            self._cursors[problem_id] = cursor + 1
            self.call_count += 1
        rows = self.script.get(problem_id)
        if rows is None or cursor >= len(rows):
            raise MockScriptError(
                f"mock verifier script exhausted for problem {problem_id!r} (call {cursor + 1})"
            )
        status_text, raw = rows[cursor]
        status = VerificationStatus(status_text)
        errors = parse_errors(raw) if status is VerificationStatus.FAILED else []
        return VerificationResult(status, errors, raw, 0.0)


Verifier = LeanVerifier | MockVerifier
