"""Benchmark runner: prove a problem list, aggregate, and emit reports.

Outcomes are assembled in problem order no matter how many workers run,
and the wall clock is injectable, so a fully mocked run emits
byte-identical reports every time.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .datasets import Problem
from .pipeline import ProofOutcome, RunConfig, Services, prove

logger = logging.getLogger(__name__)

REPORT_FILENAME = "report.json"
SUMMARY_FILENAME = "summary.md"
FAILURES_FILENAME = "failures.md"

_EXAMPLES_PER_CLASS = 5


@dataclass
class Report:
    run_id: str
    config: RunConfig
    per_problem: list[ProofOutcome] = field(default_factory=list)
    accuracy: float = 0.0
    accuracy_by_attempt: list[float] = field(default_factory=list)
    failure_histogram: dict[str, int] = field(default_factory=dict)
    wall_clock: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "config": self.config.to_dict(),
            "accuracy": self.accuracy,
            "accuracy_by_attempt": list(self.accuracy_by_attempt),
            "failure_histogram": dict(self.failure_histogram),
            "wall_clock": self.wall_clock,
            "per_problem": [o.to_dict() for o in self.per_problem],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Report":
        return cls(
            run_id=data["run_id"],
            config=RunConfig.from_dict(data["config"]),
            per_problem=[ProofOutcome.from_dict(o) for o in data.get("per_problem", [])],
            accuracy=float(data["accuracy"]),
            accuracy_by_attempt=[float(v) for v in data.get("accuracy_by_attempt", [])],
            failure_histogram={k: int(v) for k, v in data.get("failure_histogram", {}).items()},
            wall_clock=float(data.get("wall_clock", 0.0)),
        )


def compute_run_id(config: RunConfig, problems: Sequence[Problem]) -> str:
    digest = hashlib.sha256(
        json.dumps(
            {"config": config.to_dict(), "problems": [p.name for p in problems]},
            sort_keys=True,
        ).encode("utf-8")
    )
    return digest.hexdigest()[:12]


def run_bench(
    problems: Sequence[Problem],
    config: RunConfig,
    services: Services,
    workers: int = 1,
) -> Report:
    """Prove every problem and aggregate. Problem-level errors never abort."""
    if workers < 1:
        raise ValueError("workers must be at least 1")
    started = services.clock()
    if workers == 1 or len(problems) <= 1:
        outcomes = [prove(problem, config, services) for problem in problems]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(prove, problem, config, services) for problem in problems]
            outcomes = [f.result() for f in futures]
    wall_clock = services.clock() - started

    total = len(outcomes)
    verified = sum(1 for o in outcomes if o.status == "verified")
    accuracy = round(verified / total, 4) if total else 0.0
    by_attempt: list[float] = []
    for attempt in range(1, config.attempts + 1):
        won = sum(
            1
            for o in outcomes
            if o.status == "verified" and o.winning_attempt is not None and o.winning_attempt <= attempt
        )
        by_attempt.append(round(won / total, 4) if total else 0.0)

    histogram: dict[str, int] = {}
    for outcome in outcomes:
        if outcome.status == "failed":
            label = outcome.failure_class or "other"
        elif outcome.status == "error":
            label = "error"
        else:
            continue
        histogram[label] = histogram.get(label, 0) + 1

    return Report(
        run_id=compute_run_id(config, problems),
        config=config,
        per_problem=outcomes,
        accuracy=accuracy,
        accuracy_by_attempt=by_attempt,
        failure_histogram=dict(sorted(histogram.items())),
        wall_clock=round(wall_clock, 4),
    )


def _pct(value: float) -> str:
    return f"{value * 100:.2f}%"


def render_summary(report: Report) -> str:
    total = len(report.per_problem)
    verified = sum(1 for o in report.per_problem if o.status == "verified")
    accuracy_text = f"{report.accuracy:.2f}" if total else "n=0"
    lines = [
        "# Bench summary",
        "",
        f"- run id: `{report.run_id}`",
        f"- method: {report.config.method.value}",
        f"- problems: {total}",
        f"- verified: {verified}",
        f"- accuracy: {accuracy_text}",
        f"- wall clock: {report.wall_clock:.2f}s",
        "",
        "## Accuracy",
        "",
        "| method | accuracy |",
        "| --- | --- |",
        f"| {report.config.method.value} | {_pct(report.accuracy) if total else '-'} |",
        "",
        "## Accuracy by attempt",
        "",
    ]
    if report.accuracy_by_attempt:
        header = " | ".join(f"r = {i}" for i in range(1, len(report.accuracy_by_attempt) + 1))
        divider = " | ".join("---" for _ in report.accuracy_by_attempt)
        values = " | ".join(
            (_pct(v) if total else "-") for v in report.accuracy_by_attempt
        )
        lines += [f"| {header} |", f"| {divider} |", f"| {values} |"]
    else:
        lines.append("(no attempts configured)")
    lines.append("")
    return "\n".join(lines)


def render_failures(report: Report) -> str:
    lines = ["# Failure taxonomy", ""]
    if not report.failure_histogram:
        lines += ["No failures.", ""]
        return "\n".join(lines)
    lines += ["| class | count |", "| --- | --- |"]
    for label, count in report.failure_histogram.items():
        lines.append(f"| {label} | {count} |")
    for label in report.failure_histogram:
        names = [
            o.problem_name
            for o in report.per_problem
            if (o.status == "failed" and (o.failure_class or "other") == label)
            or (o.status == "error" and label == "error")
        ]
        lines += ["", f"## {label}", ""]
        for name in names[:_EXAMPLES_PER_CLASS]:
            lines.append(f"- {name}")
        if len(names) > _EXAMPLES_PER_CLASS:
            lines.append(f"- ... and {len(names) - _EXAMPLES_PER_CLASS} more")
    lines.append("")
    return "\n".join(lines)


def emit_report(report: Report, out_dir: str | Path) -> dict[str, Path]:
    """Write report.json, summary.md, and failures.md; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out / REPORT_FILENAME,
        "summary": out / SUMMARY_FILENAME,
        "failures": out / FAILURES_FILENAME,
    }
    with open(paths["report"], "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
    paths["summary"].write_text(render_summary(report), encoding="utf-8")
    paths["failures"].write_text(render_failures(report), encoding="utf-8")
    return paths


def load_report(path: str | Path) -> Report:
    with open(path, "r", encoding="utf-8") as fh:
        return Report.from_dict(json.load(fh))


class StepClock:
    """Fake wall clock advancing one second per reading.

    Used for mocked runs so reports are byte-identical across runs.
    """

    def __init__(self) -> None:
        self._now = 0.0

    def __call__(self) -> float:
        value = self._now
        self._now += 1.0
        return value
