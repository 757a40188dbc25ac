"""Problem datasets: JSONL loading, field aliasing, subset selection."""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import DatasetError

logger = logging.getLogger(__name__)

# Alternate field names seen across benchmark exports, mapped to ours.
_FIELD_ALIASES = {
    "informal_stmt": "informal_statement",
    "nl_statement": "informal_statement",
    "formal_stmt": "formal_statement",
    "problem_name": "name",
    "id": "name",
}

_KNOWN_FIELDS = {
    "name",
    "informal_statement",
    "header",
    "informal_prefix",
    "formal_statement",
    "goal",
    "split",
}

RANDOM_SUBSET_SEED = 137
RANDOM_SUBSET_SIZE = 250


@dataclass
class Problem:
    name: str
    informal_statement: str
    formal_statement: str
    header: str = ""
    informal_prefix: str = ""
    goal: str | None = None
    split: str = ""
    extra: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "name": self.name,
            "informal_statement": self.informal_statement,
            "formal_statement": self.formal_statement,
            "header": self.header,
            "informal_prefix": self.informal_prefix,
            "goal": self.goal,
            "split": self.split,
        }
        data.update(self.extra)
        return data


def _normalize_record(obj: dict[str, Any]) -> tuple[dict[str, Any], dict[str, Any]]:
    known: dict[str, Any] = {}
    extra: dict[str, Any] = {}
    for key, value in obj.items():
        target = _FIELD_ALIASES.get(key, key)
        if target in _KNOWN_FIELDS:
            # First writer wins when a record carries both a field and its alias.
            known.setdefault(target, value)
        else:
            extra[key] = value
    return known, extra


def load_problems(path: str | Path, format_hint: str | None = None) -> list[Problem]:
    """Load a JSONL problem file, failing atomically with every bad line listed.

    ``format_hint="random_subset"`` applies the fixed-seed 250-problem
    selection used for large generated corpora: keep theorem-statement
    items, sort by name, then sample with seed ``RANDOM_SUBSET_SEED``.
    """
    problems: list[Problem] = []
    bad: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                bad.append(f"line {lineno}: invalid JSON ({exc.msg})")
                continue
            if not isinstance(obj, dict):
                bad.append(f"line {lineno}: expected a JSON object")
                continue
            known, extra = _normalize_record(obj)
            missing = [f for f in ("name", "informal_statement", "formal_statement") if not known.get(f)]
            if missing:
                bad.append(f"line {lineno}: missing required field(s) {', '.join(missing)}")
                continue
            problems.append(
                Problem(
                    name=str(known["name"]),
                    informal_statement=str(known["informal_statement"]),
                    formal_statement=str(known["formal_statement"]),
                    header=str(known.get("header", "")),
                    informal_prefix=str(known.get("informal_prefix", "")),
                    goal=None if known.get("goal") is None else str(known["goal"]),
                    split=str(known.get("split", "")),
                    extra=extra,
                )
            )
    counts: dict[str, int] = {}
    for problem in problems:
        counts[problem.name] = counts.get(problem.name, 0) + 1
    for name, count in sorted(counts.items()):
        if count > 1:
            bad.append(f"duplicate problem name {name!r} ({count} records)")
    if bad:
        raise DatasetError(f"{path}: " + "; ".join(bad))
    if format_hint == "random_subset":
        problems = random_subset(problems)
    elif format_hint not in (None, "", "minif2f", "proofnet"):
        raise DatasetError(f"unknown format hint {format_hint!r}")
    return problems


def random_subset(
    problems: list[Problem],
    size: int = RANDOM_SUBSET_SIZE,
    seed: int = RANDOM_SUBSET_SEED,
) -> list[Problem]:
    """Fixed-seed sample of theorem-statement problems, stable across runs."""
    eligible = sorted(
        (p for p in problems if "theorem" in p.formal_statement),
        key=lambda p: p.name,
    )
    if len(eligible) <= size:
        return eligible
    return random.Random(seed).sample(eligible, size)
