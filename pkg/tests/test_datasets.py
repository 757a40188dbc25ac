from __future__ import annotations

import json
import random

import pytest

from proofgraph.datasets import (
    RANDOM_SUBSET_SEED,
    Problem,
    load_problems,
    random_subset,
)
from proofgraph.errors import DatasetError


def _write(tmp_path, rows) -> str:
    path = tmp_path / "problems.jsonl"
    lines = [r if isinstance(r, str) else json.dumps(r) for r in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


def _row(name: str, **overrides) -> dict:
    row = {
        "name": name,
        "informal_statement": f"Show {name}.",
        "formal_statement": f"theorem {name} : True := by",
    }
    row.update(overrides)
    return row


def test_load_problems_basic_fields(tmp_path):
    path = _write(
        tmp_path,
        [
            _row(
                "p1",
                header="import Mathlib\n",
                informal_prefix="/-- doc -/\n",
                goal="True",
                split="test",
            )
        ],
    )
    [problem] = load_problems(path)
    assert problem == Problem(
        name="p1",
        informal_statement="Show p1.",
        formal_statement="theorem p1 : True := by",
        header="import Mathlib\n",
        informal_prefix="/-- doc -/\n",
        goal="True",
        split="test",
    )


def test_load_problems_field_aliases(tmp_path):
    path = _write(
        tmp_path,
        [
            {
                "problem_name": "p1",
                "informal_stmt": "Show something.",
                "formal_stmt": "theorem p1 : True := by",
            },
            {
                "id": "p2",
                "nl_statement": "Show more.",
                "formal_statement": "theorem p2 : True := by",
            },
        ],
    )
    problems = load_problems(path)
    assert [p.name for p in problems] == ["p1", "p2"]
    assert problems[0].informal_statement == "Show something."
    assert problems[1].informal_statement == "Show more."


def test_load_problems_canonical_field_wins_over_alias(tmp_path):
    path = _write(tmp_path, [_row("canonical", problem_name="aliased")])
    [problem] = load_problems(path)
    assert problem.name == "canonical"


def test_load_problems_preserves_extra_fields(tmp_path):
    path = _write(tmp_path, [_row("p1", source="olympiad", year=2020)])
    [problem] = load_problems(path)
    assert problem.extra == {"source": "olympiad", "year": 2020}
    assert problem.to_dict()["source"] == "olympiad"


def test_load_problems_skips_blank_lines(tmp_path):
    path = _write(tmp_path, [json.dumps(_row("p1")), "", "   ", json.dumps(_row("p2"))])
    assert [p.name for p in load_problems(path)] == ["p1", "p2"]


def test_load_problems_reports_every_bad_line(tmp_path):
    path = _write(
        tmp_path,
        [
            json.dumps(_row("p1")),
            "{not json",
            json.dumps({"name": "p3"}),
            json.dumps([1, 2]),
            json.dumps(_row("p1")),
        ],
    )
    with pytest.raises(DatasetError) as exc_info:
        load_problems(path)
    message = str(exc_info.value)
    assert "line 2: invalid JSON" in message
    assert "line 3: missing required field(s) informal_statement, formal_statement" in message
    assert "line 4: expected a JSON object" in message
    assert "duplicate problem name 'p1' (2 records)" in message


def test_load_problems_format_hints(tmp_path):
    path = _write(tmp_path, [_row("p1")])
    assert len(load_problems(path, format_hint="minif2f")) == 1
    assert len(load_problems(path, format_hint="proofnet")) == 1
    assert len(load_problems(path, format_hint="")) == 1
    with pytest.raises(DatasetError, match="unknown format hint"):
        load_problems(path, format_hint="weird")


def test_random_subset_filters_sorts_and_samples():
    problems = [
        Problem(f"p{i:03d}", "stmt", "theorem x : True := by" if i % 2 == 0 else "def helper := 1")
        for i in range(20)
    ]
    subset = random_subset(problems, size=5)
    assert len(subset) == 5
    assert all("theorem" in p.formal_statement for p in subset)
    # Fixed seed over the name-sorted eligible list.
    eligible = sorted((p for p in problems if "theorem" in p.formal_statement), key=lambda p: p.name)
    assert subset == random.Random(RANDOM_SUBSET_SEED).sample(eligible, 5)
    assert random_subset(problems, size=5) == subset


def test_random_subset_small_input_returned_sorted():
    problems = [
        Problem("b", "s", "theorem b : True := by"),
        Problem("a", "s", "theorem a : True := by"),
    ]
    assert [p.name for p in random_subset(problems, size=10)] == ["a", "b"]


def test_load_problems_random_subset_hint(tmp_path):
    rows = [_row(f"p{i:03d}") for i in range(30)]
    rows[7]["formal_statement"] = "def helper := 0"
    path = _write(tmp_path, rows)
    problems = load_problems(path, format_hint="random_subset")
    # 29 eligible, below the 250-problem cap: all kept, sorted by name.
    assert len(problems) == 29
    assert [p.name for p in problems] == sorted(p.name for p in problems)
    assert all(p.name != "p007" for p in problems)
