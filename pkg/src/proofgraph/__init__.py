"""Knowledge-graph retrieval and prover orchestration for Lean 4."""

__version__ = "0.1.0"
