"""Exception types shared across the package."""

from __future__ import annotations


class ProofGraphError(Exception):
    """Base class for all package errors."""


class DumpParseError(ProofGraphError):
    """Raised when a wiki XML dump is malformed."""


class GraphLoadError(ProofGraphError):
    """Raised when nodes/edges/embedding files are inconsistent or corrupt."""


class SealedStoreError(ProofGraphError):
    """Raised on any mutation of a sealed graph store."""


class EmbeddingError(ProofGraphError):
    """Raised for embedding failures: bad vectors, dimension mismatch, zero norm."""


class LeanExtractionError(ProofGraphError):
    """Raised when no Lean code block can be extracted from a model response."""

    def __init__(self, message: str, raw_response: str = "") -> None:
        super().__init__(message)
        self.raw_response = raw_response


class JudgeParseError(ProofGraphError):
    """Raised when a judge response has no parsable score line."""


class TransportError(ProofGraphError):
    """Raised when a remote model call fails after all retries."""


class MockScriptError(ProofGraphError):
    """Raised when a mock backend or verifier runs past its script."""


class DatasetError(ProofGraphError):
    """Raised when a problem dataset fails validation."""


class ConfigError(ProofGraphError):
    """Raised for missing or contradictory service configuration."""
