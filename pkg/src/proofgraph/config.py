"""Service configuration and backend wiring.

A single ``ServiceConfig`` describes where models and the checker live;
``build_services`` turns it into the live or mocked service bundle the
pipeline consumes. A mock directory always wins over remote settings so
offline runs never touch the network.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from .bench import StepClock
from .errors import ConfigError
from .gateway import HttpChatBackend, MockChatBackend
from .graph import GraphStore
from .pipeline import Services
from .retrieval import (
    Embedder,
    HashEmbeddingProvider,
    HttpEmbeddingProvider,
    MockEmbeddingProvider,
)
from .verifier import LeanVerifier, MockVerifier

logger = logging.getLogger(__name__)

CHAT_SCRIPT_FILENAME = "chat_script.jsonl"
VERIFIER_SCRIPT_FILENAME = "verifier_script.jsonl"
EMBEDDINGS_SCRIPT_FILENAME = "embeddings.jsonl"

DEFAULT_HASH_DIMENSION = 16


@dataclass
class ServiceConfig:
    chat_base_url: str = ""
    chat_model: str = ""
    chat_api_key_env: str = "PROOFGRAPH_CHAT_API_KEY"
    embed_base_url: str = ""
    embed_model: str = ""
    embed_api_key_env: str = "PROOFGRAPH_EMBED_API_KEY"
    embed_dimension: int | None = None
    lean_command: list[str] = field(default_factory=lambda: ["lean", "{file}"])
    lean_project_dir: str | None = None
    verify_timeout: float = 60.0
    workers: int = 1

    @classmethod
    def from_file(cls, path: str | Path) -> "ServiceConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from exc
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"{path}: unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    def _api_key(self, env_name: str) -> str | None:
        return os.environ.get(env_name) or None


def _embedding_provider(config: ServiceConfig, mock_dir: Path | None, dim_hint: int | None = None):
    hash_dim = config.embed_dimension or dim_hint or DEFAULT_HASH_DIMENSION
    if mock_dir is not None:
        script = mock_dir / EMBEDDINGS_SCRIPT_FILENAME
        if script.exists():
            return MockEmbeddingProvider.from_jsonl(script)
        return HashEmbeddingProvider(hash_dim)
    if config.embed_base_url and config.embed_model:
        return HttpEmbeddingProvider(
            config.embed_base_url,
            config.embed_model,
            api_key=config._api_key(config.embed_api_key_env),
        )
    return HashEmbeddingProvider(hash_dim)


def build_services(
    config: ServiceConfig,
    store: GraphStore | None = None,
    mock_dir: str | Path | None = None,
) -> Services:
    """Wire up backends. With ``mock_dir`` everything is scripted and offline."""
    dim_hint = store.embedding_dim if store is not None else None
    if mock_dir is not None:
        mock = Path(mock_dir)
        chat_script = mock / CHAT_SCRIPT_FILENAME
        verifier_script = mock / VERIFIER_SCRIPT_FILENAME
        if not chat_script.exists():
            raise ConfigError(f"{mock}: missing {CHAT_SCRIPT_FILENAME}")
        if not verifier_script.exists():
            raise ConfigError(f"{mock}: missing {VERIFIER_SCRIPT_FILENAME}")
        return Services(
            backend=MockChatBackend.from_jsonl(chat_script),
            verifier=MockVerifier.from_jsonl(verifier_script),
            store=store,
            embedder=Embedder(_embedding_provider(config, mock, dim_hint), dimension=dim_hint),
            clock=StepClock(),
        )
    if not config.chat_base_url or not config.chat_model:
        raise ConfigError("chat_base_url and chat_model are required without a mock directory")
    backend = HttpChatBackend(
        config.chat_base_url,
        config.chat_model,
        api_key=config._api_key(config.chat_api_key_env),
    )
    verifier = LeanVerifier(
        command=config.lean_command,
        project_dir=config.lean_project_dir,
        timeout=config.verify_timeout,
    )
    return Services(
        backend=backend,
        verifier=verifier,
        store=store,
        embedder=Embedder(_embedding_provider(config, None, dim_hint), dimension=dim_hint),
    )
