"""Core graph domain types: nodes, edges, and their vocabularies."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any


class NodeType(str, Enum):
    DEFINITION = "definition"
    THEOREM = "theorem"
    PROOF = "proof"
    AXIOM = "axiom"
    OTHER = "other"


class RelType(str, Enum):
    LINK = "LINK"
    USES_DEFINITION = "USES_DEFINITION"
    RELATED_DEFINITION = "RELATED_DEFINITION"
    USES_AXIOM = "USES_AXIOM"
    SIMILAR_PROOF = "SIMILAR_PROOF"
    PROOF_DEPENDENCY = "PROOF_DEPENDENCY"
    PROOF_TECHNIQUE = "PROOF_TECHNIQUE"


@dataclass
class Node:
    """A single wiki page after cleaning.

    ``title`` is the full page title including any namespace prefix;
    ``name`` is the title with the namespace prefix stripped.
    """

    id: int
    node_type: NodeType
    title: str
    name: str
    content: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "type": self.node_type.value,
            "title": self.title,
            "name": self.name,
            "content": self.content,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Node":
        return cls(
            id=int(data["id"]),
            node_type=NodeType(data["type"]),
            title=data["title"],
            name=data["name"],
            content=data["content"],
        )


@dataclass(frozen=True)
class Edge:
    """A directed, typed edge between two node ids."""

    from_id: int
    to_id: int
    rel_type: RelType
