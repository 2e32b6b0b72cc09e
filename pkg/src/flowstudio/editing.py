"""Direct node editing with layer-consistency tracking.

A draft holds working copies of a node's layers. Edits mark layers dirty
and consistency unknown; propagation and regeneration use the LLM to bring
the layers back in line, and saving is blocked until the draft is
consistent again. Commits are first-writer-wins: a stale draft gets a
version conflict.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from .build import GraphHost
from .config import EngineConfig
from .graph import Phase, slug_map
from .llm import Gateway, LlmRequest, Message
from .synthesis import ancestor_contracts, load_prompt

LAYERS = ("title", "label", "requirements", "code")


class SaveBlocked(RuntimeError):
    pass


class VersionConflict(RuntimeError):
    pass


class LockedNodeError(PermissionError):
    pass


@dataclass
class NodeDraft:
    node_id: str
    base_rev: int
    title: str
    label: str
    requirements: list[str]
    code: str | None
    dirty: set[str] = field(default_factory=set)
    status: str = "consistent"  # consistent | unknown | warnings
    warnings: list[str] = field(default_factory=list)

    def layer(self, name: str) -> Any:
        return getattr(self, name)

    def to_json(self) -> dict[str, Any]:
        return {
            "node": self.node_id,
            "title": self.title,
            "label": self.label,
            "requirements": list(self.requirements),
            "code": self.code,
            "dirty": sorted(self.dirty),
            "status": self.status,
            "warnings": list(self.warnings),
        }


_LAYERS_SCHEMA = {
    "type": "object",
    "required": ["title", "label", "requirements", "code"],
    "properties": {
        "title": {"type": "string", "minLength": 1},
        "label": {"type": "string"},
        "requirements": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "code": {"anyOf": [{"type": "string"}, {"type": "null"}]},
    },
    "additionalProperties": False,
}

_CONSISTENCY_SCHEMA = {
    "type": "object",
    "required": ["consistent", "warnings"],
    "properties": {
        "consistent": {"type": "boolean"},
        "warnings": {"type": "array", "items": {"type": "string"}},
    },
    "additionalProperties": False,
}


class DraftEditor:
    """Edit operations over one-node drafts; commits go through the host."""

    def __init__(self, host: GraphHost, gateway: Gateway, exec_service: Any, config: EngineConfig | None = None):
        self.host = host
        self.gateway = gateway
        self.exec = exec_service
        self.config = config or EngineConfig()

    def open(self, node_id: str) -> NodeDraft:
        with self.host.write() as graph:
            node = graph.node(node_id)
            return NodeDraft(
                node_id=node_id,
                base_rev=node.rev,
                title=node.title,
                label=node.label,
                requirements=list(node.requirements),
                code=node.code,
            )

    # -- edits ------------------------------------------------------------

    def edit_layer(self, draft: NodeDraft, layer: str, content: Any) -> NodeDraft:
        if layer not in LAYERS:
            raise ValueError(f"unknown layer {layer!r}")
        if layer == "code":
            parse = self.exec.parse(content or "")
            if parse.status != "ok":
                message = (parse.error or {}).get("message", "syntax error")
                raise ValueError(f"code does not parse: {message}")
        if layer == "requirements":
            content = list(content)
        setattr(draft, layer, content)
        draft.dirty.add(layer)
        draft.status = "unknown"
        others = [l for l in LAYERS if l not in draft.dirty]
        draft.warnings = [f"{', '.join(others)} may not be consistent with the edited {layer}"] if others else []
        return draft

    # -- LLM-backed operations ------------------------------------------------

    def _draft_doc(self, draft: NodeDraft) -> dict[str, Any]:
        with self.host.write() as graph:
            ancestors = ancestor_contracts(graph, draft.node_id) if draft.node_id in graph.nodes else []
            slug = slug_map(graph).get(draft.node_id, "node")
        return {
            "node": {
                "title": draft.title,
                "label": draft.label,
                "requirements": list(draft.requirements),
                "code": draft.code,
                "function_name": slug,
            },
            "ancestors": [
                {"title": a.title, "requirements": list(a.requirements), "output_type": a.output_type.to_canonical()}
                for a in ancestors
            ],
        }

    def _locked(self, node_id: str) -> bool:
        with self.host.write() as graph:
            return graph.node(node_id).locked

    def propagate(self, draft: NodeDraft, from_layer: str) -> NodeDraft:
        """Minimally update the other layers to match the edited one."""
        if from_layer not in draft.dirty:
            return draft
        if self._locked(draft.node_id):
            raise LockedNodeError("locked nodes are not modified automatically")
        doc = self._draft_doc(draft)
        doc["edited_layer"] = from_layer
        req = LlmRequest(
            messages=(
                Message.text("system", load_prompt("propagate_system")),
                Message.text("user", json.dumps(doc, sort_keys=True)),
            ),
            output_schema=_LAYERS_SCHEMA,
            tags=(("attempt", "1"), ("node", draft.node_id), ("step", "propagate")),
        )
        payload = self.gateway.complete(req).payload
        edited_value = draft.layer(from_layer)
        draft.title = payload["title"]
        draft.label = payload["label"]
        draft.requirements = list(payload["requirements"])
        draft.code = payload["code"]
        setattr(draft, from_layer, edited_value)  # propagate never changes the source layer
        draft.dirty |= {l for l in LAYERS if l != from_layer}
        draft.status = "consistent"
        draft.warnings = []
        return draft

    def check_consistency(self, draft: NodeDraft) -> list[str]:
        req = LlmRequest(
            messages=(
                Message.text("system", load_prompt("consistency_system")),
                Message.text("user", json.dumps(self._draft_doc(draft), sort_keys=True)),
            ),
            output_schema=_CONSISTENCY_SCHEMA,
            tags=(("attempt", "1"), ("node", draft.node_id), ("step", "consistency")),
        )
        payload = self.gateway.complete(req).payload
        if payload["consistent"]:
            draft.status = "consistent"
            draft.warnings = []
        else:
            draft.status = "warnings"
            draft.warnings = list(payload["warnings"]) or ["layers may be inconsistent"]
        return list(draft.warnings)

    def regenerate(self, draft: NodeDraft) -> NodeDraft:
        """Regenerate every layer using current values as a guide."""
        if self._locked(draft.node_id):
            raise LockedNodeError("locked nodes are not regenerated")
        req = LlmRequest(
            messages=(
                Message.text("system", load_prompt("regenerate_system")),
                Message.text("user", json.dumps(self._draft_doc(draft), sort_keys=True)),
            ),
            output_schema=_LAYERS_SCHEMA,
            tags=(("attempt", "1"), ("node", draft.node_id), ("step", "regenerate")),
        )
        payload = self.gateway.complete(req).payload
        draft.title = payload["title"]
        draft.label = payload["label"]
        draft.requirements = list(payload["requirements"])
        draft.code = payload["code"]
        draft.dirty |= set(LAYERS)
        draft.status = "consistent"
        draft.warnings = []
        return draft

    # -- commit ----------------------------------------------------------------

    def save(self, draft: NodeDraft) -> set[str]:
        """Commit draft layers and invalidate.

        Saved layers are user-approved and authoritative: the node itself
        only needs re-evaluation (or code synthesis when it has none), while
        everything downstream is dirtied for resynthesis under the change.
        Label-only edits change no computation.
        """
        if draft.status != "consistent":
            raise SaveBlocked("draft has unresolved consistency warnings")
        with self.host.write() as graph:
            node = graph.node(draft.node_id)
            if node.rev != draft.base_rev:
                raise VersionConflict(f"node {node.title} changed since the draft was opened")
            changed = {
                layer
                for layer in LAYERS
                if draft.layer(layer) != (node.requirements if layer == "requirements" else getattr(node, layer))
            }
            if not changed:
                return set()
            graph.set_layers(
                draft.node_id,
                title=draft.title,
                label=draft.label,
                requirements=list(draft.requirements),
                code=draft.code,
            )
            if changed == {"label"}:
                affected: set[str] = set()
            else:
                affected = graph.invalidate(draft.node_id, "code")
                if node.code is None:
                    node.phase = Phase.REQUIREMENTS_READY if node.requirements else Phase.DIRTY
            draft.base_rev = node.rev
            draft.dirty.clear()
        if affected:
            self.host.notify_mutation(affected)
        return affected

    def set_lock(self, node_id: str, locked: bool) -> None:
        with self.host.write() as graph:
            graph.set_locked(node_id, locked)
