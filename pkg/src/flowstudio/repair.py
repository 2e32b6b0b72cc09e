"""Failure classification, the bounded local-repair loop, and global repair.

Local repairs are capped per node per build; after exhaustion the node stays
failed and a global repair is offered (never run automatically). A global
repair proposal applies atomically or not at all and may never touch locked
nodes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from .extypes import ValidationReport
from .graph import DataflowGraph, UnknownNode
from .kernel import ExecResult
from .llm import Gateway, LlmRequest, Message
from .synthesis import extract_code, load_prompt

MAX_LOCAL_ATTEMPTS = 3

TRIGGERS = ("syntax", "runtime", "type_violation", "check_failure", "test_failure")


class InvalidProposal(ValueError):
    pass


@dataclass
class RepairAttempt:
    """One local repair: trigger, 1-based attempt index, and what happened."""

    node_id: str
    trigger: str
    attempt: int
    diagnostics: dict[str, Any]
    outcome: str = "still_failing"  # fixed | still_failing

    def to_json(self) -> dict[str, Any]:
        return {
            "node": self.node_id,
            "trigger": self.trigger,
            "attempt": self.attempt,
            "outcome": self.outcome,
            "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True)
class ProposedEdit:
    node_id: str
    layer: str  # title | label | requirements | code
    content: Any


@dataclass
class GlobalRepairProposal:
    edits: list[ProposedEdit]
    rationale: str

    def to_json(self) -> dict[str, Any]:
        return {
            "edits": [{"node": e.node_id, "layer": e.layer, "content": e.content} for e in self.edits],
            "rationale": self.rationale,
        }


def classify_failure(outcome: ExecResult | ValidationReport) -> str:
    """Deterministic trigger mapping for the repair machinery.

    Timeouts and crashes count as runtime errors: the repair loop has only
    the three synthesis-time triggers to work with.
    """
    if isinstance(outcome, ValidationReport):
        return "type_violation"
    if outcome.status == "syntax_error":
        return "syntax"
    return "runtime"


_REPAIR_SCHEMA = {
    "type": "object",
    "required": ["code"],
    "properties": {
        "code": {"type": "string"},
        "requirements": {
            "anyOf": [{"type": "null"}, {"type": "array", "items": {"type": "string"}, "minItems": 1}]
        },
    },
    "additionalProperties": False,
}


def repair_local(
    gateway: Gateway,
    node_doc: dict[str, Any],
    trigger: str,
    diagnostics: dict[str, Any],
    attempt: int,
) -> tuple[str, list[str] | None]:
    """One local repair call; returns corrected code and optional requirements."""
    doc = {"node": node_doc, "trigger": trigger, "diagnostics": diagnostics}
    req = LlmRequest(
        messages=(
            Message.text("system", load_prompt("repair_system")),
            Message.text("user", json.dumps(doc, sort_keys=True)),
        ),
        output_schema=_REPAIR_SCHEMA,
        tags=(("attempt", str(attempt)), ("node", node_doc["id"]), ("step", "repair")),
    )
    payload = gateway.complete(req).payload or {}
    code = extract_code(payload["code"])
    requirements = payload.get("requirements")
    return code, list(requirements) if requirements else None


_GLOBAL_SCHEMA = {
    "type": "object",
    "required": ["edits", "rationale"],
    "properties": {
        "edits": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["node", "layer", "content"],
                "properties": {
                    "node": {"type": "string"},
                    "layer": {"enum": ["title", "label", "requirements", "code"]},
                    "content": {
                        "anyOf": [{"type": "string"}, {"type": "array", "items": {"type": "string"}}]
                    },
                },
                "additionalProperties": False,
            },
        },
        "rationale": {"type": "string"},
    },
    "additionalProperties": False,
}


def graph_doc(graph: DataflowGraph) -> dict[str, Any]:
    """Whole-graph rendering for agents that legitimately see everything."""
    return {
        "title": graph.title,
        "version": graph.version,
        "nodes": [
            {
                "id": n.id,
                "title": n.title,
                "label": n.label,
                "kind": n.kind.value,
                "requirements": list(n.requirements),
                "output_type": n.output_type.to_canonical() if n.output_type else None,
                "code": n.code,
                "phase": n.phase.name,
                "locked": n.locked,
            }
            for n in graph.nodes.values()
        ],
        "edges": sorted([s, d] for s, d in graph.edges),
    }


def propose_global_repair(
    gateway: Gateway,
    graph: DataflowGraph,
    node_id: str,
    diagnostics: dict[str, Any],
) -> GlobalRepairProposal:
    """Ask for a minimal whole-graph edit set fixing a stuck node."""
    doc = {
        "graph": graph_doc(graph),
        "failing_node": node_id,
        "diagnostics": diagnostics,
    }
    req = LlmRequest(
        messages=(
            Message.text("system", load_prompt("global_repair_system")),
            Message.text("user", json.dumps(doc, sort_keys=True)),
        ),
        output_schema=_GLOBAL_SCHEMA,
        tags=(("attempt", "1"), ("node", node_id), ("step", "global_repair")),
    )
    payload = gateway.complete(req).payload or {}
    edits = [ProposedEdit(e["node"], e["layer"], e["content"]) for e in payload["edits"]]
    return GlobalRepairProposal(edits=edits, rationale=payload.get("rationale", ""))


def validate_proposal(graph: DataflowGraph, proposal: GlobalRepairProposal) -> None:
    """Reject proposals touching locked or unknown nodes or malformed layers."""
    for edit in proposal.edits:
        if edit.node_id not in graph.nodes:
            raise InvalidProposal(f"unknown node {edit.node_id}")
        if graph.nodes[edit.node_id].locked:
            raise InvalidProposal(f"node {edit.node_id} is locked")
        if edit.layer == "requirements":
            if not isinstance(edit.content, list) or not all(isinstance(x, str) for x in edit.content):
                raise InvalidProposal("requirements content must be a list of strings")
        elif not isinstance(edit.content, str):
            raise InvalidProposal(f"{edit.layer} content must be a string")
        if edit.layer == "title" and not edit.content:
            raise InvalidProposal("title must be non-empty")


def apply_global_repair(graph: DataflowGraph, proposal: GlobalRepairProposal) -> set[str]:
    """Apply a validated proposal atomically; returns the invalidated set."""
    validate_proposal(graph, proposal)
    affected: set[str] = set()
    deepest: dict[str, str] = {}
    for edit in proposal.edits:
        kwargs: dict[str, Any] = {edit.layer: edit.content}
        graph.set_layers(edit.node_id, **kwargs)
        level = deepest.get(edit.node_id)
        if edit.layer in ("requirements", "title"):
            deepest[edit.node_id] = "requirements"
        elif edit.layer == "code" and level != "requirements":
            deepest[edit.node_id] = "code"
        elif edit.node_id not in deepest:
            deepest[edit.node_id] = "label"
    for node_id, layer in deepest.items():
        if layer == "label":
            continue  # label-only edits change no computation
        affected |= graph.invalidate(node_id, layer)
    return affected
