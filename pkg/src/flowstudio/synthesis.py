"""Per-node synthesis steps: requirements generation and code generation.

Each LLM call is scoped to a single node and a single layer, and sees only
that node plus its ancestors' published contracts (never descendants).
Prompt texts are versioned resource files checked into the repo.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Any

from .extypes import ExtendedType, extended_type_schema, parse_extended_type
from .graph import DataflowGraph, Node, slug_map
from .llm import Gateway, ImagePart, LlmRequest, Message, TextPart
from .template import AncestorContract, render_template


@lru_cache(maxsize=None)
def load_prompt(name: str) -> str:
    return resources.files("flowstudio.prompts").joinpath(f"{name}.txt").read_text()


@dataclass
class RequirementsResult:
    """Outcome of the requirements step for one node."""

    precondition_issues: list[str]
    requirements: list[str]
    output_type: ExtendedType

    def __post_init__(self):
        if not self.requirements:
            raise ValueError("requirements must be non-empty")


@lru_cache(maxsize=1)
def requirements_output_schema() -> dict[str, Any]:
    """Structured-output schema for the requirements step.

    Embeds the canonical extended-type schema for the output_type field.
    Cached: treat the returned document as read-only.
    """
    ext = extended_type_schema()
    return {
        "type": "object",
        "required": ["precondition_issues", "requirements", "output_type"],
        "properties": {
            "precondition_issues": {"type": "array", "items": {"type": "string"}},
            "requirements": {"type": "array", "items": {"type": "string"}, "minItems": 1},
            "output_type": {"$ref": "#/$defs/type"},
        },
        "additionalProperties": False,
        "$defs": ext["$defs"],
    }


def ancestor_contracts(graph: DataflowGraph, node_id: str) -> list[AncestorContract]:
    """Published contracts of every ancestor, in creation order."""
    slugs = slug_map(graph)
    out = []
    for aid in graph.ancestors(node_id):
        a = graph.nodes[aid]
        out.append(
            AncestorContract(
                slug=slugs[aid],
                title=a.title,
                requirements=tuple(a.requirements),
                output_type=a.output_type or ExtendedType.none(),
            )
        )
    return out


def subgraph_doc(graph: DataflowGraph, node_id: str) -> dict[str, Any]:
    """JSON rendering of the node's upstream subgraph (node + ancestors only)."""
    slugs = slug_map(graph)
    keep = set(graph.ancestors(node_id)) | {node_id}
    nodes = []
    for nid in graph.nodes:
        if nid not in keep:
            continue
        n = graph.nodes[nid]
        nodes.append(
            {
                "id": n.id,
                "slug": slugs[nid],
                "title": n.title,
                "label": n.label,
                "kind": n.kind.value,
                "requirements": list(n.requirements),
                "output_type": n.output_type.to_canonical() if n.output_type else None,
            }
        )
    edges = sorted([s, d] for s, d in graph.edges if s in keep and d in keep)
    return {"title": graph.title, "nodes": nodes, "edges": edges}


def gen_requirements(
    gateway: Gateway,
    graph: DataflowGraph,
    node: Node,
    graph_image: str | None = None,
    temperature: float = 0.0,
) -> RequirementsResult:
    """Requirements step: precondition consistency, prose bullets, output type."""
    return gen_requirements_prepared(
        gateway,
        node,
        ancestor_contracts(graph, node.id),
        subgraph_doc(graph, node.id),
        graph_image=graph_image,
        temperature=temperature,
    )


def gen_requirements_prepared(
    gateway: Gateway,
    node: Node,
    ancestors: list[AncestorContract],
    graph_doc: dict[str, Any],
    graph_image: str | None = None,
    temperature: float = 0.0,
) -> RequirementsResult:
    """Requirements step over pre-extracted inputs (no graph access needed)."""
    doc = {
        "node": {
            "id": node.id,
            "title": node.title,
            "label": node.label,
            "kind": node.kind.value,
            "current_requirements": list(node.requirements),
            "current_output_type": node.output_type.to_canonical() if node.output_type else None,
        },
        "ancestors": [
            {
                "title": a.title,
                "slug": a.slug,
                "requirements": list(a.requirements),
                "output_type": a.output_type.to_canonical(),
            }
            for a in ancestors
        ],
        "graph": graph_doc,
    }
    parts: tuple = (TextPart(json.dumps(doc, sort_keys=True)),)
    if graph_image:
        parts += (ImagePart("image/png", graph_image),)
    req = LlmRequest(
        messages=(
            Message.text("system", load_prompt("requirements_system")),
            Message(role="user", parts=parts),
        ),
        output_schema=requirements_output_schema(),
        temperature=temperature,
        tags=(("attempt", "1"), ("node", node.id), ("step", "requirements")),
    )
    payload = gateway.complete(req).payload or {}
    return RequirementsResult(
        precondition_issues=list(payload.get("precondition_issues", [])),
        requirements=list(payload["requirements"]),
        output_type=parse_extended_type(payload["output_type"]),
    )


_FENCE = re.compile(r"```(?:python)?\s*\n(.*?)```", re.DOTALL)


def extract_code(text: str) -> str:
    """Pull source out of a completion, tolerating a markdown fence."""
    match = _FENCE.search(text)
    code = match.group(1) if match else text
    return code.strip("\n") + "\n"


def gen_code(
    gateway: Gateway,
    node: Node,
    fn_name: str,
    ancestors: list[AncestorContract],
    temperature: float = 0.0,
) -> str:
    """Code step: the LLM fills the rendered template for this node."""
    template = render_template(node, fn_name, ancestors)
    req = LlmRequest(
        messages=(
            Message.text("system", load_prompt("code_system")),
            Message.text("user", template),
        ),
        temperature=temperature,
        tags=(("attempt", "1"), ("node", node.id), ("step", "code")),
    )
    return extract_code(gateway.complete(req).text)


def check_locked_consistency(
    gateway: Gateway,
    node: Node,
    ancestors: list[AncestorContract],
) -> list[str]:
    """Consistency notes for a locked node after upstream changes (no edits)."""
    doc = {
        "node": {
            "title": node.title,
            "label": node.label,
            "requirements": list(node.requirements),
            "code": node.code,
            "locked": True,
        },
        "ancestors": [
            {"title": a.title, "requirements": list(a.requirements), "output_type": a.output_type.to_canonical()}
            for a in ancestors
        ],
    }
    req = LlmRequest(
        messages=(
            Message.text("system", load_prompt("consistency_system")),
            Message.text("user", json.dumps(doc, sort_keys=True)),
        ),
        output_schema={
            "type": "object",
            "required": ["consistent", "warnings"],
            "properties": {
                "consistent": {"type": "boolean"},
                "warnings": {"type": "array", "items": {"type": "string"}},
            },
            "additionalProperties": False,
        },
        tags=(("attempt", "1"), ("node", node.id), ("step", "locked_check")),
    )
    payload = gateway.complete(req).payload or {}
    if payload.get("consistent", True):
        return list(payload.get("warnings", []))
    warnings = list(payload.get("warnings", [])) or ["locked node may be inconsistent with upstream changes"]
    return warnings
