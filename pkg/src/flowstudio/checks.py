"""Prose-specified assertion checks and unit tests on node outputs.

Quantitative checks compile (once, cached by content hash) to assertion
code over the node's stored output and its ancestors' outputs; qualitative
checks send the rendered figure to the vision-capable gateway for a
structured verdict. Unit tests synthesize their own inputs and never touch
live upstream data. Stored specs never affect build scheduling until
explicitly run.
"""

from __future__ import annotations

import hashlib
import json
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

from .config import EngineConfig
from .graph import DataflowGraph, Phase, slug_map
from .kernel import ExecRequest
from .llm import Gateway, ImagePart, LlmRequest, Message, SchemaViolation, ScriptMiss, TextPart, TransportError
from .synthesis import load_prompt

if TYPE_CHECKING:
    from .project import Project

GATEWAY_ERRORS = (TransportError, SchemaViolation, ScriptMiss)


@dataclass
class ValidationOutcome:
    status: str  # pass | fail | error
    message: str = ""
    evidence: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {"status": self.status, "message": self.message, "evidence": self.evidence}

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "ValidationOutcome":
        return cls(status=doc["status"], message=doc.get("message", ""), evidence=doc.get("evidence", {}))


@dataclass
class CheckSpec:
    """One prose assertion over a node's output."""

    id: str
    node_id: str
    text: str
    kind: str  # quantitative | qualitative
    kind_overridden: bool = False
    compiled_key: str | None = None
    compiled_code: str | None = None  # None with a key set means: judged visually
    last_result: ValidationOutcome | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "node": self.node_id,
            "text": self.text,
            "kind": self.kind,
            "kind_overridden": self.kind_overridden,
            "compiled_key": self.compiled_key,
            "compiled_code": self.compiled_code,
            "last_result": self.last_result.to_json() if self.last_result else None,
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "CheckSpec":
        return cls(
            id=doc["id"],
            node_id=doc["node"],
            text=doc["text"],
            kind=doc.get("kind", "quantitative"),
            kind_overridden=bool(doc.get("kind_overridden", False)),
            compiled_key=doc.get("compiled_key"),
            compiled_code=doc.get("compiled_code"),
            last_result=ValidationOutcome.from_json(doc["last_result"]) if doc.get("last_result") else None,
        )


@dataclass
class TestSpec:
    """One prose input scenario plus expected behavior for a node's function."""

    id: str
    node_id: str
    text: str
    compiled_key: str | None = None
    compiled_code: str | None = None
    last_result: ValidationOutcome | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "node": self.node_id,
            "text": self.text,
            "compiled_key": self.compiled_key,
            "compiled_code": self.compiled_code,
            "last_result": self.last_result.to_json() if self.last_result else None,
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "TestSpec":
        return cls(
            id=doc["id"],
            node_id=doc["node"],
            text=doc["text"],
            compiled_key=doc.get("compiled_key"),
            compiled_code=doc.get("compiled_code"),
            last_result=ValidationOutcome.from_json(doc["last_result"]) if doc.get("last_result") else None,
        )


def infer_check_kind(graph: DataflowGraph, node_id: str) -> str:
    node = graph.nodes[node_id]
    produces_figure = node.kind.value == "plot" or (
        node.output_type is not None and node.output_type.variant == "figure"
    )
    return "qualitative" if produces_figure else "quantitative"


def compile_cache_key(text: str, requirements: list[str], output_type_doc: Any) -> str:
    blob = json.dumps({"text": text, "requirements": requirements, "output_type": output_type_doc}, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


_SUGGEST_CHECKS_SCHEMA = {
    "type": "object",
    "required": ["checks"],
    "properties": {"checks": {"type": "array", "items": {"type": "string"}}},
    "additionalProperties": False,
}

_SUGGEST_TESTS_SCHEMA = {
    "type": "object",
    "required": ["tests"],
    "properties": {"tests": {"type": "array", "items": {"type": "string"}}},
    "additionalProperties": False,
}

_COMPILE_CHECK_SCHEMA = {
    "type": "object",
    "required": ["code"],
    "properties": {"code": {"anyOf": [{"type": "string"}, {"type": "null"}]}},
    "additionalProperties": False,
}

_COMPILE_TEST_SCHEMA = {
    "type": "object",
    "required": ["code"],
    "properties": {"code": {"type": "string"}},
    "additionalProperties": False,
}

_VERDICT_SCHEMA = {
    "type": "object",
    "required": ["verdict", "rationale"],
    "properties": {
        "verdict": {"enum": ["pass", "fail"]},
        "rationale": {"type": "string"},
    },
    "additionalProperties": False,
}


class ValidationEngine:
    """Suggests, compiles, runs, and reports checks and tests for a project."""

    def __init__(self, project: "Project", gateway: Gateway, exec_service: Any, config: EngineConfig | None = None):
        self.project = project
        self.gateway = gateway
        self.exec = exec_service
        self.config = config or EngineConfig()

    # -- suggestion --------------------------------------------------------

    def _node_doc(self, node_id: str) -> dict[str, Any]:
        node = self.project.graph.nodes[node_id]
        return {
            "id": node.id,
            "title": node.title,
            "label": node.label,
            "requirements": list(node.requirements),
            "output_type": node.output_type.to_canonical() if node.output_type else None,
            "code": node.code,
        }

    def suggest_checks(self, node_id: str) -> list[str]:
        node = self.project.graph.nodes[node_id]
        if not node.requirements:
            raise ValueError(f"node {node.title} has no requirements to suggest checks from")
        req = LlmRequest(
            messages=(
                Message.text("system", load_prompt("check_suggest_system")),
                Message.text("user", json.dumps(self._node_doc(node_id), sort_keys=True)),
            ),
            output_schema=_SUGGEST_CHECKS_SCHEMA,
            tags=(("attempt", "1"), ("node", node_id), ("step", "check_suggest")),
        )
        return list(self.gateway.complete(req).payload["checks"])

    def suggest_tests(self, node_id: str) -> list[str]:
        node = self.project.graph.nodes[node_id]
        if not node.requirements:
            raise ValueError(f"node {node.title} has no requirements to suggest tests from")
        req = LlmRequest(
            messages=(
                Message.text("system", load_prompt("test_suggest_system")),
                Message.text("user", json.dumps(self._node_doc(node_id), sort_keys=True)),
            ),
            output_schema=_SUGGEST_TESTS_SCHEMA,
            tags=(("attempt", "1"), ("node", node_id), ("step", "test_suggest")),
        )
        return list(self.gateway.complete(req).payload["tests"])

    def add_check(self, node_id: str, text: str, kind: str | None = None) -> CheckSpec:
        inferred = infer_check_kind(self.project.graph, node_id)
        spec = CheckSpec(
            id=uuid.uuid4().hex,
            node_id=node_id,
            text=text,
            kind=kind or inferred,
            kind_overridden=kind is not None and kind != inferred,
        )
        self.project.checks_for(node_id).append(spec)
        return spec

    def add_test(self, node_id: str, text: str) -> TestSpec:
        spec = TestSpec(id=uuid.uuid4().hex, node_id=node_id, text=text)
        self.project.tests_for(node_id).append(spec)
        return spec

    # -- checks ---------------------------------------------------------------

    def _compile_check(self, spec: CheckSpec) -> None:
        node = self.project.graph.nodes[spec.node_id]
        key = compile_cache_key(
            spec.text, node.requirements, node.output_type.to_canonical() if node.output_type else None
        )
        if spec.compiled_key == key:
            return
        slugs = slug_map(self.project.graph)
        doc = {
            "check": spec.text,
            "node": self._node_doc(spec.node_id),
            "output_variable": slugs[spec.node_id],
            "ancestor_variables": [slugs[a] for a in self.project.graph.ancestors(spec.node_id)],
        }
        req = LlmRequest(
            messages=(
                Message.text("system", load_prompt("check_compile_system")),
                Message.text("user", json.dumps(doc, sort_keys=True)),
            ),
            output_schema=_COMPILE_CHECK_SCHEMA,
            tags=(("attempt", "1"), ("node", spec.node_id), ("step", "check_compile")),
        )
        payload = self.gateway.complete(req).payload
        spec.compiled_key = key
        spec.compiled_code = payload["code"]

    def _run_quantitative(self, spec: CheckSpec) -> ValidationOutcome:
        graph = self.project.graph
        node = graph.nodes[spec.node_id]
        slugs = slug_map(graph)
        bindings = {slugs[spec.node_id]: node.result_ref.sha256}
        for aid in graph.ancestors(spec.node_id):
            ancestor = graph.nodes[aid]
            if ancestor.result_ref is not None:
                bindings[slugs[aid]] = ancestor.result_ref.sha256
        result = self.exec.submit(
            ExecRequest(
                source=spec.compiled_code or "",
                mode="snippet",
                bindings=bindings,
                capture_figures=False,
                timeout_s=self.config.exec_timeout_s,
            )
        )
        if result.status == "ok":
            return ValidationOutcome(status="pass")
        if result.status == "exception" and (result.error or {}).get("type") == "AssertionError":
            return ValidationOutcome(status="fail", message=(result.error or {}).get("message", "assertion failed"))
        return ValidationOutcome(
            status="error",
            message=(result.error or {}).get("message", result.status),
            evidence={"status": result.status},
        )

    def _run_qualitative(self, spec: CheckSpec) -> ValidationOutcome:
        node = self.project.graph.nodes[spec.node_id]
        if not node.figure_refs:
            return ValidationOutcome(status="error", message="node produced no figure to judge")
        parts: tuple = (TextPart(json.dumps({"check": spec.text}, sort_keys=True)),)
        for ref in node.figure_refs:
            parts += (ImagePart("image/png", ref),)
        req = LlmRequest(
            messages=(
                Message.text("system", load_prompt("check_vision_system")),
                Message(role="user", parts=parts),
            ),
            output_schema=_VERDICT_SCHEMA,
            temperature=None,
            tags=(("attempt", "1"), ("node", spec.node_id), ("step", "check_vision")),
        )
        payload = self.gateway.complete(req).payload
        status = "pass" if payload["verdict"] == "pass" else "fail"
        return ValidationOutcome(
            status=status,
            message=payload["rationale"],
            evidence={"figure": node.figure_refs[0], "verdict": payload["verdict"], "rationale": payload["rationale"]},
        )

    def run_check(self, spec: CheckSpec) -> ValidationOutcome:
        node = self.project.graph.nodes[spec.node_id]
        if node.phase is not Phase.EVALUATED:
            outcome = ValidationOutcome(status="error", message=f"node {node.title} is not evaluated")
        else:
            try:
                self._compile_check(spec)
                if spec.compiled_code:
                    outcome = self._run_quantitative(spec)
                else:
                    outcome = self._run_qualitative(spec)
            except GATEWAY_ERRORS as exc:
                outcome = ValidationOutcome(status="error", message=f"{type(exc).__name__}: {exc}")
        spec.last_result = outcome
        return outcome

    def run_checks(self, node_ids: list[str] | None = None) -> list[tuple[CheckSpec, ValidationOutcome]]:
        specs = self._specs(self.project.checks, node_ids)
        with ThreadPoolExecutor(max_workers=self.config.build_workers) as tpe:
            outcomes = list(tpe.map(self.run_check, specs))
        return list(zip(specs, outcomes))

    # -- tests -------------------------------------------------------------------

    def _compile_test(self, spec: TestSpec) -> None:
        node = self.project.graph.nodes[spec.node_id]
        key = compile_cache_key(
            spec.text, node.requirements, node.output_type.to_canonical() if node.output_type else None
        )
        if spec.compiled_key == key:
            return
        slugs = slug_map(self.project.graph)
        doc = {
            "test": spec.text,
            "node": self._node_doc(spec.node_id),
            "function_name": slugs[spec.node_id],
        }
        req = LlmRequest(
            messages=(
                Message.text("system", load_prompt("test_compile_system")),
                Message.text("user", json.dumps(doc, sort_keys=True)),
            ),
            output_schema=_COMPILE_TEST_SCHEMA,
            tags=(("attempt", "1"), ("node", spec.node_id), ("step", "test_compile")),
        )
        spec.compiled_key = key
        spec.compiled_code = self.gateway.complete(req).payload["code"]

    def run_test(self, spec: TestSpec) -> ValidationOutcome:
        node = self.project.graph.nodes[spec.node_id]
        if not node.code:
            outcome = ValidationOutcome(status="error", message=f"node {node.title} has no code to test")
        else:
            try:
                self._compile_test(spec)
            except GATEWAY_ERRORS as exc:
                outcome = ValidationOutcome(status="error", message=f"{type(exc).__name__}: {exc}")
                spec.last_result = outcome
                return outcome
            # Inputs are synthesized by the test code itself: no bindings.
            source = node.code + "\n\n" + (spec.compiled_code or "")
            result = self.exec.submit(
                ExecRequest(source=source, mode="snippet", capture_figures=False,
                            timeout_s=self.config.exec_timeout_s)
            )
            if result.status == "ok":
                outcome = ValidationOutcome(status="pass")
            elif result.status == "exception" and (result.error or {}).get("type") == "AssertionError":
                outcome = ValidationOutcome(status="fail", message=(result.error or {}).get("message", ""))
            else:
                outcome = ValidationOutcome(
                    status="error",
                    message=(result.error or {}).get("message", result.status),
                    evidence={"status": result.status},
                )
        spec.last_result = outcome
        return outcome

    def run_tests(self, node_ids: list[str] | None = None) -> list[tuple[TestSpec, ValidationOutcome]]:
        specs = self._specs(self.project.tests, node_ids)
        with ThreadPoolExecutor(max_workers=self.config.build_workers) as tpe:
            outcomes = list(tpe.map(self.run_test, specs))
        return list(zip(specs, outcomes))

    @staticmethod
    def _specs(table: dict[str, list], node_ids: list[str] | None):
        ids = list(table) if node_ids is None else node_ids
        out = []
        for nid in ids:
            out.extend(table.get(nid, []))
        return out

    # -- fix flow -----------------------------------------------------------------

    def failing_specs(self, node_id: str) -> tuple[list[CheckSpec], list[TestSpec]]:
        checks = [c for c in self.project.checks.get(node_id, []) if c.last_result and c.last_result.status in ("fail", "error")]
        tests = [t for t in self.project.tests.get(node_id, []) if t.last_result and t.last_result.status in ("fail", "error")]
        return checks, tests

    def fix_failures(self, node_id: str, builder: Any) -> dict[str, Any]:
        """Repair a node with failing checks/tests, then re-run them downstream.

        Uses the same bounded local-repair machinery as the build; after the
        budget is exhausted the node is left failing with global repair offered.
        """
        from .repair import repair_local

        host = builder.host
        with host.write() as graph:
            node = graph.nodes[node_id]
            if node.locked:
                raise PermissionError(f"node {node.title} is locked")
            attempts = node.repair_attempts
        failing_checks, failing_tests = self.failing_specs(node_id)
        if not failing_checks and not failing_tests:
            return {"fixed": True, "attempts": 0, "global_repair_offered": False}

        trigger = "check_failure" if failing_checks else "test_failure"
        while attempts < self.config.max_repairs:
            attempts += 1
            diagnostics = {
                "failing_checks": [
                    {"text": c.text, "message": c.last_result.message if c.last_result else ""}
                    for c in failing_checks
                ],
                "failing_tests": [
                    {"text": t.text, "message": t.last_result.message if t.last_result else ""}
                    for t in failing_tests
                ],
            }
            try:
                code, requirements = repair_local(self.gateway, self._node_doc(node_id), trigger, diagnostics, attempts)
            except GATEWAY_ERRORS:
                break
            with host.write() as graph:
                graph.set_layers(node_id, code=code, requirements=requirements)
                graph.invalidate(node_id, "code")
                graph.nodes[node_id].repair_attempts = attempts
            builder.build(targets={node_id} | self.project.graph.downstream_closure(node_id))
            for spec in failing_checks:
                self.run_check(spec)
            for spec in failing_tests:
                self.run_test(spec)
            failing_checks, failing_tests = self.failing_specs(node_id)
            if not failing_checks and not failing_tests:
                return {"fixed": True, "attempts": attempts, "global_repair_offered": False}
        with host.write() as graph:
            graph.nodes[node_id].repair_attempts = attempts
        return {"fixed": False, "attempts": attempts, "global_repair_offered": True}
