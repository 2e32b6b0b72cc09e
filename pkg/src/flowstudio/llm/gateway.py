"""Provider-agnostic chat-completion gateway.

Supports multi-modal messages, tool calls, streaming, and schema-constrained
structured output. Structured payloads are re-validated locally regardless
of provider claims, with bounded re-asks on violation. The gateway never
mutates conversation history it is handed.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Protocol

import jsonschema


class TransportError(RuntimeError):
    pass


class SchemaViolation(ValueError):
    pass


class ScriptMiss(LookupError):
    """The scripted backend has no matching entry: always a test bug."""


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    """Image content by store reference; bytes are resolved at send time."""

    media_type: str
    sha256: str


Part = TextPart | ImagePart


@dataclass(frozen=True)
class ToolCall:
    name: str
    arguments: dict[str, Any]
    call_id: str


@dataclass(frozen=True)
class Message:
    role: str  # system | user | assistant | tool
    parts: tuple[Part, ...]
    tool_calls: tuple[ToolCall, ...] = ()
    tool_call_id: str | None = None

    @classmethod
    def text(cls, role: str, text: str) -> "Message":
        return cls(role=role, parts=(TextPart(text),))

    def plain_text(self) -> str:
        return "\n".join(p.text for p in self.parts if isinstance(p, TextPart))


@dataclass(frozen=True)
class ToolSpecDef:
    name: str
    description: str
    parameters_schema: dict[str, Any]


@dataclass(frozen=True)
class LlmRequest:
    """One chat-completion request plus routing tags for scripting/recording."""

    messages: tuple[Message, ...]
    tools: tuple[ToolSpecDef, ...] = ()
    output_schema: dict[str, Any] | None = None
    temperature: float | None = 0.0
    max_tokens: int | None = None
    model: str = "default"
    tags: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.messages:
            raise ValueError("a request needs at least one message")

    def tag(self, key: str, default: str = "") -> str:
        return dict(self.tags).get(key, default)

    def with_tags(self, **kv: str) -> "LlmRequest":
        merged = dict(self.tags)
        merged.update(kv)
        return replace(self, tags=tuple(sorted(merged.items())))


@dataclass(frozen=True)
class LlmResponse:
    kind: str  # text | tool_calls | structured
    text: str = ""
    chunks: tuple[str, ...] = ()
    tool_calls: tuple[ToolCall, ...] = ()
    payload: dict[str, Any] | None = None

    def to_json(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"kind": self.kind}
        if self.kind == "text":
            doc["text"] = self.text
            if self.chunks:
                doc["chunks"] = list(self.chunks)
        elif self.kind == "tool_calls":
            doc["tool_calls"] = [
                {"name": c.name, "arguments": c.arguments, "id": c.call_id} for c in self.tool_calls
            ]
        else:
            doc["payload"] = self.payload
        return doc

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "LlmResponse":
        kind = doc["kind"]
        if kind == "text":
            text = doc.get("text", "")
            chunks = tuple(doc.get("chunks", ()))
            if chunks and not text:
                text = "".join(chunks)
            return cls(kind="text", text=text, chunks=chunks)
        if kind == "tool_calls":
            calls = tuple(
                ToolCall(c["name"], c.get("arguments", {}), c.get("id", f"call{i}"))
                for i, c in enumerate(doc.get("tool_calls", []))
            )
            return cls(kind="tool_calls", tool_calls=calls)
        if kind == "structured":
            return cls(kind="structured", payload=doc.get("payload"))
        raise ValueError(f"unknown response kind {kind!r}")


class Backend(Protocol):
    def complete(self, req: LlmRequest) -> LlmResponse: ...

    def stream(self, req: LlmRequest, sink: Callable[[str], None]) -> LlmResponse: ...


def _message_doc(m: Message) -> dict[str, Any]:
    return {
        "role": m.role,
        "parts": [
            {"text": p.text} if isinstance(p, TextPart) else {"image": p.sha256, "media_type": p.media_type}
            for p in m.parts
        ],
        "tool_calls": [{"name": c.name, "arguments": c.arguments, "id": c.call_id} for c in m.tool_calls],
        "tool_call_id": m.tool_call_id,
    }


def request_fingerprint(req: LlmRequest) -> str:
    """Stable hash of a request's full content, used for transcript replay."""
    doc = {
        "messages": [_message_doc(m) for m in req.messages],
        "tools": [{"name": t.name, "description": t.description, "parameters": t.parameters_schema} for t in req.tools],
        "output_schema": req.output_schema,
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
        "model": req.model,
        "tags": dict(req.tags),
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode("utf-8")).hexdigest()


class _TokenBucket:
    def __init__(self, rate_per_s: float, burst: int):
        self.rate = rate_per_s
        self.capacity = float(burst)
        self.tokens = float(burst)
        self.updated = time.monotonic()
        self._lock = threading.Lock()

    def take(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
                self.updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            time.sleep(wait)


class Gateway:
    """Backend wrapper enforcing structured-output validity and rate limits."""

    def __init__(
        self,
        backend: Backend,
        concurrency: int = 4,
        rate_per_s: float | None = None,
        reask_limit: int = 2,
    ):
        self.backend = backend
        self.reask_limit = reask_limit
        self._slots = threading.Semaphore(concurrency)
        self._bucket = _TokenBucket(rate_per_s, burst=max(1, concurrency)) if rate_per_s else None
        # Validator construction is expensive; cache by schema content.
        self._validators: dict[str, jsonschema.Validator] = {}
        self._validators_lock = threading.Lock()

    def _validator_for(self, schema: dict[str, Any]) -> jsonschema.Validator:
        key = json.dumps(schema, sort_keys=True)
        with self._validators_lock:
            validator = self._validators.get(key)
            if validator is None:
                validator = jsonschema.Draft202012Validator(schema)
                if len(self._validators) > 64:
                    self._validators.clear()
                self._validators[key] = validator
        return validator

    def _call(self, fn: Callable[[], LlmResponse]) -> LlmResponse:
        if self._bucket:
            self._bucket.take()
        with self._slots:
            return fn()

    def complete(self, req: LlmRequest) -> LlmResponse:
        if req.output_schema is None:
            return self._call(lambda: self.backend.complete(req))
        return self._structured(req)

    def stream(self, req: LlmRequest, sink: Callable[[str], None]) -> LlmResponse:
        return self._call(lambda: self.backend.stream(req, sink))

    def _structured(self, req: LlmRequest) -> LlmResponse:
        validator = self._validator_for(req.output_schema)
        messages = req.messages
        last_errors: list[str] = []
        for _ in range(self.reask_limit + 1):
            response = self._call(lambda: self.backend.complete(replace(req, messages=messages)))
            payload = self._payload_of(response)
            if payload is not None:
                errors = [e.message for e in validator.iter_errors(payload)]
                if not errors:
                    return LlmResponse(kind="structured", payload=payload)
            else:
                errors = ["response was not a JSON object"]
            last_errors = errors
            # Re-ask with the violation appended; history handed in stays untouched.
            shown = json.dumps(payload) if payload is not None else response.text
            messages = messages + (
                Message.text("assistant", shown),
                Message.text("user", "The response violated the required schema: " + "; ".join(errors) + ". Respond again with a valid object."),
            )
        raise SchemaViolation("; ".join(last_errors))

    @staticmethod
    def _payload_of(response: LlmResponse) -> dict[str, Any] | None:
        if response.kind == "structured" and isinstance(response.payload, dict):
            return response.payload
        if response.kind == "text":
            try:
                doc = json.loads(response.text)
            except json.JSONDecodeError:
                return None
            return doc if isinstance(doc, dict) else None
        return None
