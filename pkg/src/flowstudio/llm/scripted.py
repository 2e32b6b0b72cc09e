"""Deterministic scripted backend and exchange recording.

Script entries match requests by routing tags (step kind, node id pattern,
attempt index) plus an optional content regex; a miss is always a test bug
and raises ScriptMiss rather than improvising. Transcripts are line-delimited
JSON and replay byte-identically.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .gateway import LlmRequest, LlmResponse, ScriptMiss, TransportError, request_fingerprint


@dataclass
class ScriptEntry:
    """One canned exchange; consumed at most max_uses times (None = unbounded)."""

    response: dict[str, Any]
    step: str | None = None
    node: str | None = None
    attempt: int | None = None
    content: str | None = None
    max_uses: int | None = None
    request_sha256: str | None = None
    uses: int = 0

    def matches(self, req: LlmRequest) -> bool:
        if self.max_uses is not None and self.uses >= self.max_uses:
            return False
        if self.step is not None and req.tag("step") != self.step:
            return False
        if self.node is not None and not re.search(self.node, req.tag("node")):
            return False
        if self.attempt is not None and req.tag("attempt") != str(self.attempt):
            return False
        if self.content is not None:
            text = "\n".join(m.plain_text() for m in req.messages)
            if not re.search(self.content, text, re.DOTALL):
                return False
        return True

    def to_json(self) -> dict[str, Any]:
        match: dict[str, Any] = {}
        if self.step is not None:
            match["step"] = self.step
        if self.node is not None:
            match["node"] = self.node
        if self.attempt is not None:
            match["attempt"] = self.attempt
        if self.content is not None:
            match["content"] = self.content
        doc: dict[str, Any] = {"match": match, "response": self.response}
        if self.max_uses is not None:
            doc["max_uses"] = self.max_uses
        if self.request_sha256 is not None:
            doc["request_sha256"] = self.request_sha256
        return doc

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "ScriptEntry":
        match = doc.get("match", {})
        return cls(
            response=doc["response"],
            step=match.get("step"),
            node=match.get("node"),
            attempt=match.get("attempt"),
            content=match.get("content"),
            max_uses=doc.get("max_uses"),
            request_sha256=doc.get("request_sha256"),
        )


def load_transcript(path: str | Path) -> list[ScriptEntry]:
    entries = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            entries.append(ScriptEntry.from_json(json.loads(line)))
    return entries


def save_transcript(path: str | Path, entries: list[ScriptEntry]) -> None:
    text = "".join(json.dumps(e.to_json(), sort_keys=True) + "\n" for e in entries)
    Path(path).write_text(text)


class ScriptedBackend:
    """Replays canned responses; fully deterministic given a request sequence."""

    def __init__(self, entries: list[ScriptEntry], verify_hash: bool = False):
        self.entries = entries
        self.verify_hash = verify_hash
        self.calls = 0
        self.calls_by_step: dict[str, int] = {}
        self._lock = threading.Lock()  # serialize matching so attempt counters stay exact

    @classmethod
    def from_file(cls, path: str | Path, verify_hash: bool = False) -> "ScriptedBackend":
        return cls(load_transcript(path), verify_hash=verify_hash)

    def _match(self, req: LlmRequest) -> ScriptEntry:
        with self._lock:
            self.calls += 1
            step = req.tag("step")
            self.calls_by_step[step] = self.calls_by_step.get(step, 0) + 1
            for entry in self.entries:
                if entry.matches(req):
                    if self.verify_hash and entry.request_sha256 is not None:
                        actual = request_fingerprint(req)
                        if actual != entry.request_sha256:
                            raise ScriptMiss(
                                f"transcript diverged for {dict(req.tags)}: "
                                f"recorded {entry.request_sha256[:12]}, got {actual[:12]}"
                            )
                    entry.uses += 1
                    return entry
        raise ScriptMiss(
            f"no scripted entry for request {dict(req.tags)} "
            f"(fingerprint {request_fingerprint(req)[:12]})"
        )

    def complete(self, req: LlmRequest) -> LlmResponse:
        entry = self._match(req)
        if entry.response.get("kind") == "transport_error":
            raise TransportError(entry.response.get("message", "injected transport failure"))
        return LlmResponse.from_json(entry.response)

    def stream(self, req: LlmRequest, sink: Callable[[str], None]) -> LlmResponse:
        entry = self._match(req)
        doc = entry.response
        if doc.get("kind") == "transport_error":
            for chunk in doc.get("chunks", ())[: doc.get("after_chunks", 0)]:
                sink(chunk)
            raise TransportError(doc.get("message", "injected transport failure"))
        response = LlmResponse.from_json(doc)
        if response.kind == "text":
            for chunk in response.chunks or ((response.text,) if response.text else ()):
                sink(chunk)
        return response


class RecordingBackend:
    """Wraps a live backend and captures every exchange as script entries."""

    def __init__(self, inner: Any, path: str | Path | None = None):
        self.inner = inner
        self.path = Path(path) if path else None
        self.entries: list[ScriptEntry] = []
        self._lock = threading.Lock()

    def _record(self, req: LlmRequest, response: LlmResponse) -> None:
        attempt = req.tag("attempt")
        entry = ScriptEntry(
            response=response.to_json(),
            step=req.tag("step") or None,
            node=re.escape(req.tag("node")) if req.tag("node") else None,
            attempt=int(attempt) if attempt else None,
            max_uses=1,
            request_sha256=request_fingerprint(req),
        )
        with self._lock:
            self.entries.append(entry)
            if self.path:
                with open(self.path, "a") as f:
                    f.write(json.dumps(entry.to_json(), sort_keys=True) + "\n")

    def complete(self, req: LlmRequest) -> LlmResponse:
        response = self.inner.complete(req)
        self._record(req, response)
        return response

    def stream(self, req: LlmRequest, sink: Callable[[str], None]) -> LlmResponse:
        chunks: list[str] = []

        def tee(chunk: str) -> None:
            chunks.append(chunk)
            sink(chunk)

        response = self.inner.stream(req, tee)
        if response.kind == "text" and chunks and not response.chunks:
            response = LlmResponse(kind="text", text=response.text, chunks=tuple(chunks))
        self._record(req, response)
        return response
