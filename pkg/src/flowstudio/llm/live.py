"""Live backend speaking an HTTP chat-completion wire format.

Endpoint, model tag, and API key come from a configuration file and
environment variables (see flowstudio.config). Images are inlined as
base64 data URLs resolved from the value store.
"""

from __future__ import annotations

import base64
import json
from typing import Any, Callable

import httpx

from ..store import ValueStore
from .gateway import (
    ImagePart,
    LlmRequest,
    LlmResponse,
    TextPart,
    ToolCall,
    TransportError,
)


def build_payload(req: LlmRequest, store: ValueStore | None, stream: bool = False) -> dict[str, Any]:
    """Translate a request into the chat-completions JSON body."""
    messages: list[dict[str, Any]] = []
    for m in req.messages:
        doc: dict[str, Any] = {"role": m.role}
        if m.tool_call_id:
            doc["tool_call_id"] = m.tool_call_id
        if m.tool_calls:
            doc["tool_calls"] = [
                {
                    "id": c.call_id,
                    "type": "function",
                    "function": {"name": c.name, "arguments": json.dumps(c.arguments)},
                }
                for c in m.tool_calls
            ]
            doc["content"] = m.plain_text() or None
        elif any(isinstance(p, ImagePart) for p in m.parts):
            parts: list[dict[str, Any]] = []
            for p in m.parts:
                if isinstance(p, TextPart):
                    parts.append({"type": "text", "text": p.text})
                else:
                    if store is None:
                        raise TransportError("image part present but no store configured")
                    b64 = base64.b64encode(store.get_bytes(p.sha256)).decode("ascii")
                    parts.append({"type": "image_url", "image_url": {"url": f"data:{p.media_type};base64,{b64}"}})
            doc["content"] = parts
        else:
            doc["content"] = m.plain_text()
        messages.append(doc)

    payload: dict[str, Any] = {"model": req.model, "messages": messages, "stream": stream}
    if req.temperature is not None:
        payload["temperature"] = req.temperature
    if req.max_tokens is not None:
        payload["max_tokens"] = req.max_tokens
    if req.tools:
        payload["tools"] = [
            {
                "type": "function",
                "function": {"name": t.name, "description": t.description, "parameters": t.parameters_schema},
            }
            for t in req.tools
        ]
    if req.output_schema is not None:
        payload["response_format"] = {
            "type": "json_schema",
            "json_schema": {"name": "output", "schema": req.output_schema, "strict": False},
        }
    return payload


def parse_completion(body: dict[str, Any]) -> LlmResponse:
    choice = body["choices"][0]["message"]
    if choice.get("tool_calls"):
        calls = tuple(
            ToolCall(
                name=c["function"]["name"],
                arguments=json.loads(c["function"].get("arguments") or "{}"),
                call_id=c.get("id", f"call{i}"),
            )
            for i, c in enumerate(choice["tool_calls"])
        )
        return LlmResponse(kind="tool_calls", tool_calls=calls)
    return LlmResponse(kind="text", text=choice.get("content") or "")


class LiveBackend:
    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        store: ValueStore | None = None,
        timeout_s: float = 120.0,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.store = store
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self.client = httpx.Client(timeout=timeout_s, headers=headers)

    def _url(self) -> str:
        return f"{self.endpoint}/chat/completions"

    def complete(self, req: LlmRequest) -> LlmResponse:
        payload = build_payload(req, self.store, stream=False)
        payload["model"] = req.model if req.model != "default" else self.model
        try:
            response = self.client.post(self._url(), json=payload)
            response.raise_for_status()
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        return parse_completion(response.json())

    def stream(self, req: LlmRequest, sink: Callable[[str], None]) -> LlmResponse:
        payload = build_payload(req, self.store, stream=True)
        payload["model"] = req.model if req.model != "default" else self.model
        chunks: list[str] = []
        tool_fragments: dict[int, dict[str, Any]] = {}
        try:
            with self.client.stream("POST", self._url(), json=payload) as response:
                response.raise_for_status()
                for line in response.iter_lines():
                    if not line.startswith("data:"):
                        continue
                    data = line[len("data:"):].strip()
                    if data == "[DONE]":
                        break
                    delta = json.loads(data)["choices"][0].get("delta", {})
                    if delta.get("content"):
                        chunks.append(delta["content"])
                        sink(delta["content"])
                    for frag in delta.get("tool_calls", []):
                        slot = tool_fragments.setdefault(
                            frag.get("index", 0), {"id": "", "name": "", "arguments": ""}
                        )
                        slot["id"] = frag.get("id") or slot["id"]
                        fn = frag.get("function", {})
                        slot["name"] += fn.get("name") or ""
                        slot["arguments"] += fn.get("arguments") or ""
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        if tool_fragments:
            calls = tuple(
                ToolCall(
                    name=slot["name"],
                    arguments=json.loads(slot["arguments"] or "{}"),
                    call_id=slot["id"] or f"call{i}",
                )
                for i, slot in sorted(tool_fragments.items())
            )
            return LlmResponse(kind="tool_calls", tool_calls=calls)
        text = "".join(chunks)
        return LlmResponse(kind="text", text=text, chunks=tuple(chunks))
