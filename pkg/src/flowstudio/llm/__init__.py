from .gateway import (
    Gateway,
    ImagePart,
    LlmRequest,
    LlmResponse,
    Message,
    SchemaViolation,
    ScriptMiss,
    TextPart,
    ToolCall,
    ToolSpecDef,
    TransportError,
    request_fingerprint,
)
from .scripted import RecordingBackend, ScriptedBackend, ScriptEntry, load_transcript

__all__ = [
    "Gateway",
    "ImagePart",
    "LlmRequest",
    "LlmResponse",
    "Message",
    "RecordingBackend",
    "SchemaViolation",
    "ScriptEntry",
    "ScriptMiss",
    "ScriptedBackend",
    "TextPart",
    "ToolCall",
    "ToolSpecDef",
    "TransportError",
    "load_transcript",
    "request_fingerprint",
]
