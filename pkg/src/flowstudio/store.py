"""Content-addressed store for kernel values and image artifacts.

The engine treats stored values as opaque bytes plus a summary; kernels
serialize and deserialize them. Layout (shared with the kernel sidecar):
``<root>/<hash[:2]>/<hash>`` where hash is hex sha256 of the content.
"""

from __future__ import annotations

import hashlib
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, BinaryIO, Iterator

CHUNK = 1 << 20


class MissingValue(KeyError):
    pass


class HashMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ValueRef:
    """Reference to an immutable stored value: content hash plus summary cache."""

    sha256: str
    summary: dict[str, Any] | None = None

    def to_json(self) -> dict[str, Any]:
        return {"sha256": self.sha256, "summary": self.summary}

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "ValueRef":
        return cls(sha256=doc["sha256"], summary=doc.get("summary"))


class ValueStore:
    """Filesystem-backed content-addressed store; puts are idempotent."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path_for(self, sha256: str) -> Path:
        return self.root / sha256[:2] / sha256

    def has(self, sha256: str) -> bool:
        return self.path_for(sha256).is_file()

    def put_bytes(self, data: bytes, summary: dict[str, Any] | None = None) -> ValueRef:
        sha = hashlib.sha256(data).hexdigest()
        self._write(sha, [data])
        return ValueRef(sha256=sha, summary=summary)

    def put_stream(self, stream: BinaryIO, summary: dict[str, Any] | None = None) -> ValueRef:
        """Store from a readable binary stream without holding it in memory."""
        hasher = hashlib.sha256()
        self.root.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".incoming-")
        try:
            with os.fdopen(fd, "wb") as out:
                while True:
                    chunk = stream.read(CHUNK)
                    if not chunk:
                        break
                    hasher.update(chunk)
                    out.write(chunk)
            sha = hasher.hexdigest()
            dest = self.path_for(sha)
            dest.parent.mkdir(parents=True, exist_ok=True)
            if dest.exists():
                os.unlink(tmp)
            else:
                os.replace(tmp, dest)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return ValueRef(sha256=sha, summary=summary)

    def get_bytes(self, sha256: str) -> bytes:
        return b"".join(self.iter_bytes(sha256))

    def iter_bytes(self, sha256: str) -> Iterator[bytes]:
        """Stream a value's bytes, verifying the content hash at the end."""
        path = self.path_for(sha256)
        if not path.is_file():
            raise MissingValue(sha256)
        hasher = hashlib.sha256()
        with open(path, "rb") as f:
            while True:
                chunk = f.read(CHUNK)
                if not chunk:
                    break
                hasher.update(chunk)
                yield chunk
        if hasher.hexdigest() != sha256:
            raise HashMismatch(f"stored content for {sha256} is corrupted")

    def _write(self, sha256: str, chunks: list[bytes]) -> None:
        dest = self.path_for(sha256)
        if dest.exists():
            return
        dest.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=dest.parent, prefix=".incoming-")
        with os.fdopen(fd, "wb") as out:
            for chunk in chunks:
                out.write(chunk)
        os.replace(tmp, dest)
