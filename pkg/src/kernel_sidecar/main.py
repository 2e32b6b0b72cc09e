"""Kernel sidecar: executes analysis functions and snippets for the engine.

Speaks length-prefixed JSON frames (4-byte big-endian length + UTF-8 JSON)
over stdin/stdout. Request types: exec_request, ping, shutdown. Responses:
exec_result, pong, bye, protocol_error. Values are exchanged through a
shared content-addressed store (``<root>/<hash[:2]>/<hash>``), never inline.

No state persists across requests: each exec runs in a fresh namespace.
"""

from __future__ import annotations

import argparse
import ast
import hashlib
import io
import json
import os
import pickle
import struct
import sys
import traceback
from pathlib import Path
from typing import Any, BinaryIO

from .summarize import summarize

PROTOCOL_VERSION = 1
MAX_FRAME = 64 * 1024 * 1024
OUTPUT_CAP = 256 * 1024


def read_frame(stream: BinaryIO) -> dict[str, Any] | None:
    header = stream.read(4)
    if len(header) < 4:
        return None
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME:
        raise ValueError(f"frame of {length} bytes exceeds protocol maximum")
    payload = b""
    while len(payload) < length:
        chunk = stream.read(length - len(payload))
        if not chunk:
            return None
        payload += chunk
    return json.loads(payload.decode("utf-8"))


def write_frame(stream: BinaryIO, doc: dict[str, Any]) -> None:
    payload = json.dumps(doc, ensure_ascii=False).encode("utf-8")
    stream.write(struct.pack(">I", len(payload)) + payload)
    stream.flush()


class Store:
    """Minimal content-addressed reader/writer matching the shared layout."""

    def __init__(self, root: str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path_for(self, sha: str) -> Path:
        return self.root / sha[:2] / sha

    def put(self, data: bytes) -> str:
        sha = hashlib.sha256(data).hexdigest()
        dest = self.path_for(sha)
        if not dest.exists():
            dest.parent.mkdir(parents=True, exist_ok=True)
            tmp = dest.parent / f".tmp-{os.getpid()}-{sha}"
            tmp.write_bytes(data)
            os.replace(tmp, dest)
        return sha

    def get(self, sha: str) -> bytes:
        return self.path_for(sha).read_bytes()


class _CappedWriter(io.StringIO):
    def __init__(self, cap: int = OUTPUT_CAP):
        super().__init__()
        self.cap = cap
        self.truncated = False

    def write(self, text: str) -> int:
        if self.tell() >= self.cap:
            self.truncated = True
            return len(text)
        room = self.cap - self.tell()
        if len(text) > room:
            self.truncated = True
            text = text[:room]
        return super().write(text)


def _split_trailing_expression(source: str) -> tuple[ast.Module, ast.Expression | None]:
    tree = ast.parse(source)
    if tree.body and isinstance(tree.body[-1], ast.Expr):
        expr = ast.Expression(tree.body.pop().value)
        ast.fix_missing_locations(expr)
        return tree, expr
    return tree, None


def _capture_figures(store: Store) -> list[str]:
    if "matplotlib" not in sys.modules:
        return []
    import matplotlib.pyplot as plt

    refs = []
    for num in plt.get_fignums():
        buf = io.BytesIO()
        # Strip the writer version chunk so identical figures hash identically.
        plt.figure(num).savefig(buf, format="png", metadata={"Software": None})
        refs.append(store.put(buf.getvalue()))
    plt.close("all")
    return refs


class Session:
    """One sidecar process: answers every frame exactly once, serially."""

    def __init__(self, store: Store, frame_out: BinaryIO, frame_in: BinaryIO):
        self.store = store
        self.out = frame_out
        self.inp = frame_in

    def run(self) -> int:
        while True:
            try:
                frame = read_frame(self.inp)
            except (ValueError, json.JSONDecodeError) as exc:
                write_frame(self.out, self._protocol_error(None, str(exc)))
                continue
            if frame is None:
                return 0
            if not isinstance(frame, dict) or "type" not in frame:
                write_frame(self.out, self._protocol_error(None, "frame must be an object with a type"))
                continue
            kind = frame.get("type")
            req_id = frame.get("id")
            if kind == "ping":
                write_frame(self.out, {"v": PROTOCOL_VERSION, "type": "pong", "id": req_id})
            elif kind == "shutdown":
                write_frame(self.out, {"v": PROTOCOL_VERSION, "type": "bye", "id": req_id})
                return 0
            elif kind == "exec_request":
                write_frame(self.out, self.handle_exec(frame))
            else:
                write_frame(self.out, self._protocol_error(req_id, f"unknown frame type {kind!r}"))

    def _protocol_error(self, req_id: Any, message: str) -> dict[str, Any]:
        return {"v": PROTOCOL_VERSION, "type": "protocol_error", "id": req_id, "message": message}

    def handle_exec(self, frame: dict[str, Any]) -> dict[str, Any]:
        req_id = frame.get("id")
        mode = frame.get("mode", "function")
        source = frame.get("source", "")
        result: dict[str, Any] = {
            "v": PROTOCOL_VERSION,
            "type": "exec_result",
            "id": req_id,
            "status": "ok",
            "result": None,
            "stdout": "",
            "stderr": "",
            "stdout_truncated": False,
            "stderr_truncated": False,
            "error": None,
            "figures": [],
        }

        # Syntax problems are reported distinctly from runtime errors.
        try:
            if mode == "snippet":
                tree, trailing = _split_trailing_expression(source)
            else:
                tree, trailing = ast.parse(source), None
        except SyntaxError as exc:
            result["status"] = "syntax_error"
            result["error"] = {
                "type": "SyntaxError",
                "message": f"{exc.msg} (line {exc.lineno})",
                "traceback": "".join(traceback.format_exception_only(exc)),
            }
            return result
        if mode == "parse":
            return result

        try:
            bindings = {
                name: pickle.loads(self.store.get(sha))
                for name, sha in (frame.get("bindings") or {}).items()
            }
        except FileNotFoundError as exc:
            return self._protocol_error(req_id, f"unresolvable value binding: {exc}")

        # Figures are module state, not namespace state: drop leftovers so no
        # request ever observes (or captures) a previous request's plots.
        if "matplotlib" in sys.modules:
            import matplotlib.pyplot as plt

            plt.close("all")

        namespace: dict[str, Any] = {"__name__": "__kernel__", "__builtins__": __builtins__}
        out, err = _CappedWriter(), _CappedWriter()
        old_stdout, old_stderr = sys.stdout, sys.stderr
        sys.stdout, sys.stderr = out, err
        value: Any = None
        try:
            if mode == "function":
                exec(compile(tree, "<node>", "exec"), namespace)
                entrypoint = frame.get("entrypoint")
                fn = namespace.get(entrypoint) if entrypoint else None
                if fn is None:
                    fns = [v for v in namespace.values() if callable(v) and getattr(v, "__module__", "") == "__kernel__"]
                    fn = fns[0] if len(fns) == 1 else None
                if fn is None:
                    raise NameError(f"entrypoint {entrypoint!r} not defined by the submitted source")
                value = fn(**bindings)
            else:
                namespace.update(bindings)
                exec(compile(tree, "<snippet>", "exec"), namespace)
                if trailing is not None:
                    value = eval(compile(trailing, "<snippet>", "eval"), namespace)
        except BaseException as exc:
            result["status"] = "exception"
            result["error"] = {
                "type": type(exc).__name__,
                "message": str(exc),
                "traceback": traceback.format_exc(limit=20),
            }
        finally:
            sys.stdout, sys.stderr = old_stdout, old_stderr

        result["stdout"], result["stdout_truncated"] = out.getvalue(), out.truncated
        result["stderr"], result["stderr_truncated"] = err.getvalue(), err.truncated
        if frame.get("capture_figures", True):
            result["figures"] = _capture_figures(self.store)

        if result["status"] == "ok":
            summary = summarize(value)
            try:
                blob = pickle.dumps(value, protocol=4)
            except Exception:
                blob = pickle.dumps(repr(value), protocol=4)
                summary = {"kind": "opaque", "repr": summary.get("repr", repr(type(value)))}
            result["result"] = {"sha256": self.store.put(blob), "summary": summary}
        return result


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="kernel-sidecar")
    parser.add_argument("--store", required=True, help="content-addressed store root")
    parser.add_argument("--workdir", default=None, help="working directory for dataset access")
    args = parser.parse_args(argv)

    # Frames own the real stdout; stray fd-1 writers are rerouted to stderr
    # so user prints can never corrupt the framing.
    frame_out = os.fdopen(os.dup(1), "wb")
    os.dup2(2, 1)
    os.environ.setdefault("MPLBACKEND", "Agg")
    if args.workdir:
        os.chdir(args.workdir)

    session = Session(Store(args.store), frame_out, sys.stdin.buffer)
    return session.run()


if __name__ == "__main__":
    sys.exit(main())
