"""Kernel pool orchestration and the execution wire-protocol client.

Kernels are sidecar subprocesses speaking length-prefixed JSON frames
(4-byte big-endian length + UTF-8 JSON) over their standard streams.
Each request is stateless: the kernel defines the function, binds inputs
from the content-addressed store, calls it, stores the return value, and
wipes its namespace. Timeouts kill and replace the kernel.
"""

from __future__ import annotations

import json
import os
import queue
import struct
import subprocess
import sys
import threading
import time
import uuid
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .store import ValueRef

PROTOCOL_VERSION = 1
STARTUP_TIMEOUT_S = 60.0


class KernelSpawnError(RuntimeError):
    pass


@dataclass
class ExecRequest:
    """One stateless execution: source + input bindings by store hash."""

    source: str
    mode: str = "function"  # function | snippet | parse
    entrypoint: str | None = None
    bindings: dict[str, str] = field(default_factory=dict)
    capture_figures: bool = True
    timeout_s: float | None = None
    request_id: str = field(default_factory=lambda: uuid.uuid4().hex)

    def to_frame(self) -> dict[str, Any]:
        return {
            "v": PROTOCOL_VERSION,
            "type": "exec_request",
            "id": self.request_id,
            "mode": self.mode,
            "source": self.source,
            "entrypoint": self.entrypoint,
            "bindings": self.bindings,
            "capture_figures": self.capture_figures,
        }


@dataclass
class ExecResult:
    status: str  # ok | exception | syntax_error | timeout | crashed | protocol_error
    result_ref: ValueRef | None = None
    stdout: str = ""
    stderr: str = ""
    stdout_truncated: bool = False
    stderr_truncated: bool = False
    error: dict[str, str] | None = None
    figures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @classmethod
    def from_frame(cls, frame: dict[str, Any]) -> "ExecResult":
        if frame.get("type") == "protocol_error":
            return cls(status="protocol_error", error={"type": "ProtocolError", "message": frame.get("message", ""), "traceback": ""})
        ref = None
        if frame.get("result") and frame["result"].get("sha256"):
            ref = ValueRef(sha256=frame["result"]["sha256"], summary=frame["result"].get("summary"))
        return cls(
            status=frame.get("status", "crashed"),
            result_ref=ref,
            stdout=frame.get("stdout", ""),
            stderr=frame.get("stderr", ""),
            stdout_truncated=bool(frame.get("stdout_truncated")),
            stderr_truncated=bool(frame.get("stderr_truncated")),
            error=frame.get("error"),
            figures=list(frame.get("figures", [])),
        )


def default_sidecar_argv(store_root: str | Path, workdir: str | Path | None) -> list[str]:
    argv = [sys.executable, "-m", "kernel_sidecar", "--store", str(store_root)]
    if workdir:
        argv += ["--workdir", str(workdir)]
    return argv


class KernelProcess:
    """Handle to one sidecar subprocess; a busy kernel serves one request."""

    _counter = 0

    def __init__(self, argv: list[str]):
        KernelProcess._counter += 1
        self.kernel_id = f"k{KernelProcess._counter}"
        self.spawned_at = time.time()
        self.state = "idle"
        self._stderr_tail: deque[bytes] = deque(maxlen=64)
        self.proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
        )
        self._frames: queue.Queue[dict[str, Any] | None] = queue.Queue()
        threading.Thread(target=self._read_loop, daemon=True).start()
        threading.Thread(target=self._drain_stderr, daemon=True).start()

    def _read_loop(self) -> None:
        stream = self.proc.stdout
        try:
            while True:
                header = stream.read(4)
                if len(header) < 4:
                    break
                (length,) = struct.unpack(">I", header)
                payload = b""
                while len(payload) < length:
                    chunk = stream.read(length - len(payload))
                    if not chunk:
                        return
                    payload += chunk
                self._frames.put(json.loads(payload.decode("utf-8")))
        except Exception:
            pass
        finally:
            self._frames.put(None)  # EOF sentinel

    def _drain_stderr(self) -> None:
        try:
            for line in self.proc.stderr:
                self._stderr_tail.append(line)
        except Exception:
            pass

    def stderr_tail(self) -> str:
        return b"".join(self._stderr_tail).decode("utf-8", "replace")

    def alive(self) -> bool:
        return self.proc.poll() is None

    def send(self, frame: dict[str, Any]) -> None:
        payload = json.dumps(frame).encode("utf-8")
        self.proc.stdin.write(struct.pack(">I", len(payload)) + payload)
        self.proc.stdin.flush()

    def recv(self, timeout: float | None) -> dict[str, Any] | None:
        try:
            return self._frames.get(timeout=timeout)
        except queue.Empty:
            raise TimeoutError

    def kill(self) -> None:
        self.state = "dead"
        try:
            self.proc.kill()
            self.proc.wait(timeout=10)
        except Exception:
            pass

    def shutdown(self) -> None:
        try:
            self.send({"v": PROTOCOL_VERSION, "type": "shutdown"})
            self.proc.wait(timeout=5)
        except Exception:
            self.kill()
        self.state = "dead"


class KernelPool:
    """Fixed-size pool of kernels with FIFO queueing and crash replacement."""

    def __init__(
        self,
        store_root: str | Path,
        size: int = 4,
        workdir: str | Path | None = None,
        default_timeout_s: float = 60.0,
        argv: list[str] | None = None,
    ):
        if size < 1:
            raise ValueError("pool size must be >= 1")
        self.argv = argv or default_sidecar_argv(store_root, workdir)
        self.default_timeout_s = default_timeout_s
        self._target = size
        self._lock = threading.Lock()
        self._idle: deque[KernelProcess] = deque()
        self._busy: set[KernelProcess] = set()
        self._waiters: deque[threading.Event] = deque()
        self._closed = False
        self.replacements = 0

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        with self._lock:
            need = self._target - len(self._idle) - len(self._busy)
        for _ in range(need):
            kernel = self._spawn()
            with self._lock:
                self._idle.append(kernel)
            self._wake_one()

    def close(self) -> None:
        with self._lock:
            self._closed = True
            kernels = list(self._idle) + list(self._busy)
            self._idle.clear()
            waiters = list(self._waiters)
            self._waiters.clear()
        for event in waiters:
            event.set()
        for kernel in kernels:
            kernel.shutdown()

    def __enter__(self) -> "KernelPool":
        self.start()
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()

    def _spawn(self) -> KernelProcess:
        kernel = KernelProcess(self.argv)
        probe = {"v": PROTOCOL_VERSION, "type": "ping", "id": "startup"}
        try:
            kernel.send(probe)
            reply = kernel.recv(timeout=STARTUP_TIMEOUT_S)
        except (TimeoutError, OSError):
            reply = None
        if not reply or reply.get("type") != "pong":
            tail = kernel.stderr_tail()
            kernel.kill()
            raise KernelSpawnError(f"kernel failed to start ({self.argv}): {tail.strip() or 'no diagnostics'}")
        return kernel

    # -- sizing --------------------------------------------------------------

    def resize(self, n: int) -> None:
        """Converge the pool to n kernels; in-flight requests are unaffected."""
        if n < 1:
            raise ValueError("pool size must be >= 1")
        to_retire: list[KernelProcess] = []
        grow = 0
        with self._lock:
            self._target = n
            while len(self._idle) + len(self._busy) > n and self._idle:
                to_retire.append(self._idle.pop())
            grow = n - (len(self._idle) + len(self._busy)) - len(to_retire)
        for kernel in to_retire:
            kernel.shutdown()
        for _ in range(max(0, grow)):
            kernel = self._spawn()
            with self._lock:
                self._idle.append(kernel)
            self._wake_one()

    @property
    def size(self) -> int:
        with self._lock:
            return len(self._idle) + len(self._busy)

    # -- execution -------------------------------------------------------------

    def _wake_one(self) -> None:
        with self._lock:
            if self._waiters and self._idle:
                self._waiters.popleft().set()

    def _acquire(self) -> KernelProcess:
        while True:
            event = None
            with self._lock:
                if self._closed:
                    raise RuntimeError("pool is closed")
                if self._idle:
                    kernel = self._idle.popleft()
                    kernel.state = "busy"
                    self._busy.add(kernel)
                    return kernel
                event = threading.Event()
                self._waiters.append(event)
            event.wait()

    def _release(self, kernel: KernelProcess, replace: bool) -> None:
        replacement: KernelProcess | None = None
        if replace:
            kernel.kill()
            self.replacements += 1
            with self._lock:
                closed, over = self._closed, len(self._idle) + len(self._busy) - 1 >= self._target
            if not closed and not over:
                try:
                    replacement = self._spawn()
                except KernelSpawnError:
                    replacement = None
        with self._lock:
            self._busy.discard(kernel)
            if replace:
                if replacement is not None:
                    self._idle.append(replacement)
            elif len(self._idle) + len(self._busy) >= self._target:
                kernel.shutdown()
            else:
                kernel.state = "idle"
                self._idle.append(kernel)
        self._wake_one()

    def submit(self, req: ExecRequest) -> ExecResult:
        """Run one request on some idle kernel, queuing FIFO when all are busy."""
        kernel = self._acquire()
        timeout = req.timeout_s if req.timeout_s is not None else self.default_timeout_s
        try:
            kernel.send(req.to_frame())
        except OSError:
            self._release(kernel, replace=True)
            return ExecResult(status="crashed", error={"type": "KernelGone", "message": "kernel pipe closed", "traceback": ""})
        try:
            while True:
                frame = kernel.recv(timeout=timeout)
                if frame is None:
                    self._release(kernel, replace=True)
                    return ExecResult(
                        status="crashed",
                        error={"type": "KernelCrashed", "message": kernel.stderr_tail().strip(), "traceback": ""},
                    )
                if frame.get("id") == req.request_id or frame.get("type") == "protocol_error":
                    self._release(kernel, replace=False)
                    return ExecResult.from_frame(frame)
        except TimeoutError:
            self._release(kernel, replace=True)
            return ExecResult(
                status="timeout",
                error={"type": "Timeout", "message": f"no result within {timeout}s; kernel replaced", "traceback": ""},
            )

    def parse(self, source: str) -> ExecResult:
        """Syntax-check source via the kernel parse service."""
        return self.submit(ExecRequest(source=source, mode="parse", capture_figures=False))


class LocalExecService:
    """In-process stand-in for the pool used by fast tests.

    Parses for real; function/snippet execution returns canned summaries
    keyed by nothing in particular, optionally after an injected delay.
    """

    def __init__(self, summary: dict[str, Any] | None = None, delay_s: float = 0.0):
        self.summary = summary if summary is not None else {"kind": "none"}
        self.delay_s = delay_s
        self.calls: list[ExecRequest] = []
        self._lock = threading.Lock()

    def submit(self, req: ExecRequest) -> ExecResult:
        import ast

        with self._lock:
            self.calls.append(req)
        try:
            ast.parse(req.source)
        except SyntaxError as exc:
            return ExecResult(status="syntax_error", error={"type": "SyntaxError", "message": str(exc), "traceback": ""})
        if req.mode == "parse":
            return ExecResult(status="ok")
        if self.delay_s:
            time.sleep(self.delay_s)
        blob_id = "0" * 64
        summary = dict(self.summary)
        figures = ["f" * 64] if req.capture_figures else []
        return ExecResult(status="ok", result_ref=ValueRef(sha256=blob_id, summary=summary), figures=figures)

    def parse(self, source: str) -> ExecResult:
        return self.submit(ExecRequest(source=source, mode="parse", capture_figures=False))
