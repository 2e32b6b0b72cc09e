"""HTTP service: project CRUD, graph mutations, builds as jobs, drafts,
checks/tests, chat with an event stream, and artifact fetch.

All state changes are versioned; mutations carry the expected graph version
and stale writes get 409 so the UI can refresh optimistically.
"""

from __future__ import annotations

import json
import queue
import threading
import uuid
from pathlib import Path
from typing import Any

from fastapi import Body, FastAPI, HTTPException
from fastapi.responses import JSONResponse, Response, StreamingResponse

from .ama import ChatAgent, TurnEvent
from .build import Builder, GraphHost
from .checks import ValidationEngine
from .config import EngineConfig, load_llm_config
from .editing import DraftEditor, LockedNodeError, NodeDraft, SaveBlocked, VersionConflict
from .graph import CycleError, GraphError, UnknownNode, slug_map
from .kernel import KernelPool
from .llm import Gateway, ScriptedBackend, ScriptMiss
from .llm.live import LiveBackend
from .notebook import ExportBlocked, export_notebook
from .project import PROJECT_SUFFIX, Project, canonical_dumps, load_project, save_project
from .repair import InvalidProposal, GlobalRepairProposal, ProposedEdit, apply_global_repair, propose_global_repair
from .store import MissingValue, ValueStore


class ProjectRuntime:
    """Engine wiring for one open project; one writer, many readers."""

    def __init__(self, pid: str, project: Project, path: Path, gateway: Gateway,
                 pool: KernelPool, config: EngineConfig):
        self.id = pid
        self.project = project
        self.path = path
        self.config = config
        self.gateway = gateway
        self.pool = pool
        self.host = GraphHost(project.graph)
        self.builder = Builder(self.host, gateway, pool, config)
        self.validation = ValidationEngine(project, gateway, pool, config)
        self.editor = DraftEditor(self.host, gateway, pool, config)
        self.agent = ChatAgent(project, self.host, gateway, pool, config)
        self.drafts: dict[str, NodeDraft] = {}
        self.sessions: dict[str, Any] = {}
        self.repair_history: list[dict[str, Any]] = []
        self.last_report: dict[str, Any] | None = None
        self._subscribers: list[queue.Queue] = []
        self.host.add_mutation_listener(self._on_mutation)

    def _on_mutation(self, affected: set[str]) -> None:
        with self.host.write() as graph:
            version = graph.version
        self.emit({"type": "graph_version_changed", "version": version, "affected": sorted(affected)})

    def emit(self, event: dict[str, Any]) -> None:
        for q in list(self._subscribers):
            q.put(event)

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        if q in self._subscribers:
            self._subscribers.remove(q)

    def save(self) -> None:
        save_project(self.project, self.path)

    def doc(self) -> dict[str, Any]:
        doc = self.project.to_json()
        doc["id"] = self.id
        doc["slugs"] = slug_map(self.project.graph)
        return doc


class Jobs:
    def __init__(self):
        self._jobs: dict[str, dict[str, Any]] = {}
        self._lock = threading.Lock()

    def submit(self, fn, on_done=None) -> str:
        job_id = uuid.uuid4().hex
        with self._lock:
            self._jobs[job_id] = {"status": "running", "result": None, "error": None}

        def work():
            try:
                result = fn()
                with self._lock:
                    self._jobs[job_id].update(status="done", result=result)
            except Exception as exc:
                with self._lock:
                    self._jobs[job_id].update(status="error", error=f"{type(exc).__name__}: {exc}")
            if on_done:
                on_done(job_id)

        threading.Thread(target=work, daemon=True).start()
        return job_id

    def get(self, job_id: str) -> dict[str, Any]:
        with self._lock:
            if job_id not in self._jobs:
                raise KeyError(job_id)
            return dict(self._jobs[job_id])


def create_app(workdir: str | Path = ".", llm: str = "live", pool_size: int = 4,
               config: EngineConfig | None = None, frontend_dir: str | Path | None = None) -> FastAPI:
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    config = config or EngineConfig(pool_size=pool_size)
    store = ValueStore(workdir / ".store")
    pool = KernelPool(store.root, size=config.pool_size, workdir=workdir,
                      default_timeout_s=config.exec_timeout_s)

    def make_gateway() -> Gateway:
        if llm.startswith("scripted:"):
            backend = ScriptedBackend.from_file(llm.split(":", 1)[1])
        else:
            cfg = load_llm_config()
            backend = LiveBackend(cfg.endpoint or "http://unconfigured.invalid", cfg.model,
                                  cfg.api_key or None, store=store)
        return Gateway(backend, concurrency=config.llm_concurrency, rate_per_s=config.llm_rate_per_s)

    from contextlib import asynccontextmanager

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        pool.start()
        try:
            yield
        finally:
            pool.close()

    app = FastAPI(title="flowstudio", lifespan=lifespan)
    projects: dict[str, ProjectRuntime] = {}
    jobs = Jobs()

    app.state.store = store
    app.state.pool = pool
    app.state.projects = projects

    def runtime(pid: str) -> ProjectRuntime:
        if pid not in projects:
            raise HTTPException(404, f"unknown project {pid}")
        return projects[pid]

    def check_version(rt: ProjectRuntime, expected: int | None) -> None:
        if expected is None:
            return
        with rt.host.write() as graph:
            if graph.version != expected:
                raise HTTPException(409, f"stale version {expected}; graph is at {graph.version}")

    def register(project: Project, path: Path) -> ProjectRuntime:
        pid = uuid.uuid4().hex[:12]
        rt = ProjectRuntime(pid, project, path, make_gateway(), pool, config)
        projects[pid] = rt
        return rt

    # -- projects ------------------------------------------------------------

    @app.post("/api/projects")
    def create_project(payload: dict = Body(default={})):
        title = payload.get("title", "untitled")
        from .graph import DataflowGraph

        project = Project(graph=DataflowGraph(title=title))
        path = workdir / f"{title.replace(' ', '-')}-{uuid.uuid4().hex[:6]}{PROJECT_SUFFIX}"
        rt = register(project, path)
        rt.save()
        return {"project_id": rt.id, "version": project.graph.version}

    @app.post("/api/projects/import")
    def import_project(payload: dict = Body(...)):
        path = Path(payload["path"])
        if not path.is_absolute():
            path = workdir / path
        if not path.is_file():
            raise HTTPException(404, f"no project file at {path}")
        project, warnings = load_project(path)
        rt = register(project, path)
        return {"project_id": rt.id, "version": project.graph.version, "warnings": warnings}

    @app.get("/api/projects")
    def list_projects():
        return [
            {"project_id": rt.id, "title": rt.project.graph.title, "version": rt.project.graph.version}
            for rt in projects.values()
        ]

    @app.get("/api/projects/{pid}")
    def get_project(pid: str):
        return runtime(pid).doc()

    @app.delete("/api/projects/{pid}")
    def close_project(pid: str):
        runtime(pid)
        del projects[pid]
        return {"closed": pid}

    # -- graph mutations ------------------------------------------------------

    @app.post("/api/projects/{pid}/nodes")
    def add_node(pid: str, payload: dict = Body(...)):
        rt = runtime(pid)
        check_version(rt, payload.get("version"))
        try:
            with rt.host.write() as graph:
                nid = graph.add_node(payload["kind"], payload["title"], payload.get("label", ""))
                version = graph.version
        except (GraphError, ValueError) as exc:
            raise HTTPException(422, str(exc))
        rt.host.notify_mutation({nid})
        rt.save()
        return {"node_id": nid, "version": version}

    @app.delete("/api/projects/{pid}/nodes/{nid}")
    def remove_node(pid: str, nid: str, version: int | None = None):
        rt = runtime(pid)
        check_version(rt, version)
        try:
            with rt.host.write() as graph:
                affected = graph.remove_node(nid)
                new_version = graph.version
        except UnknownNode as exc:
            raise HTTPException(404, str(exc))
        rt.host.notify_mutation(affected)
        rt.save()
        return {"version": new_version, "invalidated": sorted(affected)}

    @app.post("/api/projects/{pid}/edges")
    def add_edge(pid: str, payload: dict = Body(...)):
        rt = runtime(pid)
        check_version(rt, payload.get("version"))
        try:
            with rt.host.write() as graph:
                graph.add_edge(payload["src"], payload["dst"])
                version = graph.version
        except CycleError as exc:
            raise HTTPException(422, str(exc))
        except UnknownNode as exc:
            raise HTTPException(404, str(exc))
        rt.host.notify_mutation({payload["dst"]})
        rt.save()
        return {"version": version}

    @app.delete("/api/projects/{pid}/edges")
    def remove_edge(pid: str, src: str, dst: str, version: int | None = None):
        rt = runtime(pid)
        check_version(rt, version)
        try:
            with rt.host.write() as graph:
                graph.remove_edge(src, dst)
                new_version = graph.version
        except UnknownNode as exc:
            raise HTTPException(404, str(exc))
        rt.host.notify_mutation({dst})
        rt.save()
        return {"version": new_version}

    @app.post("/api/projects/{pid}/nodes/{nid}/lock")
    def set_lock(pid: str, nid: str, payload: dict = Body(...)):
        rt = runtime(pid)
        try:
            with rt.host.write() as graph:
                graph.set_locked(nid, bool(payload.get("locked", True)))
                version = graph.version
        except UnknownNode as exc:
            raise HTTPException(404, str(exc))
        rt.save()
        return {"version": version}

    # -- builds and validation --------------------------------------------------

    @app.post("/api/projects/{pid}/run")
    def run_build(pid: str, payload: dict = Body(default={})):
        rt = runtime(pid)
        targets = set(payload["targets"]) if payload.get("targets") else None
        # Optional multi-modal input: a canvas snapshot previously uploaded
        # as an artifact rides along into the synthesis prompts.
        rt.builder.graph_image = payload.get("canvas_image") or None

        def work():
            report = rt.builder.build(targets)
            rt.last_report = report.to_json()
            rt.repair_history.extend(r.to_json() for r in report.repair_log)
            rt.save()
            return rt.last_report

        job_id = jobs.submit(work, on_done=lambda job: rt.emit({"type": "job_finished", "job": job}))
        return {"job_id": job_id}

    @app.get("/api/jobs/{job_id}")
    def job_status(job_id: str):
        try:
            return jobs.get(job_id)
        except KeyError:
            raise HTTPException(404, f"unknown job {job_id}")

    @app.get("/api/projects/{pid}/report")
    def last_report(pid: str):
        return runtime(pid).last_report or {}

    @app.get("/api/projects/{pid}/repairs")
    def repair_history(pid: str):
        return runtime(pid).repair_history

    @app.post("/api/projects/{pid}/checks/{nid}")
    def add_check(pid: str, nid: str, payload: dict = Body(...)):
        rt = runtime(pid)
        try:
            spec = rt.validation.add_check(nid, payload["text"], payload.get("kind"))
        except KeyError:
            raise HTTPException(404, f"unknown node {nid}")
        rt.save()
        return spec.to_json()

    @app.post("/api/projects/{pid}/tests/{nid}")
    def add_test(pid: str, nid: str, payload: dict = Body(...)):
        rt = runtime(pid)
        try:
            spec = rt.validation.add_test(nid, payload["text"])
        except KeyError:
            raise HTTPException(404, f"unknown node {nid}")
        rt.save()
        return spec.to_json()

    @app.delete("/api/projects/{pid}/checks/{nid}/{check_id}")
    def remove_check(pid: str, nid: str, check_id: str):
        rt = runtime(pid)
        specs = rt.project.checks.get(nid, [])
        rt.project.checks[nid] = [c for c in specs if c.id != check_id]
        rt.save()
        return {"removed": check_id}

    @app.get("/api/projects/{pid}/checks/{nid}/suggest")
    def suggest_checks(pid: str, nid: str):
        rt = runtime(pid)
        try:
            return {"suggestions": rt.validation.suggest_checks(nid)}
        except (ValueError, ScriptMiss) as exc:
            raise HTTPException(422, str(exc))

    @app.get("/api/projects/{pid}/tests/{nid}/suggest")
    def suggest_tests(pid: str, nid: str):
        rt = runtime(pid)
        try:
            return {"suggestions": rt.validation.suggest_tests(nid)}
        except (ValueError, ScriptMiss) as exc:
            raise HTTPException(422, str(exc))

    @app.post("/api/projects/{pid}/checks:run")
    def run_checks(pid: str, payload: dict = Body(default={})):
        rt = runtime(pid)
        nodes = payload.get("nodes")

        def work():
            results = rt.validation.run_checks(nodes)
            rt.save()
            return [
                {"node": spec.node_id, "check_id": spec.id, "text": spec.text, **outcome.to_json()}
                for spec, outcome in results
            ]

        job_id = jobs.submit(work, on_done=lambda job: rt.emit({"type": "job_finished", "job": job}))
        return {"job_id": job_id}

    @app.post("/api/projects/{pid}/tests:run")
    def run_tests(pid: str, payload: dict = Body(default={})):
        rt = runtime(pid)
        nodes = payload.get("nodes")

        def work():
            results = rt.validation.run_tests(nodes)
            rt.save()
            return [
                {"node": spec.node_id, "test_id": spec.id, "text": spec.text, **outcome.to_json()}
                for spec, outcome in results
            ]

        job_id = jobs.submit(work, on_done=lambda job: rt.emit({"type": "job_finished", "job": job}))
        return {"job_id": job_id}

    @app.post("/api/projects/{pid}/nodes/{nid}/fix")
    def fix_node(pid: str, nid: str):
        rt = runtime(pid)

        def work():
            try:
                outcome = rt.validation.fix_failures(nid, rt.builder)
            except PermissionError as exc:
                return {"fixed": False, "error": str(exc)}
            rt.save()
            return outcome

        job_id = jobs.submit(work, on_done=lambda job: rt.emit({"type": "job_finished", "job": job}))
        return {"job_id": job_id}

    # -- global repair --------------------------------------------------------------

    @app.post("/api/projects/{pid}/nodes/{nid}/global-repair")
    def global_repair(pid: str, nid: str):
        rt = runtime(pid)
        with rt.host.write() as graph:
            node = graph.node(nid)
            diagnostics = node.failure.to_json() if node.failure else {}
            snapshot = graph.snapshot()
        proposal = propose_global_repair(rt.gateway, snapshot, nid, diagnostics)
        return proposal.to_json()

    @app.post("/api/projects/{pid}/nodes/{nid}/global-repair/apply")
    def apply_repair(pid: str, nid: str, payload: dict = Body(...)):
        rt = runtime(pid)
        proposal = GlobalRepairProposal(
            edits=[ProposedEdit(e["node"], e["layer"], e["content"]) for e in payload.get("edits", [])],
            rationale=payload.get("rationale", ""),
        )
        try:
            with rt.host.write() as graph:
                affected = apply_global_repair(graph, proposal)
        except InvalidProposal as exc:
            raise HTTPException(422, str(exc))
        rt.host.notify_mutation(affected)
        rt.save()
        return {"invalidated": sorted(affected), "version": rt.project.graph.version}

    # -- drafts -------------------------------------------------------------------

    def draft_for(rt: ProjectRuntime, nid: str, reset: bool = False) -> NodeDraft:
        if reset or nid not in rt.drafts:
            try:
                rt.drafts[nid] = rt.editor.open(nid)
            except UnknownNode as exc:
                raise HTTPException(404, str(exc))
        return rt.drafts[nid]

    @app.get("/api/projects/{pid}/nodes/{nid}/draft")
    def get_draft(pid: str, nid: str, reset: bool = False):
        return draft_for(runtime(pid), nid, reset=reset).to_json()

    @app.post("/api/projects/{pid}/nodes/{nid}/draft/edit")
    def edit_draft(pid: str, nid: str, payload: dict = Body(...)):
        rt = runtime(pid)
        draft = draft_for(rt, nid)
        try:
            rt.editor.edit_layer(draft, payload["layer"], payload["content"])
        except ValueError as exc:
            raise HTTPException(422, str(exc))
        return draft.to_json()

    @app.post("/api/projects/{pid}/nodes/{nid}/draft/propagate")
    def propagate_draft(pid: str, nid: str, payload: dict = Body(...)):
        rt = runtime(pid)
        draft = draft_for(rt, nid)
        try:
            rt.editor.propagate(draft, payload["from_layer"])
        except LockedNodeError as exc:
            raise HTTPException(423, str(exc))
        return draft.to_json()

    @app.post("/api/projects/{pid}/nodes/{nid}/draft/check")
    def check_draft(pid: str, nid: str):
        rt = runtime(pid)
        draft = draft_for(rt, nid)
        warnings = rt.editor.check_consistency(draft)
        return {"status": draft.status, "warnings": warnings}

    @app.post("/api/projects/{pid}/nodes/{nid}/draft/regenerate")
    def regenerate_draft(pid: str, nid: str):
        rt = runtime(pid)
        draft = draft_for(rt, nid)
        try:
            rt.editor.regenerate(draft)
        except LockedNodeError as exc:
            raise HTTPException(423, str(exc))
        return draft.to_json()

    @app.post("/api/projects/{pid}/nodes/{nid}/draft/save")
    def save_draft(pid: str, nid: str):
        rt = runtime(pid)
        draft = draft_for(rt, nid)
        try:
            affected = rt.editor.save(draft)
        except SaveBlocked as exc:
            raise HTTPException(409, str(exc))
        except VersionConflict as exc:
            raise HTTPException(409, str(exc))
        rt.drafts.pop(nid, None)
        rt.save()
        return {"invalidated": sorted(affected), "version": rt.project.graph.version}

    # -- chat ------------------------------------------------------------------------

    @app.post("/api/projects/{pid}/chat")
    def chat(pid: str, payload: dict = Body(...)):
        rt = runtime(pid)
        scope = payload.get("scope", "graph")
        session_id = payload.get("session_id")
        if session_id and session_id in rt.sessions:
            session = rt.sessions[session_id]
        else:
            session = rt.agent.open_session(scope)
            rt.sessions[session.id] = session
        message = payload["message"]

        events: queue.Queue = queue.Queue()

        def on_event(event: TurnEvent) -> None:
            events.put(event)

        def work():
            try:
                rt.agent.chat(session, message, on_event)
            except Exception as exc:
                events.put(TurnEvent("error", {"message": f"{type(exc).__name__}: {exc}"}))
            finally:
                rt.save()
                events.put(None)

        threading.Thread(target=work, daemon=True).start()

        def sse():
            yield f"event: session\ndata: {json.dumps({'session_id': session.id})}\n\n"
            while True:
                event = events.get()
                if event is None:
                    break
                yield f"event: {event.type}\ndata: {json.dumps(event.data)}\n\n"

        return StreamingResponse(sse(), media_type="text/event-stream")

    # -- events, artifacts, export ------------------------------------------------------

    @app.get("/api/projects/{pid}/events")
    def events_stream(pid: str, max_events: int | None = None, heartbeat_s: float = 15.0,
                      timeout_s: float | None = None):
        """Server-sent events. Browsers hold it open; bounded consumers may
        cap delivery with max_events/timeout_s."""
        import time as _time

        rt = runtime(pid)
        q = rt.subscribe()

        def sse():
            delivered = 0
            deadline = _time.monotonic() + timeout_s if timeout_s else None
            try:
                with rt.host.write() as graph:
                    yield f"event: hello\ndata: {json.dumps({'version': graph.version})}\n\n"
                while max_events is None or delivered < max_events:
                    wait = heartbeat_s
                    if deadline is not None:
                        wait = min(wait, deadline - _time.monotonic())
                        if wait <= 0:
                            break
                    try:
                        event = q.get(timeout=wait)
                    except queue.Empty:
                        if deadline is not None and _time.monotonic() >= deadline:
                            break
                        yield "event: heartbeat\ndata: {}\n\n"
                        continue
                    delivered += 1
                    yield f"event: {event['type']}\ndata: {json.dumps(event)}\n\n"
            finally:
                rt.unsubscribe(q)

        return StreamingResponse(sse(), media_type="text/event-stream")

    @app.get("/api/artifacts/{sha}")
    def get_artifact(sha: str):
        try:
            data = store.get_bytes(sha)
        except MissingValue:
            raise HTTPException(404, f"no artifact {sha}")
        media = "image/png" if data[:8] == b"\x89PNG\r\n\x1a\n" else "application/octet-stream"
        return Response(content=data, media_type=media)

    @app.post("/api/artifacts")
    async def put_artifact(payload: bytes = Body(...)):
        ref = store.put_bytes(payload)
        return {"sha256": ref.sha256}

    @app.get("/api/values/{sha}/summary")
    def value_summary(sha: str):
        for rt in projects.values():
            for node in rt.project.graph.nodes.values():
                if node.result_ref and node.result_ref.sha256 == sha:
                    return JSONResponse(node.result_ref.summary)
        raise HTTPException(404, f"no value summary for {sha}")

    @app.post("/api/projects/{pid}/export-notebook")
    def export_nb(pid: str):
        rt = runtime(pid)
        try:
            doc = export_notebook(rt.project)
        except ExportBlocked as exc:
            raise HTTPException(409, str(exc))
        out = rt.path.with_suffix(".ipynb")
        out.write_text(canonical_dumps(doc))
        return {"path": str(out), "cells": len(doc["cells"])}

    # -- static frontend --------------------------------------------------------------

    if frontend_dir and Path(frontend_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="ui")

    return app
