"""The per-node, per-layer build pipeline and its parallel scheduler.

Steps per node: requirements -> code -> evaluation. A node's requirements
step waits on all ancestors' requirements steps; its code step waits only
on its own requirements; its evaluation waits on its own code and its
parents' evaluations, so code generation pipelines ahead of upstream
evaluation. Failures never block independent branches. Mutations during a
build discard affected in-flight commits and trigger a re-planning round.
"""

from __future__ import annotations

import itertools
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator

from .config import EngineConfig
from .extypes import validate_summary
from .graph import DataflowGraph, Failure, Node, Phase, slug_map
from .kernel import ExecRequest
from .llm import Gateway, SchemaViolation, ScriptMiss, TransportError
from .repair import RepairAttempt, classify_failure, repair_local
from .synthesis import (
    ancestor_contracts,
    check_locked_consistency,
    gen_code,
    gen_requirements_prepared,
    subgraph_doc,
)

GATEWAY_ERRORS = (TransportError, SchemaViolation, ScriptMiss)

REQUIREMENTS = "requirements"
CODE = "code"
EVALUATION = "evaluation"
LOCKED_CHECK = "locked_check"


class GraphHost:
    """Single writer for one graph; all mutations serialize through the lock."""

    def __init__(self, graph: DataflowGraph):
        self.graph = graph
        self.lock = threading.RLock()
        self._mutation_listeners: list[Callable[[set[str]], None]] = []

    @contextmanager
    def write(self) -> Iterator[DataflowGraph]:
        with self.lock:
            yield self.graph

    def snapshot(self) -> DataflowGraph:
        with self.lock:
            return self.graph.snapshot()

    def add_mutation_listener(self, fn: Callable[[set[str]], None]) -> None:
        self._mutation_listeners.append(fn)

    def remove_mutation_listener(self, fn: Callable[[set[str]], None]) -> None:
        if fn in self._mutation_listeners:
            self._mutation_listeners.remove(fn)

    def notify_mutation(self, affected: set[str]) -> None:
        for fn in list(self._mutation_listeners):
            fn(affected)


@dataclass
class StepRecord:
    node_id: str
    kind: str
    status: str  # ok | failed | skipped | discarded
    started: float = 0.0
    finished: float = 0.0
    seq_start: int = -1
    seq_end: int = -1
    round: int = 0
    message: str = ""

    def to_json(self) -> dict[str, Any]:
        return {
            "node": self.node_id,
            "kind": self.kind,
            "status": self.status,
            "started": self.started,
            "finished": self.finished,
            "message": self.message,
        }


@dataclass
class NodeOutcome:
    node_id: str
    phase: str
    failure: dict[str, str] | None = None
    warnings: list[str] = field(default_factory=list)
    repair_attempts: int = 0
    global_repair_offered: bool = False
    skipped_reason: str = ""

    def to_json(self) -> dict[str, Any]:
        return {
            "node": self.node_id,
            "phase": self.phase,
            "failure": self.failure,
            "warnings": self.warnings,
            "repair_attempts": self.repair_attempts,
            "global_repair_offered": self.global_repair_offered,
            "skipped_reason": self.skipped_reason,
        }


@dataclass
class BuildReport:
    steps: list[StepRecord] = field(default_factory=list)
    nodes: dict[str, NodeOutcome] = field(default_factory=dict)
    repair_log: list[RepairAttempt] = field(default_factory=list)
    wall_time_s: float = 0.0

    @property
    def ok(self) -> bool:
        return all(o.phase == "EVALUATED" for o in self.nodes.values())

    def executed_nodes(self) -> set[str]:
        return {s.node_id for s in self.steps if s.status in ("ok", "failed")}

    def executed_steps(self, kind: str | None = None) -> list[StepRecord]:
        return [s for s in self.steps if s.status in ("ok", "failed") and (kind is None or s.kind == kind)]

    def to_json(self) -> dict[str, Any]:
        return {
            "ok": self.ok,
            "wall_time_s": self.wall_time_s,
            "steps": [s.to_json() for s in self.steps],
            "nodes": {nid: o.to_json() for nid, o in self.nodes.items()},
            "repairs": [r.to_json() for r in self.repair_log],
        }


@dataclass
class _Step:
    node_id: str
    kind: str
    deps: set[tuple[str, str]]
    state: str = "waiting"  # waiting | running | done | failed | skipped | discarded
    record: StepRecord | None = None


class Builder:
    """Schedules synthesis/evaluation steps with maximal parallelism."""

    def __init__(
        self,
        host: GraphHost,
        gateway: Gateway,
        exec_service: Any,
        config: EngineConfig | None = None,
        graph_image: str | None = None,
        executor: ThreadPoolExecutor | None = None,
    ):
        self.host = host
        self.gateway = gateway
        self.exec = exec_service
        self.config = config or EngineConfig()
        self.graph_image = graph_image
        self._shared_executor = executor
        self._seq = itertools.count()
        self._seq_lock = threading.Lock()
        self._repairs: list[RepairAttempt] = []

    def _next_seq(self) -> int:
        with self._seq_lock:
            return next(self._seq)

    # -- planning -------------------------------------------------------------

    def _universe(self, graph: DataflowGraph, targets: set[str] | None) -> set[str]:
        ids = set(graph.nodes) if targets is None else set(targets)
        for nid in list(ids):
            if nid not in graph.nodes:
                raise KeyError(nid)
            for aid in graph.ancestors(nid):
                if graph.nodes[aid].phase is not Phase.EVALUATED:
                    ids.add(aid)
        return ids

    def _steps_for(self, node: Node) -> list[str]:
        if node.phase is Phase.EVALUATED:
            return []
        if node.phase is Phase.FAILED:
            return []  # stays failed until the user edits it or upstream changes
        if node.locked:
            steps = []
            if node.phase is Phase.DIRTY:
                steps.append(LOCKED_CHECK)
            return steps + [EVALUATION]
        if node.phase is Phase.DIRTY:
            return [REQUIREMENTS, CODE, EVALUATION]
        if node.phase is Phase.REQUIREMENTS_READY:
            return [CODE, EVALUATION]
        return [EVALUATION]  # CODE_READY: pending evaluation only

    def _plan(
        self, graph: DataflowGraph, universe: set[str]
    ) -> tuple[dict[tuple[str, str], _Step], dict[str, str]]:
        steps: dict[tuple[str, str], _Step] = {}
        kinds: dict[str, list[str]] = {}
        for nid in universe:
            kinds[nid] = self._steps_for(graph.nodes[nid])
            for kind in kinds[nid]:
                steps[(nid, kind)] = _Step(node_id=nid, kind=kind, deps=set())

        # Nodes below an unevaluatable ancestor can never run: skip, don't fail.
        doomed: dict[str, str] = {}
        for nid in graph.topo_order():
            if nid not in universe:
                continue
            for pid in graph.parents(nid):
                if pid in doomed:
                    doomed[nid] = doomed[pid]
                    break
                parent = graph.nodes[pid]
                if parent.phase is not Phase.EVALUATED and not kinds.get(pid):
                    doomed[nid] = pid
                    break
        for nid in doomed:
            for kind in kinds.get(nid, []):
                steps.pop((nid, kind), None)
            kinds[nid] = []
        for nid in universe:
            own = kinds.get(nid, [])
            first_synth = REQUIREMENTS if REQUIREMENTS in own else (LOCKED_CHECK if LOCKED_CHECK in own else None)
            if first_synth:
                # Upstream contracts must be published before this node's
                # requirements are (re)synthesized or consistency-checked.
                for aid in graph.ancestors(nid):
                    for upstream_kind in (REQUIREMENTS, LOCKED_CHECK):
                        if (aid, upstream_kind) in steps:
                            steps[(nid, first_synth)].deps.add((aid, upstream_kind))
            if CODE in own:
                if first_synth:
                    steps[(nid, CODE)].deps.add((nid, first_synth))
            if EVALUATION in own:
                if CODE in own:
                    steps[(nid, EVALUATION)].deps.add((nid, CODE))
                elif first_synth:
                    steps[(nid, EVALUATION)].deps.add((nid, first_synth))
                for pid in graph.parents(nid):
                    if (pid, EVALUATION) in steps:
                        steps[(nid, EVALUATION)].deps.add((pid, EVALUATION))
        return steps, doomed

    # -- execution ---------------------------------------------------------------

    def build(self, targets: set[str] | None = None) -> BuildReport:
        t0 = time.time()
        report = BuildReport()
        replan = threading.Event()

        def on_mutation(affected: set[str]) -> None:
            replan.set()

        self.host.add_mutation_listener(on_mutation)
        try:
            rounds = 0
            while True:
                with self.host.write() as graph:
                    universe = self._universe(graph, targets)
                    plan, doomed = self._plan(graph, universe)
                for nid, blocker in doomed.items():
                    outcome = report.nodes.setdefault(nid, NodeOutcome(node_id=nid, phase=""))
                    outcome.skipped_reason = f"upstream failure at {blocker}"
                if not plan:
                    break
                replan.clear()
                self._run_round(plan, report, rounds)
                rounds += 1
                if not replan.is_set() or rounds >= 16:
                    break
        finally:
            self.host.remove_mutation_listener(on_mutation)

        with self.host.write() as graph:
            if targets is None:
                universe = set(graph.nodes)
            else:
                universe = self._universe(graph, {t for t in targets if t in graph.nodes})
            for nid in universe:
                node = graph.nodes[nid]
                outcome = report.nodes.setdefault(nid, NodeOutcome(node_id=nid, phase=node.phase.name))
                outcome.phase = node.phase.name
                outcome.failure = node.failure.to_json() if node.failure else None
                outcome.repair_attempts = node.repair_attempts
                if node.failure and node.repair_attempts >= self.config.max_repairs:
                    outcome.global_repair_offered = True
                for record in report.steps:
                    if record.node_id == nid and record.message and record.status == "ok":
                        outcome.warnings.append(f"{record.kind}: {record.message}")
        report.repair_log = list(self._repairs)
        report.wall_time_s = time.time() - t0
        return report

    def _run_round(self, plan: dict[tuple[str, str], _Step], report: BuildReport, round_no: int) -> None:
        lock = threading.Lock()
        done = threading.Event()
        remaining = len(plan)
        dependents: dict[tuple[str, str], list[tuple[str, str]]] = {}
        for key, step in plan.items():
            for dep in step.deps:
                dependents.setdefault(dep, []).append(key)

        runners = {
            REQUIREMENTS: self._run_requirements,
            CODE: self._run_code,
            EVALUATION: self._run_evaluation,
            LOCKED_CHECK: self._run_locked_check,
        }

        executor = self._shared_executor or ThreadPoolExecutor(max_workers=self.config.build_workers)

        def submit(key: tuple[str, str]) -> None:
            plan[key].state = "running"
            executor.submit(run, key)

        def finish(key: tuple[str, str], status: str, record: StepRecord | None) -> None:
            nonlocal remaining
            to_submit: list[tuple[str, str]] = []
            with lock:
                step = plan[key]
                if step.state in ("done", "failed", "skipped", "discarded"):
                    return  # at most once per build per node
                step.state = {"ok": "done"}.get(status, status)
                if record:
                    report.steps.append(record)
                remaining -= 1
                if status == "ok":
                    for dep_key in dependents.get(key, []):
                        dep = plan[dep_key]
                        dep.deps.discard(key)
                        if not dep.deps and dep.state == "waiting":
                            to_submit.append(dep_key)
                else:
                    # Failure/race: remaining steps of this node and all
                    # downstream steps are skipped; independent branches go on.
                    skipped = self._skip_closure(plan, key[0], dependents, report, round_no)
                    remaining -= skipped
                if remaining == 0:
                    done.set()
            for dep_key in to_submit:
                submit(dep_key)

        def run(key: tuple[str, str]) -> None:
            node_id, kind = key
            record = StepRecord(node_id=node_id, kind=kind, status="ok", round=round_no)
            record.started = time.time()
            record.seq_start = self._next_seq()
            try:
                status, message = runners[kind](node_id)
            except Exception as exc:  # defensive: a step bug must not hang the build
                status, message = "failed", f"{type(exc).__name__}: {exc}"
                self._commit_failure(node_id, kind, message)
            record.seq_end = self._next_seq()
            record.finished = time.time()
            record.status = {"ok": "ok"}.get(status, status)
            record.message = message
            finish(key, status, record)

        with lock:
            initial = [key for key, step in plan.items() if not step.deps]
        for key in initial:
            submit(key)
        if plan:
            done.wait()
        if executor is not self._shared_executor:
            executor.shutdown(wait=True)

    def _skip_closure(
        self,
        plan: dict[tuple[str, str], _Step],
        node_id: str,
        dependents: dict[tuple[str, str], list[tuple[str, str]]],
        report: BuildReport,
        round_no: int,
    ) -> int:
        """Mark unstarted steps of node_id and everything downstream skipped."""
        with self.host.write() as graph:
            closure = graph.downstream_closure(node_id) if node_id in graph.nodes else set()
        skipped = 0
        for key, step in plan.items():
            if key[0] == node_id or key[0] in closure:
                if step.state == "waiting":
                    step.state = "skipped"
                    skipped += 1
                    report.steps.append(
                        StepRecord(node_id=key[0], kind=key[1], status="skipped", round=round_no,
                                   message=f"upstream of {key[0]} failed" if key[0] != node_id else "earlier step failed")
                    )
                    if key[0] != node_id:
                        outcome = report.nodes.setdefault(key[0], NodeOutcome(node_id=key[0], phase=""))
                        outcome.skipped_reason = f"upstream failure at {node_id}"
        return skipped

    # -- step runners -----------------------------------------------------------

    def _commit_failure(self, node_id: str, stage: str, message: str) -> None:
        with self.host.write() as graph:
            if node_id not in graph.nodes:
                return
            node = graph.nodes[node_id]
            node.phase = Phase.FAILED
            node.failure = Failure(stage=stage, message=message)
            graph.version += 1

    def _node_copy(self, node: Node) -> Node:
        from dataclasses import replace

        return replace(node, requirements=list(node.requirements), figure_refs=list(node.figure_refs),
                       precondition_issues=list(node.precondition_issues))

    def _run_requirements(self, node_id: str) -> tuple[str, str]:
        with self.host.write() as graph:
            node = graph.nodes.get(node_id)
            if node is None:
                return "discarded", "node removed"
            rev = node.rev
            node_copy = self._node_copy(node)
            contracts = ancestor_contracts(graph, node_id)
            doc = subgraph_doc(graph, node_id)
        try:
            result = gen_requirements_prepared(
                self.gateway, node_copy, contracts, doc,
                graph_image=self.graph_image, temperature=self.config.temperature,
            )
        except GATEWAY_ERRORS as exc:
            self._commit_failure(node_id, "requirements", f"{type(exc).__name__}: {exc}")
            return "failed", str(exc)
        with self.host.write() as graph:
            node = graph.nodes.get(node_id)
            if node is None or node.rev != rev:
                return "discarded", "node changed during step"
            node.requirements = result.requirements
            node.output_type = result.output_type
            node.precondition_issues = result.precondition_issues
            node.phase = Phase.REQUIREMENTS_READY
            node.rev += 1
            graph.version += 1
        message = "; ".join(result.precondition_issues)
        return "ok", message

    def _run_locked_check(self, node_id: str) -> tuple[str, str]:
        with self.host.write() as graph:
            node = graph.nodes.get(node_id)
            if node is None:
                return "discarded", "node removed"
            rev = node.rev
            if not node.requirements or not node.code:
                self._commit_failure(node_id, "requirements", "locked node is missing requirements or code")
                return "failed", "locked node is missing requirements or code"
            node_copy = self._node_copy(node)
            contracts = ancestor_contracts(graph, node_id)
        warnings: list[str] = []
        if self.config.check_locked_consistency:
            try:
                warnings = check_locked_consistency(self.gateway, node_copy, contracts)
            except GATEWAY_ERRORS as exc:
                # A locked node is never blocked by its advisory check.
                warnings = [f"consistency check unavailable: {exc}"]
        with self.host.write() as graph:
            node = graph.nodes.get(node_id)
            if node is None or node.rev != rev:
                return "discarded", "node changed during step"
            node.phase = Phase.CODE_READY
            graph.version += 1
        return "ok", "; ".join(warnings)

    def _run_code(self, node_id: str) -> tuple[str, str]:
        with self.host.write() as graph:
            node = graph.nodes.get(node_id)
            if node is None:
                return "discarded", "node removed"
            rev = node.rev
            snap_node = self._node_copy(node)
            fn_name = slug_map(graph)[node_id]
            ancestors = ancestor_contracts(graph, node_id)
            attempts = node.repair_attempts
        try:
            code = gen_code(self.gateway, snap_node, fn_name, ancestors, temperature=self.config.temperature)
        except GATEWAY_ERRORS as exc:
            self._commit_failure(node_id, "code", f"{type(exc).__name__}: {exc}")
            return "failed", str(exc)

        new_requirements: list[str] | None = None
        initial_attempts = attempts
        while True:
            parse = self.exec.parse(code)
            if parse.status == "ok":
                if attempts > initial_attempts:
                    self._mark_last_repair_fixed(node_id)
                break
            trigger = classify_failure(parse)
            error_msg = (parse.error or {}).get("message", parse.status)
            if attempts >= self.config.max_repairs:
                self._commit_repairs(node_id, attempts)
                self._commit_failure(node_id, "code", f"syntax still broken after {attempts} repair attempts: {error_msg}")
                return "failed", error_msg
            attempts += 1
            try:
                code, new_requirements = self._repair(node_id, snap_node, trigger, {
                    "error": parse.error, "code": code,
                }, attempts, current_requirements=new_requirements)
            except GATEWAY_ERRORS as exc:
                self._commit_repairs(node_id, attempts)
                self._commit_failure(node_id, "code", f"repair failed: {exc}")
                return "failed", str(exc)

        with self.host.write() as graph:
            node = graph.nodes.get(node_id)
            if node is None or node.rev != rev:
                return "discarded", "node changed during step"
            node.code = code
            if new_requirements:
                node.requirements = new_requirements
            node.repair_attempts = attempts
            node.phase = Phase.CODE_READY
            node.rev += 1
            graph.version += 1
        return "ok", ""

    def _run_evaluation(self, node_id: str) -> tuple[str, str]:
        with self.host.write() as graph:
            node = graph.nodes.get(node_id)
            if node is None:
                return "discarded", "node removed"
            rev = node.rev
            snap_node = self._node_copy(node)
            slugs = slug_map(graph)
            attempts = node.repair_attempts
            ancestor_ids = graph.ancestors(node_id)
            bindings: dict[str, str] = {}
            input_summaries: dict[str, Any] = {}
            for aid in ancestor_ids:
                ancestor = graph.nodes[aid]
                if ancestor.result_ref is None:
                    self._commit_failure(node_id, "evaluation", f"ancestor {ancestor.title} has no value")
                    return "failed", f"ancestor {ancestor.title} has no value"
                bindings[slugs[aid]] = ancestor.result_ref.sha256
                input_summaries[slugs[aid]] = ancestor.result_ref.summary
        code = snap_node.code or ""
        requirements: list[str] | None = None

        initial_attempts = attempts
        while True:
            result = self.exec.submit(
                ExecRequest(
                    source=code,
                    mode="function",
                    entrypoint=slugs[node_id],
                    bindings=bindings,
                    capture_figures=True,
                    timeout_s=self.config.exec_timeout_s,
                )
            )
            diagnostics: dict[str, Any]
            if result.ok:
                summary = result.result_ref.summary if result.result_ref else None
                validation = validate_summary(summary, snap_node.output_type or _none_type(), figures=result.figures)
                if validation.ok:
                    if attempts > initial_attempts:
                        self._mark_last_repair_fixed(node_id)
                    break
                trigger = classify_failure(validation)
                diagnostics = {
                    "validation": validation.to_json(),
                    "output_summary": summary,
                    "code": code,
                }
                message = "; ".join(validation.errors)
            else:
                trigger = classify_failure(result)
                diagnostics = {
                    "error": result.error,
                    "stdout": result.stdout[-2000:],
                    "stderr": result.stderr[-2000:],
                    "code": code,
                    "input_summaries": input_summaries,
                }
                message = (result.error or {}).get("message", result.status)

            if snap_node.locked:
                self._commit_repairs(node_id, attempts)
                self._commit_failure(node_id, "evaluation", f"locked node failed: {message}")
                return "failed", message
            if attempts >= self.config.max_repairs:
                self._commit_repairs(node_id, attempts)
                self._commit_failure(
                    node_id, "evaluation", f"still failing after {attempts} repair attempts: {message}"
                )
                return "failed", message
            attempts += 1
            try:
                code, new_reqs = self._repair(node_id, snap_node, trigger, diagnostics, attempts,
                                              current_requirements=requirements)
                if new_reqs:
                    requirements = new_reqs
            except GATEWAY_ERRORS as exc:
                self._commit_repairs(node_id, attempts)
                self._commit_failure(node_id, "evaluation", f"repair failed: {exc}")
                return "failed", str(exc)

        with self.host.write() as graph:
            node = graph.nodes.get(node_id)
            if node is None or node.rev != rev:
                return "discarded", "node changed during step"
            node.code = code
            if requirements:
                node.requirements = requirements
            node.result_ref = result.result_ref
            node.figure_refs = list(result.figures)
            node.repair_attempts = attempts
            node.phase = Phase.EVALUATED
            node.failure = None
            node.rev += 1
            graph.version += 1
        return "ok", ""

    # -- repair integration -------------------------------------------------------

    def _repair(
        self,
        node_id: str,
        node: Node,
        trigger: str,
        diagnostics: dict[str, Any],
        attempt: int,
        current_requirements: list[str] | None = None,
    ) -> tuple[str, list[str] | None]:
        node_doc = {
            "id": node.id,
            "title": node.title,
            "label": node.label,
            "requirements": current_requirements or list(node.requirements),
            "output_type": node.output_type.to_canonical() if node.output_type else None,
        }
        code, requirements = repair_local(self.gateway, node_doc, trigger, diagnostics, attempt)
        with self._seq_lock:
            self._repairs.append(
                RepairAttempt(node_id=node_id, trigger=trigger, attempt=attempt, diagnostics=diagnostics)
            )
        return code, requirements

    def _mark_last_repair_fixed(self, node_id: str) -> None:
        with self._seq_lock:
            for attempt in reversed(self._repairs):
                if attempt.node_id == node_id:
                    attempt.outcome = "fixed"
                    break

    def _commit_repairs(self, node_id: str, attempts: int) -> None:
        with self.host.write() as graph:
            node = graph.nodes.get(node_id)
            if node is not None:
                node.repair_attempts = attempts


def _none_type():
    from .extypes import ExtendedType

    return ExtendedType.none()
