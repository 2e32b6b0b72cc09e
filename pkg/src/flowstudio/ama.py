"""The ask-me-anything agent: a tool-calling loop over the dataflow graph.

Tools: inspect the graph and node contents (outputs and plots included),
run Python snippets in the context of graph values, and edit the graph
directly. Every edit carries a rationale and is attributable through the
transcript; figures drawn by snippets are attached back into the
conversation so the model can inspect its own plots. The loop always
terminates under a hard iteration cap.
"""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Callable

from .build import GraphHost
from .config import EngineConfig
from .editing import DraftEditor
from .graph import GraphError, slug_map
from .kernel import ExecRequest
from .llm import Gateway, ImagePart, LlmRequest, Message, TextPart, ToolCall, ToolSpecDef
from .repair import graph_doc
from .synthesis import load_prompt

if TYPE_CHECKING:
    from .project import Project


@dataclass
class TurnEvent:
    type: str  # text_delta | tool_started | tool_finished | graph_version_changed | diagnostic | done
    data: dict[str, Any] = field(default_factory=dict)


EventSink = Callable[[TurnEvent], None]


@dataclass
class ChatSession:
    scope: str  # "graph" or a node id
    id: str = field(default_factory=lambda: uuid.uuid4().hex)
    messages: list[Message] = field(default_factory=list)
    graph_versions: list[int] = field(default_factory=list)

    def transcript_json(self) -> list[dict[str, Any]]:
        out = []
        for m in self.messages:
            out.append(
                {
                    "role": m.role,
                    "parts": [
                        {"text": p.text} if isinstance(p, TextPart) else {"image": p.sha256}
                        for p in m.parts
                    ],
                    "tool_calls": [
                        {"name": c.name, "arguments": c.arguments, "id": c.call_id} for c in m.tool_calls
                    ],
                    "tool_call_id": m.tool_call_id,
                }
            )
        return out


TOOLS = (
    ToolSpecDef(
        "inspect_graph",
        "Read the dataflow graph or one node: layers, output type, value summary, figures.",
        {
            "type": "object",
            "properties": {
                "node": {"anyOf": [{"type": "string"}, {"type": "null"}]},
                "rationale": {"type": "string"},
            },
            "additionalProperties": False,
        },
    ),
    ToolSpecDef(
        "run_snippet",
        "Run a Python snippet with node outputs bound by name; returns stdout, the final expression's summary, and any figures drawn.",
        {
            "type": "object",
            "required": ["code"],
            "properties": {
                "code": {"type": "string"},
                "bindings": {"type": "array", "items": {"type": "string"}},
                "rationale": {"type": "string"},
            },
            "additionalProperties": False,
        },
    ),
    ToolSpecDef(
        "edit_graph",
        "Edit the dataflow graph: add/remove nodes and edges, or set a node's title/label/requirements/code. Requires a rationale.",
        {
            "type": "object",
            "required": ["edits", "rationale"],
            "properties": {
                "edits": {"type": "array", "items": {"type": "object"}},
                "rationale": {"type": "string"},
            },
            "additionalProperties": False,
        },
    ),
)


class ToolError(ValueError):
    pass


class ChatAgent:
    """Runs chat turns for whole-graph sessions and node-scoped sessions."""

    def __init__(
        self,
        project: "Project",
        host: GraphHost,
        gateway: Gateway,
        exec_service: Any,
        config: EngineConfig | None = None,
    ):
        self.project = project
        self.host = host
        self.gateway = gateway
        self.exec = exec_service
        self.config = config or EngineConfig()
        self.editor = DraftEditor(host, gateway, exec_service, config)

    def open_session(self, scope: str = "graph") -> ChatSession:
        return ChatSession(scope=scope)

    # -- the turn loop -------------------------------------------------------

    def chat(self, session: ChatSession, user_text: str, on_event: EventSink | None = None) -> str:
        emit = on_event or (lambda event: None)
        step = "ama" if session.scope == "graph" else "node_ama"
        system = load_prompt("ama_system" if step == "ama" else "node_ama_system")
        session.messages.append(Message.text("user", user_text))

        for iteration in range(1, self.config.tool_loop_max_iters + 1):
            request = LlmRequest(
                messages=(Message.text("system", system), *session.messages),
                tools=TOOLS,
                temperature=None,
                tags=(
                    ("attempt", str(iteration)),
                    ("node", "" if session.scope == "graph" else session.scope),
                    ("step", step),
                ),
            )
            response = self.gateway.stream(request, lambda chunk: emit(TurnEvent("text_delta", {"text": chunk})))
            if response.kind == "text":
                session.messages.append(Message.text("assistant", response.text))
                with self.host.write() as graph:
                    session.graph_versions.append(graph.version)
                emit(TurnEvent("done", {"text": response.text}))
                return response.text

            assistant = Message(role="assistant", parts=(), tool_calls=response.tool_calls)
            session.messages.append(assistant)
            for call in response.tool_calls:
                emit(TurnEvent("tool_started", {"name": call.name, "arguments": call.arguments, "id": call.call_id}))
                try:
                    text, images = self._execute(session, call)
                except ToolError as exc:
                    text, images = json.dumps({"error": str(exc)}), ()
                parts: tuple = (TextPart(text),) + tuple(images)
                session.messages.append(Message(role="tool", parts=parts, tool_call_id=call.call_id))
                emit(TurnEvent("tool_finished", {"name": call.name, "id": call.call_id, "result": text}))

        diagnostic = f"stopped after {self.config.tool_loop_max_iters} tool iterations without a final answer"
        session.messages.append(Message.text("assistant", diagnostic))
        with self.host.write() as graph:
            session.graph_versions.append(graph.version)
        emit(TurnEvent("diagnostic", {"message": diagnostic}))
        emit(TurnEvent("done", {"text": diagnostic}))
        return diagnostic

    def node_chat(self, node_id: str, user_text: str, on_event: EventSink | None = None,
                  session: ChatSession | None = None) -> str:
        with self.host.write() as graph:
            graph.node(node_id)  # raises UnknownNode
        session = session or self.open_session(scope=node_id)
        return self.chat(session, user_text, on_event)

    # -- tool execution ---------------------------------------------------------

    def _execute(self, session: ChatSession, call: ToolCall) -> tuple[str, tuple[ImagePart, ...]]:
        if call.name == "inspect_graph":
            return self._inspect(session, call.arguments), ()
        if call.name == "run_snippet":
            return self._snippet(session, call.arguments)
        if call.name == "edit_graph":
            return self._edit(session, call.arguments), ()
        raise ToolError(f"unknown tool {call.name!r}")

    def _visible_nodes(self, session: ChatSession) -> set[str]:
        with self.host.write() as graph:
            if session.scope == "graph":
                return set(graph.nodes)
            return {session.scope} | set(graph.ancestors(session.scope))

    def _inspect(self, session: ChatSession, args: dict[str, Any]) -> str:
        visible = self._visible_nodes(session)
        with self.host.write() as graph:
            node_sel = args.get("node")
            if node_sel:
                nid = self._resolve(graph, node_sel)
                if nid not in visible:
                    raise ToolError(f"node {node_sel} is outside this session's scope")
                node = graph.nodes[nid]
                doc = node.to_json()
                doc["slug"] = slug_map(graph)[nid]
                return json.dumps(doc, sort_keys=True)
            doc = graph_doc(graph)
            doc["nodes"] = [n for n in doc["nodes"] if n["id"] in visible]
            doc["edges"] = [e for e in doc["edges"] if e[0] in visible and e[1] in visible]
            for node_doc in doc["nodes"]:
                node = graph.nodes[node_doc["id"]]
                node_doc["summary"] = node.result_ref.summary if node.result_ref else None
                node_doc["figures"] = list(node.figure_refs)
            return json.dumps(doc, sort_keys=True)

    def _resolve(self, graph, selector: str) -> str:
        if selector in graph.nodes:
            return selector
        slugs = slug_map(graph)
        for nid, slug in slugs.items():
            if slug == selector or graph.nodes[nid].title == selector:
                return nid
        raise ToolError(f"unknown node {selector!r}")

    def _snippet(self, session: ChatSession, args: dict[str, Any]) -> tuple[str, tuple[ImagePart, ...]]:
        code = args.get("code", "")
        visible = self._visible_nodes(session)
        bindings: dict[str, str] = {}
        with self.host.write() as graph:
            slugs = slug_map(graph)
            wanted = args.get("bindings")
            if wanted is None:
                wanted = [slugs[nid] for nid in visible if graph.nodes[nid].result_ref is not None]
            for name in wanted:
                nid = self._resolve(graph, name)
                if nid not in visible:
                    raise ToolError(f"node {name} is outside this session's scope")
                node = graph.nodes[nid]
                if node.result_ref is None:
                    raise ToolError(f"node {name} has no computed value yet; run the graph first")
                bindings[slugs[nid]] = node.result_ref.sha256
        result = self.exec.submit(
            ExecRequest(source=code, mode="snippet", bindings=bindings,
                        capture_figures=True, timeout_s=self.config.exec_timeout_s)
        )
        doc = {
            "status": result.status,
            "stdout": result.stdout,
            "summary": result.result_ref.summary if result.result_ref else None,
            "error": result.error,
            "figures": list(result.figures),
        }
        images = tuple(ImagePart("image/png", ref) for ref in result.figures)
        return json.dumps(doc, sort_keys=True), images

    # -- graph editing -------------------------------------------------------------

    def _edit(self, session: ChatSession, args: dict[str, Any]) -> str:
        edits = args.get("edits", [])
        rationale = (args.get("rationale") or "").strip()
        if not rationale:
            raise ToolError("edit_graph requires a rationale")
        if session.scope == "graph":
            version, affected = self._apply_graph_edits(edits)
        else:
            version, affected = self._apply_node_edits(session.scope, edits)
        return json.dumps(
            {"applied": len(edits), "graph_version": version, "invalidated": sorted(affected),
             "note": "downstream nodes are stale; re-run the graph to refresh results"},
            sort_keys=True,
        )

    def _apply_graph_edits(self, edits: list[dict[str, Any]]) -> tuple[int, set[str]]:
        with self.host.write() as graph:
            # Validate everything before touching the graph: atomic or nothing.
            # Nodes added earlier in the batch may be referenced by title.
            pending: set[str] = set()

            def check_ref(selector: str) -> None:
                if selector in pending:
                    return
                self._resolve(graph, selector)

            for edit in edits:
                op = edit.get("op")
                if op in ("set_layer",):
                    selector = edit.get("node", "")
                    check_ref(selector)
                    if selector not in pending:
                        nid = self._resolve(graph, selector)
                        if graph.nodes[nid].locked:
                            raise ToolError(f"node {graph.nodes[nid].title} is locked")
                    if edit.get("layer") not in ("title", "label", "requirements", "code"):
                        raise ToolError(f"unknown layer {edit.get('layer')!r}")
                elif op in ("remove_node",):
                    selector = edit.get("node", "")
                    check_ref(selector)
                    if selector not in pending:
                        nid = self._resolve(graph, selector)
                        if graph.nodes[nid].locked:
                            raise ToolError(f"node {graph.nodes[nid].title} is locked")
                elif op == "add_edge":
                    check_ref(edit.get("src", ""))
                    check_ref(edit.get("dst", ""))
                    if edit.get("src") not in pending and edit.get("dst") not in pending:
                        src = self._resolve(graph, edit["src"])
                        dst = self._resolve(graph, edit["dst"])
                        if dst == src or src in graph.downstream_closure(dst):
                            raise ToolError("edge would create a cycle")
                elif op == "remove_edge":
                    src = self._resolve(graph, edit.get("src", ""))
                    dst = self._resolve(graph, edit.get("dst", ""))
                    if (src, dst) not in graph.edges:
                        raise ToolError("no such edge")
                elif op == "add_node":
                    if edit.get("kind") not in ("load", "compute", "plot"):
                        raise ToolError(f"unknown node kind {edit.get('kind')!r}")
                    if not edit.get("title"):
                        raise ToolError("add_node requires a title")
                    pending.add(edit["title"])
                else:
                    raise ToolError(f"unknown edit op {op!r}")

            def resolve(selector: str) -> str:
                return self._resolve(graph, selector)

            # Cycles involving batch-added nodes surface only during apply;
            # restore the pre-batch state on any failure so edits stay atomic.
            rollback = graph.to_json()
            try:
                affected, deepest = self._apply_edit_list(graph, edits, resolve)
            except (ToolError, GraphError) as exc:
                restored = type(graph).from_json(rollback)
                graph.nodes = restored.nodes
                graph.edges = restored.edges
                graph.version = restored.version
                raise ToolError(str(exc)) from exc
            for nid, layer in deepest.items():
                if layer == "label":
                    continue
                level = "code" if layer == "code" else "requirements"
                affected |= graph.invalidate(nid, level)
            version = graph.version
        if affected:
            self.host.notify_mutation(affected)
        return version, affected

    def _apply_edit_list(self, graph, edits: list[dict[str, Any]], resolve) -> tuple[set[str], dict[str, str]]:
        affected: set[str] = set()
        deepest: dict[str, str] = {}
        for edit in edits:
            op = edit["op"]
            if op == "add_node":
                nid = graph.add_node(edit["kind"], edit["title"], edit.get("label", ""))
                affected.add(nid)
            elif op == "remove_node":
                nid = resolve(edit["node"])
                affected |= graph.remove_node(nid)
                affected.discard(nid)
            elif op == "add_edge":
                src, dst = resolve(edit["src"]), resolve(edit["dst"])
                graph.add_edge(src, dst)
                affected |= {dst} | graph.downstream_closure(dst)
            elif op == "remove_edge":
                src, dst = resolve(edit["src"]), resolve(edit["dst"])
                graph.remove_edge(src, dst)
                affected |= {dst} | graph.downstream_closure(dst)
            else:  # set_layer
                nid = resolve(edit["node"])
                layer = edit["layer"]
                content = edit.get("content")
                if layer == "requirements" and not isinstance(content, list):
                    raise ToolError("requirements content must be a list of strings")
                graph.set_layers(nid, **{layer: content})
                rank = {"label": 0, "code": 1, "title": 2, "requirements": 2}
                if rank[layer] > rank.get(deepest.get(nid, "label"), 0):
                    deepest[nid] = layer
                elif nid not in deepest:
                    deepest[nid] = layer
        return affected, deepest

    def _apply_node_edits(self, node_id: str, edits: list[dict[str, Any]]) -> tuple[int, set[str]]:
        """Node-scoped edits go through a draft so layer consistency holds."""
        for edit in edits:
            if edit.get("op") != "set_layer":
                raise ToolError("node sessions may only set this node's layers")
            with self.host.write() as graph:
                target = self._resolve(graph, edit.get("node") or node_id)
            if target != node_id:
                raise ToolError("node sessions may only edit their own node")
        draft = self.editor.open(node_id)
        for edit in edits:
            try:
                self.editor.edit_layer(draft, edit["layer"], edit.get("content"))
            except ValueError as exc:
                raise ToolError(str(exc)) from exc
        warnings = self.editor.check_consistency(draft)
        if draft.status != "consistent":
            raise ToolError("edits leave the node inconsistent: " + "; ".join(warnings))
        affected = self.editor.save(draft)
        with self.host.write() as graph:
            version = graph.version
        return version, affected
