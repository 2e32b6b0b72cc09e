"""The dataflow DAG: nodes, edges, phases, staleness, and structural queries.

Every dependency is an explicit edge; evaluation order derives from the
graph, and a node is recomputed only when its inputs or implementation
change. All mutations bump the graph version.
"""

from __future__ import annotations

import re
import secrets
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable

from .extypes import ExtendedType, parse_extended_type
from .store import ValueRef


class GraphError(ValueError):
    pass


class CycleError(GraphError):
    pass


class UnknownNode(GraphError, KeyError):
    pass


class NodeKind(str, Enum):
    LOAD = "load"
    COMPUTE = "compute"
    PLOT = "plot"


class Phase(Enum):
    DIRTY = 0
    REQUIREMENTS_READY = 1
    CODE_READY = 2
    EVALUATED = 3
    FAILED = 4


# Build stages a node can fail in, recorded alongside Phase.FAILED.
@dataclass(frozen=True)
class Failure:
    stage: str  # requirements | code | evaluation | check | test
    message: str

    def to_json(self) -> dict[str, str]:
        return {"stage": self.stage, "message": self.message}


def new_node_id() -> str:
    """Random 128-bit token; stable for the node's lifetime, never reused."""
    return secrets.token_hex(16)


@dataclass
class Node:
    """One analysis step: three abstraction layers plus build state.

    The layers are the summary label, the prose requirements, and the
    code; a locked node's layers are never mutated by automatic
    propagation.
    """

    id: str
    kind: NodeKind
    title: str
    label: str
    requirements: list[str] = field(default_factory=list)
    output_type: ExtendedType | None = None
    code: str | None = None
    phase: Phase = Phase.DIRTY
    failure: Failure | None = None
    locked: bool = False
    result_ref: ValueRef | None = None
    figure_refs: list[str] = field(default_factory=list)
    precondition_issues: list[str] = field(default_factory=list)
    repair_attempts: int = 0
    # Bumped on any layer mutation; build steps stamp it to detect races.
    rev: int = 0

    def layers(self) -> tuple[str, str, str]:
        """(label, requirements, code) as comparable text."""
        return (self.label, "\n".join(self.requirements), self.code or "")

    def to_json(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "title": self.title,
            "label": self.label,
            "requirements": list(self.requirements),
            "output_type": self.output_type.to_canonical() if self.output_type else None,
            "code": self.code,
            "phase": self.phase.name,
            "failure": self.failure.to_json() if self.failure else None,
            "locked": self.locked,
            "result": self.result_ref.to_json() if self.result_ref else None,
            "figures": list(self.figure_refs),
            "precondition_issues": list(self.precondition_issues),
            "repair_attempts": self.repair_attempts,
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "Node":
        node = cls(
            id=doc["id"],
            kind=NodeKind(doc["kind"]),
            title=doc["title"],
            label=doc["label"],
            requirements=list(doc.get("requirements", [])),
            output_type=parse_extended_type(doc["output_type"]) if doc.get("output_type") else None,
            code=doc.get("code"),
            phase=Phase[doc.get("phase", "DIRTY")],
            locked=bool(doc.get("locked", False)),
            figure_refs=list(doc.get("figures", [])),
            precondition_issues=list(doc.get("precondition_issues", [])),
            repair_attempts=int(doc.get("repair_attempts", 0)),
        )
        if doc.get("failure"):
            node.failure = Failure(doc["failure"]["stage"], doc["failure"]["message"])
        if doc.get("result"):
            node.result_ref = ValueRef.from_json(doc["result"])
        return node


@dataclass
class DataflowGraph:
    """A DAG of analysis steps. Nodes keep creation order; edges are a set.

    Invariants: no cycles, no self-edges, every edge endpoint exists, and
    the version strictly increases across mutations.
    """

    title: str = "untitled"
    nodes: dict[str, Node] = field(default_factory=dict)
    edges: set[tuple[str, str]] = field(default_factory=set)
    version: int = 0

    # -- structural queries -------------------------------------------------

    def node(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def creation_index(self, node_id: str) -> int:
        for i, nid in enumerate(self.nodes):
            if nid == node_id:
                return i
        raise UnknownNode(node_id)

    def _adjacency(self) -> tuple[dict[str, list[str]], dict[str, list[str]]]:
        # Adjacency is derived from the edge set and cached per version so
        # structural queries stay near-linear on large graphs.
        cached = getattr(self, "_adj_cache", None)
        key = (self.version, len(self.nodes), len(self.edges))
        if cached and cached[0] == key:
            return cached[1], cached[2]
        order = {nid: i for i, nid in enumerate(self.nodes)}
        parents: dict[str, list[str]] = {nid: [] for nid in self.nodes}
        children: dict[str, list[str]] = {nid: [] for nid in self.nodes}
        for src, dst in self.edges:
            children[src].append(dst)
            parents[dst].append(src)
        for nid in self.nodes:
            parents[nid].sort(key=order.__getitem__)
            children[nid].sort(key=order.__getitem__)
        self._adj_cache = (key, parents, children)
        return parents, children

    def parents(self, node_id: str) -> list[str]:
        self.node(node_id)
        return list(self._adjacency()[0][node_id])

    def children(self, node_id: str) -> list[str]:
        self.node(node_id)
        return list(self._adjacency()[1][node_id])

    def topo_order(self) -> list[str]:
        """Linear extension of the edge relation; ties broken by creation order."""
        order = {nid: i for i, nid in enumerate(self.nodes)}
        _, children = self._adjacency()
        indeg = {nid: 0 for nid in self.nodes}
        for _, dst in self.edges:
            indeg[dst] += 1
        import heapq

        ready = [order[nid] for nid, d in indeg.items() if d == 0]
        heapq.heapify(ready)
        by_index = list(self.nodes)
        out: list[str] = []
        while ready:
            nid = by_index[heapq.heappop(ready)]
            out.append(nid)
            for child in children[nid]:
                indeg[child] -= 1
                if indeg[child] == 0:
                    heapq.heappush(ready, order[child])
        assert len(out) == len(self.nodes), "cycle slipped past the DAG invariant"
        return out

    def downstream_closure(self, node_id: str) -> set[str]:
        """Nodes reachable from node_id via one or more edges, excluding it."""
        self.node(node_id)
        _, children = self._adjacency()
        seen: set[str] = set()
        queue = deque(children[node_id])
        while queue:
            nid = queue.popleft()
            if nid in seen:
                continue
            seen.add(nid)
            queue.extend(children[nid])
        seen.discard(node_id)
        return seen

    def ancestors(self, node_id: str) -> list[str]:
        """All transitive predecessors, in creation order."""
        self.node(node_id)
        parents, _ = self._adjacency()
        seen: set[str] = set()
        queue = deque(parents[node_id])
        while queue:
            nid = queue.popleft()
            if nid in seen:
                continue
            seen.add(nid)
            queue.extend(parents[nid])
        order = {nid: i for i, nid in enumerate(self.nodes)}
        return sorted(seen, key=order.__getitem__)

    def _would_cycle(self, src: str, dst: str) -> bool:
        if src == dst:
            return True
        return src in self.downstream_closure(dst)

    # -- mutations ------------------------------------------------------------

    def _bump(self) -> None:
        self.version += 1

    def add_node(
        self,
        kind: NodeKind | str,
        title: str,
        label: str,
        node_id: str | None = None,
    ) -> str:
        if not title:
            raise GraphError("node title must be non-empty")
        nid = node_id or new_node_id()
        if nid in self.nodes:
            raise GraphError(f"node id {nid} already exists")
        self.nodes[nid] = Node(id=nid, kind=NodeKind(kind), title=title, label=label)
        self._bump()
        return nid

    def remove_node(self, node_id: str) -> set[str]:
        self.node(node_id)
        affected = self.downstream_closure(node_id)
        self.edges = {(s, d) for s, d in self.edges if s != node_id and d != node_id}
        del self.nodes[node_id]
        for nid in affected:
            self._reset_dirty(self.nodes[nid])
        self._bump()
        return affected

    def add_edge(self, src: str, dst: str) -> None:
        self.node(src)
        self.node(dst)
        if self._would_cycle(src, dst):
            raise CycleError(f"edge {src}->{dst} would create a cycle")
        if (src, dst) in self.edges:
            return
        self.edges.add((src, dst))
        for nid in {dst} | self.downstream_closure(dst):
            self._reset_dirty(self.nodes[nid])
        self._bump()

    def remove_edge(self, src: str, dst: str) -> None:
        if (src, dst) not in self.edges:
            raise UnknownNode(f"no edge {src}->{dst}")
        self.edges.discard((src, dst))
        # The former child loses an input: same staleness as gaining one.
        for nid in {dst} | self.downstream_closure(dst):
            self._reset_dirty(self.nodes[nid])
        self._bump()

    def _reset_dirty(self, node: Node) -> None:
        node.phase = Phase.DIRTY
        node.failure = None
        node.result_ref = None
        node.figure_refs = []
        # Stale code is discarded so the build contract (code present only
        # from CodeReady up) holds; locked nodes keep all layers verbatim.
        if not node.locked:
            node.code = None
        node.repair_attempts = 0
        node.rev += 1

    def invalidate(self, node_id: str, layer: str = "requirements") -> set[str]:
        """Mark a node and its downstream closure stale after an edit.

        Structure/requirements changes dirty the node itself; code-only
        changes keep its requirements contract and only force re-evaluation.
        Returns the affected set (node included).
        """
        node = self.node(node_id)
        if layer not in ("structure", "requirements", "code"):
            raise GraphError(f"unknown layer {layer!r}")
        affected = {node_id} | self.downstream_closure(node_id)
        if layer == "code":
            node.phase = Phase.CODE_READY if node.code else Phase.DIRTY
            node.failure = None
            node.result_ref = None
            node.figure_refs = []
            node.repair_attempts = 0
            node.rev += 1
        else:
            self._reset_dirty(node)
        for nid in affected - {node_id}:
            self._reset_dirty(self.nodes[nid])
        self._bump()
        return affected

    def set_layers(
        self,
        node_id: str,
        *,
        title: str | None = None,
        label: str | None = None,
        requirements: list[str] | None = None,
        output_type: ExtendedType | None = None,
        code: str | None = None,
    ) -> None:
        """Write node layers without phase bookkeeping (callers invalidate)."""
        node = self.node(node_id)
        if title is not None:
            node.title = title
        if label is not None:
            node.label = label
        if requirements is not None:
            node.requirements = list(requirements)
        if output_type is not None:
            node.output_type = output_type
        if code is not None:
            node.code = code
        node.rev += 1
        self._bump()

    def set_locked(self, node_id: str, locked: bool) -> None:
        self.node(node_id).locked = locked
        self._bump()

    # -- serialization ---------------------------------------------------------

    def to_json(self) -> dict[str, Any]:
        return {
            "title": self.title,
            "version": self.version,
            "nodes": [self.nodes[nid].to_json() for nid in self.nodes],
            "edges": sorted([list(e) for e in self.edges]),
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "DataflowGraph":
        g = cls(title=doc.get("title", "untitled"))
        for node_doc in doc.get("nodes", []):
            node = Node.from_json(node_doc)
            g.nodes[node.id] = node
        for src, dst in doc.get("edges", []):
            if src not in g.nodes or dst not in g.nodes:
                raise UnknownNode(f"edge endpoint missing: {src}->{dst}")
        g.edges = {(src, dst) for src, dst in doc.get("edges", [])}
        g.version = int(doc.get("version", 0))
        return g

    def snapshot(self) -> "DataflowGraph":
        """Immutable-by-convention copy for concurrent readers."""
        g = DataflowGraph(title=self.title, version=self.version)
        g.nodes = {
            nid: replace(n, requirements=list(n.requirements), figure_refs=list(n.figure_refs),
                         precondition_issues=list(n.precondition_issues))
            for nid, n in self.nodes.items()
        }
        g.edges = set(self.edges)
        return g


def slugify(text: str) -> str:
    """Lowercase identifier derived from a title: words joined by underscores."""
    slug = re.sub(r"[^0-9a-zA-Z]+", "_", text.strip().lower()).strip("_")
    if not slug:
        slug = "node"
    if slug[0].isdigit():
        slug = "n_" + slug
    return slug


def slug_map(graph: DataflowGraph) -> dict[str, str]:
    """Deterministic node-id to identifier map; collisions get numeric suffixes."""
    slugs: dict[str, str] = {}
    seen: dict[str, int] = {}
    for nid, node in graph.nodes.items():
        base = slugify(node.title)
        count = seen.get(base, 0) + 1
        seen[base] = count
        slugs[nid] = base if count == 1 else f"{base}_{count}"
    return slugs


def is_linear_extension(order: Iterable[str], edges: set[tuple[str, str]]) -> bool:
    """Independent pairwise edge check used as the scheduling oracle."""
    pos = {nid: i for i, nid in enumerate(order)}
    return all(pos[s] < pos[d] for s, d in edges if s in pos and d in pos)
