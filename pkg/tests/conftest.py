"""Shared fixtures: the beaks scenario graph, oracles, and scripted backends."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import pytest

from flowstudio.build import Builder, GraphHost
from flowstudio.checks import ValidationEngine
from flowstudio.config import EngineConfig
from flowstudio.extypes import ColumnSpec, ExtendedType
from flowstudio.graph import DataflowGraph
from flowstudio.kernel import KernelPool
from flowstudio.llm import Gateway, ScriptedBackend, ScriptEntry, load_transcript
from flowstudio.project import Project, load_project
from flowstudio.store import ValueStore

FIXTURES = Path(__file__).parent / "fixtures"
SHIPPED = Path(__file__).parents[1] / "fixtures"

# Stable ids so scripted transcripts can name nodes.
BEAKS = f"{1:032x}"
SELECT_FORTIS = f"{2:032x}"
BOOTSTRAP_AVERAGE = f"{3:032x}"
ESTIMATE_LENGTH = f"{4:032x}"
PLOT_STATISTICS = f"{5:032x}"
HISTOGRAM_LENGTHS = f"{6:032x}"
PLOT_LENGTH_DEPTH = f"{7:032x}"


def beaks_df_type() -> ExtendedType:
    return ExtendedType.dataframe(
        [
            ColumnSpec("species", "string", "The species name as a string."),
            ColumnSpec("Beak length, mm", "float", "The length of the beak in millimeters."),
            ColumnSpec("Beak depth, mm", "float", "The depth of the beak in millimeters."),
        ],
        description="The dataset of bird species and their beak dimensions.",
    )


def make_beaks_graph() -> DataflowGraph:
    """The usage-scenario graph: 7 nodes, 6 edges."""
    g = DataflowGraph(title="beaks")
    g.add_node("load", "beaks", "load beaks.csv", node_id=BEAKS)
    g.add_node("compute", "Select-Fortis", "select fortis", node_id=SELECT_FORTIS)
    g.add_node("compute", "Bootstrap-Average", "bootstrap resampled means", node_id=BOOTSTRAP_AVERAGE)
    g.add_node("compute", "Estimate-Length", "95% confidence interval for mean beak length", node_id=ESTIMATE_LENGTH)
    g.add_node("plot", "Plot-Statistics", "histogram of resampled means", node_id=PLOT_STATISTICS)
    g.add_node("plot", "Histogram-Lengths", "histogram of beak lengths", node_id=HISTOGRAM_LENGTHS)
    g.add_node("plot", "Plot-Length-Depth", "scatter of beak length vs depth", node_id=PLOT_LENGTH_DEPTH)
    g.add_edge(BEAKS, SELECT_FORTIS)
    g.add_edge(SELECT_FORTIS, BOOTSTRAP_AVERAGE)
    g.add_edge(BOOTSTRAP_AVERAGE, ESTIMATE_LENGTH)
    g.add_edge(BOOTSTRAP_AVERAGE, PLOT_STATISTICS)
    g.add_edge(BEAKS, HISTOGRAM_LENGTHS)
    g.add_edge(BEAKS, PLOT_LENGTH_DEPTH)
    return g


def bfs_closure(edges: set[tuple[str, str]], start: str) -> set[str]:
    """Independent reachability oracle (never reuses graph code)."""
    children: dict[str, list[str]] = {}
    for s, d in edges:
        children.setdefault(s, []).append(d)
    seen: set[str] = set()
    queue = deque(children.get(start, []))
    while queue:
        nid = queue.popleft()
        if nid in seen:
            continue
        seen.add(nid)
        queue.extend(children.get(nid, []))
    return seen


@pytest.fixture
def beaks_graph() -> DataflowGraph:
    return make_beaks_graph()


def gateway_for(entries: list[ScriptEntry], **kwargs) -> Gateway:
    return Gateway(ScriptedBackend(entries), **kwargs)


def structured_entry(step: str, node: str | None, payload: dict, **kwargs) -> ScriptEntry:
    return ScriptEntry(response={"kind": "structured", "payload": payload}, step=step, node=node, **kwargs)


def text_entry(step: str, node: str | None, text: str, **kwargs) -> ScriptEntry:
    return ScriptEntry(response={"kind": "text", "text": text}, step=step, node=node, **kwargs)


def load_jsonl(path: Path) -> list[dict]:
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion coverage")
    config._criterion_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker and report.when == "call":
        num, title = marker.args
        previous = item.config._criterion_results.get(num)
        status = "PASS" if report.passed else "FAIL"
        if previous and previous[0] == "FAIL":
            status = "FAIL"
        item.config._criterion_results[num] = (status, title)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_criterion_results", {})
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(results):
        status, title = results[num]
        terminalreporter.write_line(f"criterion {num}: {status} — {title}")


@pytest.fixture(scope="session")
def session_store(tmp_path_factory) -> ValueStore:
    return ValueStore(tmp_path_factory.mktemp("session-store"))


@pytest.fixture(scope="session")
def session_pool(session_store):
    """One kernel pool for the whole run; workdir is the shipped fixtures dir."""
    with KernelPool(session_store.root, size=4, workdir=SHIPPED, default_timeout_s=60) as pool:
        yield pool


@dataclass
class EngineHarness:
    project: Project
    host: GraphHost
    backend: ScriptedBackend
    gateway: Gateway
    builder: Builder
    validation: ValidationEngine
    store: ValueStore
    pool: object


def make_harness(pool, store, transcripts: list[str], project_path: Path | None = None,
                 config: EngineConfig | None = None) -> EngineHarness:
    """Wire a full engine around the shipped beaks fixture and transcripts."""
    entries = []
    for name in transcripts:
        entries.extend(load_transcript(SHIPPED / name))
    project, _ = load_project(project_path or SHIPPED / "beaks.flowco.json")
    host = GraphHost(project.graph)
    backend = ScriptedBackend(entries)
    gateway = Gateway(backend)
    config = config or EngineConfig()
    builder = Builder(host, gateway, pool, config)
    validation = ValidationEngine(project, gateway, pool, config)
    return EngineHarness(project, host, backend, gateway, builder, validation, store, pool)
