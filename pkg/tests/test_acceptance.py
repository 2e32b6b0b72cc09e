"""Acceptance suite: every criterion as a test, reported one line each.

Everything runs against the scripted LLM backend and the kernel sidecar
only — no UI, no network. The terminal summary prints one PASS/FAIL line
per criterion (see conftest).
"""

import json
import random
import shutil
import time
from concurrent.futures import ThreadPoolExecutor

import pytest
from click.testing import CliRunner

from flowstudio.ama import ChatAgent
from flowstudio.build import Builder, GraphHost
from flowstudio.cli import main as cli_main
from flowstudio.config import EngineConfig
from flowstudio.editing import DraftEditor, LockedNodeError
from flowstudio.graph import DataflowGraph, Phase, is_linear_extension, slug_map
from flowstudio.kernel import ExecRequest, KernelPool, KernelProcess, LocalExecService, default_sidecar_argv
from flowstudio.llm import Gateway, ScriptedBackend, ScriptEntry
from flowstudio.notebook import export_notebook, notebook_script
from flowstudio.project import canonical_dumps, load_project
from flowstudio.repair import GlobalRepairProposal, InvalidProposal, ProposedEdit, apply_global_repair
from flowstudio.store import ValueStore

from conftest import (
    BOOTSTRAP_AVERAGE,
    SHIPPED,
    bfs_closure,
    make_harness,
    structured_entry,
    text_entry,
)

pytestmark = pytest.mark.acceptance


def catch_all_entries(code="def step():\n    return None\n"):
    return [
        structured_entry(
            "requirements", None,
            {"precondition_issues": [], "requirements": ["do the step"], "output_type": {"variant": "none"}},
        ),
        text_entry("code", None, code),
        structured_entry("locked_check", None, {"consistent": True, "warnings": []}),
        structured_entry("repair", None, {"code": code, "requirements": None}),
    ]


def stub_builder(graph, entries=None, exec_service=None, executor=None):
    host = GraphHost(graph)
    gateway = Gateway(ScriptedBackend(entries if entries is not None else catch_all_entries()))
    builder = Builder(host, gateway, exec_service or LocalExecService(), EngineConfig(), executor=executor)
    return host, builder


# -- 1. scheduler correctness ---------------------------------------------------


@pytest.mark.criterion(1, "scheduler: 500 random DAGs schedule as linear extensions; diamond siblings overlap")
def test_criterion_1_scheduler_correctness():
    t0 = time.time()
    rng = random.Random(20240601)
    shared = ThreadPoolExecutor(max_workers=8)
    for trial in range(500):
        n = rng.randint(100, 200) if trial % 12 == 0 else rng.randint(3, 30)
        g = DataflowGraph()
        ids = [g.add_node("compute", f"n{i}", "") for i in range(n)]
        for _ in range(rng.randint(0, 2 * n)):
            i, j = sorted(rng.sample(range(n), 2))
            g.add_edge(ids[i], ids[j])
        _, builder = stub_builder(g, executor=shared)
        report = builder.build()
        assert report.ok
        for kind in ("requirements", "evaluation"):
            records = {r.node_id: r for r in report.executed_steps(kind)}
            order = sorted(records, key=lambda nid: records[nid].seq_start)
            assert is_linear_extension(order, g.edges)
            for src, dst in g.edges:
                assert records[src].seq_end < records[dst].seq_start
    shared.shutdown()

    # Diamond: sibling evaluations overlap under injected 100 ms latencies.
    g = DataflowGraph()
    a = g.add_node("load", "A", "")
    b = g.add_node("compute", "B", "")
    c = g.add_node("compute", "C", "")
    d = g.add_node("compute", "D", "")
    for src, dst in ((a, b), (a, c), (b, d), (c, d)):
        g.add_edge(src, dst)
    _, builder = stub_builder(g, exec_service=LocalExecService(delay_s=0.1))
    report = builder.build()
    evals = {r.node_id: r for r in report.executed_steps("evaluation")}
    overlap = min(evals[b].finished, evals[c].finished) - max(evals[b].started, evals[c].started)
    assert overlap > 0
    assert evals[d].started >= max(evals[b].finished, evals[c].finished)

    elapsed = time.time() - t0
    assert elapsed < 60, f"scheduler stress took {elapsed:.1f}s (budget 60s)"


# -- 2. incrementality ------------------------------------------------------------


@pytest.mark.criterion(2, "incrementality: rebuild set equals the BFS closure oracle for every node")
def test_criterion_2_incremental_rebuild_sets(session_pool, session_store):
    harness = make_harness(session_pool, session_store, ["beaks_build.jsonl"])
    assert harness.builder.build().ok
    graph = harness.project.graph
    for nid in list(graph.nodes):
        affected = graph.invalidate(nid, "requirements")
        report = harness.builder.build()
        expected = {nid} | bfs_closure(graph.edges, nid)
        assert affected == expected
        assert report.executed_nodes() == expected, f"rebuild set mismatch for {graph.nodes[nid].title}"
        assert report.ok


# -- 3. template golden -------------------------------------------------------------


@pytest.mark.criterion(3, "code template golden: select_fortis renders byte-exact")
def test_criterion_3_template_golden():
    from test_template import beaks_ancestor, select_fortis_node
    from flowstudio.template import render_template

    golden = (SHIPPED.parent / "tests" / "fixtures" / "select_fortis_template.golden.py.txt").read_text()
    rendered = render_template(select_fortis_node(), "select_fortis", [beaks_ancestor()])
    assert rendered == golden
    assert "def select_fortis(beaks: pd.DataFrame) -> pd.DataFrame:" in rendered
    assert "Preconditions:" in rendered
    assert "# put code here" in rendered


# -- 4. repair budget ------------------------------------------------------------------


@pytest.mark.criterion(4, "repair budget: stop after exactly 3 local attempts; fail-twice-then-fix uses exactly 3")
def test_criterion_4_repair_budget(session_pool, session_store):
    g = DataflowGraph()
    bad = g.add_node("compute", "Stuck", "")
    entries = [
        structured_entry("requirements", None,
                         {"precondition_issues": [], "requirements": ["r"], "output_type": {"variant": "none"}}),
        text_entry("code", None, "def broken(:\n"),
        structured_entry("repair", None, {"code": "def broken(:\n", "requirements": None}),
    ]
    host = GraphHost(g)
    backend = ScriptedBackend(entries)
    builder = Builder(host, Gateway(backend), session_pool, EngineConfig())
    report = builder.build()
    assert g.nodes[bad].phase is Phase.FAILED
    assert backend.calls_by_step.get("repair") == 3
    assert g.nodes[bad].repair_attempts == 3
    assert report.nodes[bad].global_repair_offered

    g2 = DataflowGraph()
    flaky = g2.add_node("compute", "Flaky", "")
    entries2 = [
        structured_entry("requirements", None,
                         {"precondition_issues": [], "requirements": ["r"], "output_type": {"variant": "none"}}),
        text_entry("code", None, "def broken(:\n", max_uses=1),
        structured_entry("repair", None, {"code": "def broken(:\n", "requirements": None}, max_uses=2),
        structured_entry("repair", None, {"code": "def flaky():\n    return None\n", "requirements": None}),
    ]
    backend2 = ScriptedBackend(entries2)
    builder2 = Builder(GraphHost(g2), Gateway(backend2), session_pool, EngineConfig())
    report2 = builder2.build()
    assert g2.nodes[flaky].phase is Phase.EVALUATED
    assert backend2.calls_by_step.get("repair") == 3
    assert report2.repair_log[-1].outcome == "fixed"


# -- 5. type-violation repair -------------------------------------------------------------


@pytest.mark.criterion(5, "type violation: missing column triggers repair with the exact column named")
def test_criterion_5_type_violation_repair(session_pool, session_store):
    g = DataflowGraph()
    node = g.add_node("compute", "Frame", "")
    out_type = {
        "variant": "dataframe",
        "columns": [{"name": "a", "base": "int"}, {"name": "b", "base": "float"}],
    }
    bad_code = "import pandas as pd\n\ndef frame():\n    return pd.DataFrame({'a': [1, 2]})\n"
    good_code = "import pandas as pd\n\ndef frame():\n    return pd.DataFrame({'a': [1, 2], 'b': [0.5, 1.5]})\n"
    entries = [
        structured_entry("requirements", None,
                         {"precondition_issues": [], "requirements": ["build the frame"], "output_type": out_type}),
        text_entry("code", None, bad_code),
        structured_entry("repair", None, {"code": good_code, "requirements": None}),
    ]
    builder = Builder(GraphHost(g), Gateway(ScriptedBackend(entries)), session_pool, EngineConfig())
    report = builder.build()
    assert g.nodes[node].phase is Phase.EVALUATED
    attempt = report.repair_log[0]
    assert attempt.trigger == "type_violation"
    errors = attempt.diagnostics["validation"]["errors"]
    assert errors == ["$: missing column 'b'"]
    summary = g.nodes[node].result_ref.summary
    assert [c["name"] for c in summary["columns"]] == ["a", "b"]


# -- 6. checks scenario through the CLI ---------------------------------------------------------


@pytest.mark.criterion(6, "checks scenario: bootstrap length check fails, Fix turns it green (CLI exit 1 then 0)")
def test_criterion_6_checks_scenario_cli(tmp_path):
    for name in ("beaks.flowco.json", "beaks.csv", "beaks_validation.jsonl"):
        shutil.copy(SHIPPED / name, tmp_path / name)
    project = str(tmp_path / "beaks.flowco.json")
    transcript = f"scripted:{tmp_path / 'beaks_validation.jsonl'}"
    runner = CliRunner()

    assert runner.invoke(cli_main, ["run", project, "--llm", transcript], catch_exceptions=False).exit_code == 0

    first = runner.invoke(cli_main, ["check", project, "--llm", transcript], catch_exceptions=False)
    assert first.exit_code == 1
    assert "only 1000 resamples were used" in first.output

    fixed = runner.invoke(cli_main, ["fix", project, "--node", "Bootstrap-Average", "--llm", transcript],
                          catch_exceptions=False)
    assert fixed.exit_code == 0

    second = runner.invoke(cli_main, ["check", project, "--llm", transcript], catch_exceptions=False)
    assert second.exit_code == 0, second.output


# -- 7. determinism ------------------------------------------------------------------------------


@pytest.mark.criterion(7, "determinism: two scripted builds produce byte-identical project files")
def test_criterion_7_build_determinism(tmp_path):
    docs = []
    for run in range(2):
        store = ValueStore(tmp_path / f"store{run}")
        with KernelPool(store.root, size=2, workdir=SHIPPED, default_timeout_s=60) as pool:
            harness = make_harness(pool, store, ["beaks_build.jsonl"])
            assert harness.builder.build().ok
            docs.append(canonical_dumps(harness.project.to_json()))
    assert docs[0] == docs[1]


# -- 8. kernel protocol conformance ---------------------------------------------------------------


@pytest.mark.criterion(8, "kernel protocol: statelessness, error discrimination, PNG capture, timeout replace")
def test_criterion_8_protocol_conformance(tmp_path):
    store = ValueStore(tmp_path / "store")
    with KernelPool(store.root, size=1, default_timeout_s=30) as pool:
        # Statelessness probe.
        assert pool.submit(ExecRequest(source="leak = 1\n'set'", mode="snippet")).status == "ok"
        probe = pool.submit(ExecRequest(source="'leak' in dir()", mode="snippet"))
        assert probe.result_ref.summary["value"] is False
        # Syntax vs runtime discrimination.
        assert pool.submit(ExecRequest(source="def f(:", mode="parse")).status == "syntax_error"
        assert pool.submit(ExecRequest(source="1/0", mode="snippet")).status == "exception"
        # Figure capture produces a valid PNG.
        fig = pool.submit(ExecRequest(
            source="import matplotlib.pyplot as plt\nplt.plot([0, 1])\n'ok'", mode="snippet"))
        assert len(fig.figures) == 1
        assert store.get_bytes(fig.figures[0])[:8] == b"\x89PNG\r\n\x1a\n"
        # Timeout kills and replaces; the pool keeps serving.
        slow = pool.submit(ExecRequest(source="import time\ntime.sleep(60)", mode="snippet", timeout_s=1.0))
        assert slow.status == "timeout"
        after = pool.submit(ExecRequest(source="21 * 2", mode="snippet"))
        assert after.result_ref.summary["value"] == 42

    # Malformed frames are answered with protocol errors, never crashes.
    import struct

    kernel = KernelProcess(default_sidecar_argv(tmp_path / "store2", None))
    try:
        kernel.proc.stdin.write(struct.pack(">I", 9) + b"not json!")
        kernel.proc.stdin.flush()
        assert kernel.recv(timeout=15)["type"] == "protocol_error"
        kernel.send({"v": 1, "type": "ping", "id": "p"})
        assert kernel.recv(timeout=15)["type"] == "pong"
    finally:
        kernel.kill()


# -- 9. notebook export ------------------------------------------------------------------------------


@pytest.mark.criterion(9, "notebook export: linear execution reproduces the build's value summaries")
def test_criterion_9_notebook_export(session_pool, session_store):
    harness = make_harness(session_pool, session_store, ["beaks_build.jsonl"])
    assert harness.builder.build().ok
    graph = harness.project.graph
    nb = export_notebook(harness.project)
    script = notebook_script(nb)
    slugs = slug_map(graph)
    for nid in graph.topo_order():
        build_summary = graph.nodes[nid].result_ref.summary
        run = session_pool.submit(
            ExecRequest(source=script + f"\n{slugs[nid]}", mode="snippet", capture_figures=False)
        )
        assert run.status == "ok", (graph.nodes[nid].title, run.error)
        nb_summary = run.result_ref.summary
        assert nb_summary["kind"] == build_summary["kind"]
        if build_summary["kind"] == "dataframe":
            assert nb_summary["row_count"] == build_summary["row_count"]
            assert [c["name"] for c in nb_summary["columns"]] == [c["name"] for c in build_summary["columns"]]
        elif build_summary["kind"] == "list":
            assert nb_summary["length"] == build_summary["length"]
        else:
            assert nb_summary == build_summary  # scalars and tuples exact


# -- 10. lock invariance -------------------------------------------------------------------------------


@pytest.mark.criterion(10, "lock invariance: 100 propagation storms leave locked layers byte-identical")
def test_criterion_10_lock_invariance():
    rng = random.Random(99)
    shared = ThreadPoolExecutor(max_workers=8)
    for storm in range(100):
        n = rng.randint(4, 10)
        g = DataflowGraph()
        ids = [g.add_node("compute", f"n{storm}_{i}", f"label {i}") for i in range(n)]
        for _ in range(rng.randint(n - 1, 2 * n)):
            i, j = sorted(rng.sample(range(n), 2))
            g.add_edge(ids[i], ids[j])
        for i, nid in enumerate(ids):
            node = g.nodes[nid]
            node.requirements = [f"requirement {storm}-{i}"]
            node.code = f"def {slug_map(g)[nid]}():\n    return None\n"
            node.phase = Phase.EVALUATED
        locked = set(rng.sample(ids, rng.randint(1, max(1, n // 2))))
        for nid in locked:
            g.nodes[nid].locked = True
        frozen = {nid: g.nodes[nid].layers() for nid in locked}

        entries = catch_all_entries() + [
            structured_entry("propagate", None,
                             {"title": "t", "label": "l", "requirements": ["changed"], "code": "def t():\n    return 1\n"}),
        ]
        host, builder = stub_builder(g, entries=entries, executor=shared)
        editor = DraftEditor(host, builder.gateway, builder.exec)

        for _ in range(rng.randint(2, 5)):
            action = rng.random()
            target = rng.choice(ids)
            if action < 0.45:
                g.invalidate(target, rng.choice(["requirements", "code"]))
                builder.build()
            elif action < 0.7:
                proposal = GlobalRepairProposal(
                    edits=[ProposedEdit(target, "requirements", ["storm rewrite"])],
                    rationale="storm",
                )
                try:
                    apply_global_repair(g, proposal)
                except InvalidProposal:
                    assert g.nodes[target].locked
                builder.build()
            else:
                draft = editor.open(target)
                editor.edit_layer(draft, "requirements", ["draft storm edit"])
                try:
                    editor.propagate(draft, "requirements")
                except LockedNodeError:
                    assert g.nodes[target].locked

        for nid in locked:
            assert g.nodes[nid].layers() == frozen[nid], f"locked node mutated in storm {storm}"
    shared.shutdown()


# -- 12. web UI (secondary) ----------------------------------------------------------------------------


@pytest.mark.criterion(12, "web UI: node shapes per kind, Save gating in the edit dialog, working Fix on failing checks")
def test_criterion_12_web_ui():
    import shutil as _shutil
    import subprocess

    frontend = SHIPPED.parent / "frontend"
    vitest = frontend / "node_modules" / ".bin" / "vitest"
    runner = [str(vitest)] if vitest.exists() else (
        [_shutil.which("vitest")] if _shutil.which("vitest") else None
    )
    if runner is None:
        pytest.skip("vitest is not available")
    proc = subprocess.run(
        runner + ["run"],
        cwd=frontend,
        capture_output=True,
        text=True,
        timeout=540,
    )
    assert proc.returncode == 0, proc.stdout[-4000:] + proc.stderr[-4000:]


# -- 11. chat replay ---------------------------------------------------------------------------------


@pytest.mark.criterion(11, "chat replay: recorded session reproduces transcript and version; runaway loop capped")
def test_criterion_11_chat_replay(session_pool, session_store):
    finals = []
    for _ in range(2):
        harness = make_harness(session_pool, session_store, ["beaks_build.jsonl", "ama_describe.jsonl"])
        assert harness.builder.build().ok
        agent = ChatAgent(harness.project, harness.host, harness.gateway, harness.pool)
        session = agent.open_session()
        answer = agent.chat(session, "Describe the dataset")
        assert "bimodal" in answer
        finals.append((json.dumps(session.transcript_json(), sort_keys=True), session.graph_versions[-1]))
    assert finals[0] == finals[1]

    harness = make_harness(session_pool, session_store, ["beaks_build.jsonl", "ama_runaway.jsonl"])
    assert harness.builder.build().ok
    agent = ChatAgent(harness.project, harness.host, harness.gateway, harness.pool)
    events = []
    answer = agent.chat(agent.open_session(), "loop forever", events.append)
    assert "10 tool iterations" in answer
    assert sum(1 for e in events if e.type == "tool_started") == 10
