import pytest

from flowstudio.graph import slug_map
from flowstudio.kernel import ExecRequest
from flowstudio.notebook import ExportBlocked, export_notebook, notebook_script
from flowstudio.project import Project

from conftest import make_beaks_graph, make_harness


def test_export_blocked_without_code():
    project = Project(graph=make_beaks_graph())
    with pytest.raises(ExportBlocked) as err:
        export_notebook(project)
    assert "beaks" in str(err.value)


@pytest.fixture
def built(session_pool, session_store):
    harness = make_harness(session_pool, session_store, ["beaks_build.jsonl"])
    harness.builder.build()
    return harness


def test_fixture_notebook_shape(built):
    nb = export_notebook(built.project)
    assert nb["nbformat"] == 4
    code_cells = [c for c in nb["cells"] if c["cell_type"] == "code"]
    md_cells = [c for c in nb["cells"] if c["cell_type"] == "markdown"]
    assert len(code_cells) == 1 + 7  # prelude + one per node
    assert len(md_cells) == 7
    assert "beaks.csv" in code_cells[0]["source"]


def test_cells_in_topological_order(built):
    nb = export_notebook(built.project)
    source = notebook_script(nb)
    graph = built.project.graph
    slugs = slug_map(graph)
    for src, dst in graph.edges:
        assert source.index(f"{slugs[src]} = {slugs[src]}(") < source.index(f"{slugs[dst]} = {slugs[dst]}(")


def test_chain_call_order():
    from flowstudio.graph import DataflowGraph

    g = DataflowGraph(title="chain")
    a = g.add_node("load", "A", "")
    b = g.add_node("compute", "B", "")
    g.add_edge(a, b)
    g.nodes[a].code = "def a():\n    return 1\n"
    g.nodes[b].code = "def b(a):\n    return a + 1\n"
    nb = export_notebook(Project(graph=g))
    script = notebook_script(nb)
    assert script.index("a = a()") < script.index("b = b(a)")


def test_exported_notebook_reproduces_build_summaries(built, session_pool):
    """Linear execution in a fresh kernel matches the dataflow evaluation."""
    nb = export_notebook(built.project)
    script = notebook_script(nb)
    graph = built.project.graph
    slugs = slug_map(graph)
    for nid in graph.topo_order():
        build_summary = graph.nodes[nid].result_ref.summary
        run = session_pool.submit(
            ExecRequest(source=script + f"\n{slugs[nid]}", mode="snippet", capture_figures=False)
        )
        assert run.status == "ok", run.error
        nb_summary = run.result_ref.summary
        assert nb_summary["kind"] == build_summary["kind"]
        if build_summary["kind"] == "dataframe":
            assert nb_summary["row_count"] == build_summary["row_count"]
            assert nb_summary["columns"] == build_summary["columns"]
        elif build_summary["kind"] == "list":
            assert nb_summary["length"] == build_summary["length"]
        elif build_summary["kind"] in ("scalar", "tuple"):
            assert nb_summary == build_summary
