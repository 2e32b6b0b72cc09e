"""End-to-end builds of the shipped beaks scenario against real kernels."""

import pytest

from flowstudio.graph import Phase
from flowstudio.project import canonical_dumps

from conftest import (
    BEAKS,
    BOOTSTRAP_AVERAGE,
    ESTIMATE_LENGTH,
    HISTOGRAM_LENGTHS,
    PLOT_STATISTICS,
    make_harness,
)


@pytest.fixture
def harness(session_pool, session_store):
    return make_harness(session_pool, session_store, ["beaks_build.jsonl"])


def test_full_fixture_build_evaluates_all_seven_nodes(harness):
    report = harness.builder.build()
    assert report.ok, report.to_json()
    graph = harness.project.graph
    assert sum(node.phase is Phase.EVALUATED for node in graph.nodes.values()) == 7


def test_fixture_build_value_summaries(harness):
    harness.builder.build()
    graph = harness.project.graph
    beaks = graph.nodes[BEAKS].result_ref.summary
    assert beaks["kind"] == "dataframe"
    assert beaks["row_count"] == 406
    assert [c["name"] for c in beaks["columns"]] == ["species", "Beak length, mm", "Beak depth, mm"]

    means = graph.nodes[BOOTSTRAP_AVERAGE].result_ref.summary
    assert means["kind"] == "list"
    assert means["length"] == 1000  # code generation under-chose; the check catches this

    interval = graph.nodes[ESTIMATE_LENGTH].result_ref.summary
    assert interval["kind"] == "tuple"
    lo, hi = (e["value"] for e in interval["elements"])
    assert 10.3 < lo < hi < 10.9

    for nid in (PLOT_STATISTICS, HISTOGRAM_LENGTHS):
        node = graph.nodes[nid]
        assert node.figure_refs, f"{node.title} should have captured a figure"
        png = harness.store.get_bytes(node.figure_refs[0])
        assert png[:8] == b"\x89PNG\r\n\x1a\n"


def test_recorded_build_replays_to_identical_graph(session_pool, session_store, tmp_path):
    from flowstudio.build import Builder, GraphHost
    from flowstudio.config import EngineConfig
    from flowstudio.llm import Gateway, RecordingBackend, ScriptedBackend, load_transcript
    from flowstudio.project import load_project
    from conftest import SHIPPED

    recording_path = tmp_path / "recorded.jsonl"
    recorder = RecordingBackend(ScriptedBackend(load_transcript(SHIPPED / "beaks_build.jsonl")), recording_path)
    project1, _ = load_project(SHIPPED / "beaks.flowco.json")
    builder1 = Builder(GraphHost(project1.graph), Gateway(recorder), session_pool, EngineConfig())
    assert builder1.build().ok
    assert len(recorder.entries) == 14  # requirements + code per node

    replay_backend = ScriptedBackend.from_file(recording_path, verify_hash=True)
    project2, _ = load_project(SHIPPED / "beaks.flowco.json")
    builder2 = Builder(GraphHost(project2.graph), Gateway(replay_backend), session_pool, EngineConfig())
    assert builder2.build().ok
    assert canonical_dumps(project1.to_json()) == canonical_dumps(project2.to_json())


def test_two_scripted_builds_are_byte_identical(session_pool, session_store):
    h1 = make_harness(session_pool, session_store, ["beaks_build.jsonl"])
    h2 = make_harness(session_pool, session_store, ["beaks_build.jsonl"])
    h1.builder.build()
    h2.builder.build()
    doc1 = canonical_dumps(h1.project.to_json())
    doc2 = canonical_dumps(h2.project.to_json())
    assert doc1 == doc2


def test_bootstrap_check_fails_then_fix_turns_it_green(session_pool, session_store):
    harness = make_harness(session_pool, session_store, ["beaks_validation.jsonl"])
    harness.builder.build()
    results = harness.validation.run_checks([BOOTSTRAP_AVERAGE])
    assert len(results) == 1
    spec, outcome = results[0]
    assert outcome.status == "fail"
    assert "1000" in outcome.message

    fix = harness.validation.fix_failures(BOOTSTRAP_AVERAGE, harness.builder)
    assert fix["fixed"], fix
    graph = harness.project.graph
    assert graph.nodes[BOOTSTRAP_AVERAGE].result_ref.summary["length"] == 5000
    assert any("5,000" in r for r in graph.nodes[BOOTSTRAP_AVERAGE].requirements)
    # Downstream nodes were re-run under the new contract.
    assert graph.nodes[ESTIMATE_LENGTH].phase is Phase.EVALUATED
    assert graph.nodes[PLOT_STATISTICS].phase is Phase.EVALUATED
    assert spec.last_result.status == "pass"


def test_suggested_checks_include_length_bound_and_color_overlay(session_pool, session_store):
    harness = make_harness(session_pool, session_store, ["beaks_validation.jsonl"])
    harness.builder.build()
    bootstrap_suggestions = harness.validation.suggest_checks(BOOTSTRAP_AVERAGE)
    assert any("5,000" in s for s in bootstrap_suggestions)
    histogram_suggestions = harness.validation.suggest_checks(HISTOGRAM_LENGTHS)
    assert any("color overlay" in s for s in histogram_suggestions)


def test_qualitative_check_judged_from_figure(session_pool, session_store):
    harness = make_harness(session_pool, session_store, ["beaks_validation.jsonl"])
    harness.builder.build()
    spec = harness.validation.add_check(
        HISTOGRAM_LENGTHS, "The plot uses a color overlay to distinguish between the two species"
    )
    assert spec.kind == "qualitative"
    outcome = harness.validation.run_check(spec)
    assert outcome.status == "pass"
    assert outcome.evidence["figure"] == harness.project.graph.nodes[HISTOGRAM_LENGTHS].figure_refs[0]
    assert outcome.evidence["rationale"]


def test_unit_tests_for_select_fortis(session_pool, session_store):
    from conftest import SELECT_FORTIS

    harness = make_harness(session_pool, session_store, ["beaks_validation.jsonl"])
    harness.builder.build()
    suggestions = harness.validation.suggest_tests(SELECT_FORTIS)
    assert any("empty DataFrame" in s for s in suggestions)
    for text in suggestions:
        harness.validation.add_test(SELECT_FORTIS, text)
    results = harness.validation.run_tests([SELECT_FORTIS])
    assert len(results) == 3
    assert all(outcome.status == "pass" for _, outcome in results)


def test_sabotaged_code_fails_unit_test(session_pool, session_store):
    from conftest import SELECT_FORTIS

    harness = make_harness(session_pool, session_store, ["beaks_validation.jsonl"])
    harness.builder.build()
    harness.validation.add_test(SELECT_FORTIS, "Test with an empty DataFrame.")
    graph = harness.project.graph
    # Sabotage: drop a column on the way out.
    graph.nodes[SELECT_FORTIS].code = (
        "import pandas as pd\n\n"
        "def select_fortis(beaks: pd.DataFrame) -> pd.DataFrame:\n"
        "    out = beaks[beaks['species'] == 'fortis'].reset_index(drop=True)\n"
        "    return out.drop(columns=['Beak depth, mm'])\n"
    )
    results = harness.validation.run_tests([SELECT_FORTIS])
    (_, outcome), = results
    assert outcome.status == "fail"
    assert "column" in outcome.message.lower()
