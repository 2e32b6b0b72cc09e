import json

import pytest

from flowstudio.ama import ChatAgent, TurnEvent
from flowstudio.config import EngineConfig
from flowstudio.graph import Phase
from flowstudio.kernel import LocalExecService
from flowstudio.llm import Gateway, ScriptedBackend, ScriptEntry

from conftest import (
    BOOTSTRAP_AVERAGE,
    ESTIMATE_LENGTH,
    HISTOGRAM_LENGTHS,
    PLOT_LENGTH_DEPTH,
    SELECT_FORTIS,
    make_harness,
)


def agent_for(harness) -> ChatAgent:
    return ChatAgent(harness.project, harness.host, harness.gateway, harness.pool)


def test_describe_dataset_session(session_pool, session_store):
    harness = make_harness(session_pool, session_store, ["beaks_build.jsonl", "ama_describe.jsonl"])
    harness.builder.build()
    agent = agent_for(harness)
    session = agent.open_session()
    events: list[TurnEvent] = []
    answer = agent.chat(session, "Describe the dataset", events.append)

    assert "bimodal" in answer
    tool_events = [e for e in events if e.type == "tool_started"]
    assert len(tool_events) == 3
    assert all(e.data["name"] == "run_snippet" for e in tool_events)
    # The histogram snippet produced a figure attached back into the transcript.
    tool_messages = [m for m in session.messages if m.role == "tool"]
    assert any(any(not hasattr(p, "text") for p in m.parts) for m in tool_messages)
    # Streaming deltas concatenate to the final answer.
    deltas = "".join(e.data["text"] for e in events if e.type == "text_delta")
    assert deltas == answer


def test_describe_session_replays_identically(session_pool, session_store):
    transcripts = ["beaks_build.jsonl", "ama_describe.jsonl"]
    finals = []
    for _ in range(2):
        harness = make_harness(session_pool, session_store, transcripts)
        harness.builder.build()
        agent = agent_for(harness)
        session = agent.open_session()
        agent.chat(session, "Describe the dataset")
        finals.append((json.dumps(session.transcript_json(), sort_keys=True), session.graph_versions[-1]))
    assert finals[0] == finals[1]


def test_color_request_edits_both_plot_nodes(session_pool, session_store):
    harness = make_harness(session_pool, session_store, ["beaks_build.jsonl", "ama_colors.jsonl"])
    harness.builder.build()
    graph = harness.project.graph
    version_before = graph.version
    agent = agent_for(harness)
    answer = agent.chat(agent.open_session(), "Use different colors for different species")
    assert "Run" in answer
    assert graph.version > version_before
    for nid in (HISTOGRAM_LENGTHS, PLOT_LENGTH_DEPTH):
        assert graph.nodes[nid].phase is Phase.DIRTY
        assert any("color" in r.lower() for r in graph.nodes[nid].requirements)
    # Other nodes untouched.
    assert graph.nodes[SELECT_FORTIS].phase is Phase.EVALUATED


def test_runaway_tool_loop_stops_at_cap(session_pool, session_store):
    harness = make_harness(session_pool, session_store, ["beaks_build.jsonl", "ama_runaway.jsonl"])
    harness.builder.build()
    agent = agent_for(harness)
    events = []
    answer = agent.chat(agent.open_session(), "inspect forever", events.append)
    assert "10 tool iterations" in answer
    assert sum(1 for e in events if e.type == "tool_started") == 10
    assert any(e.type == "diagnostic" for e in events)


def test_node_chat_updates_layers_consistently(session_pool, session_store):
    harness = make_harness(session_pool, session_store, ["beaks_build.jsonl", "node_round.jsonl"])
    harness.builder.build()
    agent = agent_for(harness)
    answer = agent.node_chat(ESTIMATE_LENGTH, "Round the result to two decimal places")
    assert "two decimal places" in answer
    node = harness.project.graph.nodes[ESTIMATE_LENGTH]
    assert any("two decimal places" in r for r in node.requirements)
    assert "round(" in node.code
    # Saved node awaits re-evaluation only; downstream unaffected (leaf).
    assert node.phase is Phase.CODE_READY


def test_node_chat_rejects_edits_to_other_nodes():
    from conftest import make_beaks_graph
    from flowstudio.build import GraphHost
    from flowstudio.project import Project

    graph = make_beaks_graph()
    project = Project(graph=graph)
    entries = [
        ScriptEntry(
            step="node_ama", attempt=1,
            response={
                "kind": "tool_calls",
                "tool_calls": [
                    {
                        "name": "edit_graph",
                        "arguments": {
                            "edits": [{"op": "set_layer", "node": SELECT_FORTIS, "layer": "label", "content": "hijack"}],
                            "rationale": "trying to edit a different node",
                        },
                        "id": "c1",
                    }
                ],
            },
        ),
        ScriptEntry(
            step="node_ama", attempt=2,
            response={"kind": "text", "text": "that was not allowed"},
        ),
    ]
    agent = ChatAgent(project, GraphHost(graph), Gateway(ScriptedBackend(entries)), LocalExecService())
    session = agent.open_session(scope=ESTIMATE_LENGTH)
    answer = agent.node_chat(ESTIMATE_LENGTH, "edit another node please", session=session)
    assert "not allowed" in answer
    tool_result = next(m for m in session.messages if m.role == "tool")
    assert "error" in tool_result.plain_text()
    assert graph.nodes[SELECT_FORTIS].label != "hijack"


def test_explain_node_makes_no_edits():
    from conftest import make_beaks_graph
    from flowstudio.build import GraphHost
    from flowstudio.project import Project

    graph = make_beaks_graph()
    project = Project(graph=graph)
    version_before = graph.version
    entries = [
        ScriptEntry(step="node_ama",
                    response={"kind": "text", "text": "This node filters the beaks table to the fortis rows."}),
    ]
    agent = ChatAgent(project, GraphHost(graph), Gateway(ScriptedBackend(entries)), LocalExecService())
    answer = agent.node_chat(SELECT_FORTIS, "explain this node")
    assert "filters" in answer
    assert graph.version == version_before


def test_tool_failures_are_returned_to_the_model():
    from conftest import make_beaks_graph
    from flowstudio.build import GraphHost
    from flowstudio.project import Project

    graph = make_beaks_graph()
    project = Project(graph=graph)
    entries = [
        ScriptEntry(
            step="ama", attempt=1,
            response={
                "kind": "tool_calls",
                "tool_calls": [
                    {"name": "run_snippet",
                     "arguments": {"code": "beaks.head()", "bindings": ["beaks"], "rationale": "peek"},
                     "id": "c1"}
                ],
            },
        ),
        ScriptEntry(step="ama", attempt=2,
                    response={"kind": "text", "text": "The graph has not been run yet, so there is no data to show."}),
    ]
    agent = ChatAgent(project, GraphHost(graph), Gateway(ScriptedBackend(entries)), LocalExecService())
    session = agent.open_session()
    answer = agent.chat(session, "show me the data")
    assert "has not been run" in answer
    tool_messages = [m for m in session.messages if m.role == "tool"]
    assert len(tool_messages) == 1
    assert "no computed value" in tool_messages[0].plain_text()


def test_agent_can_add_nodes_and_edges():
    from conftest import make_beaks_graph, BEAKS
    from flowstudio.build import GraphHost
    from flowstudio.project import Project

    graph = make_beaks_graph()
    project = Project(graph=graph)
    entries = [
        ScriptEntry(
            step="ama", attempt=1,
            response={
                "kind": "tool_calls",
                "tool_calls": [
                    {
                        "name": "edit_graph",
                        "arguments": {
                            "edits": [
                                {"op": "add_node", "kind": "compute", "title": "Depth-Mean",
                                 "label": "mean beak depth"},
                                {"op": "add_edge", "src": BEAKS, "dst": "Depth-Mean"},
                            ],
                            "rationale": "add a node computing the mean depth from the dataset",
                        },
                        "id": "c1",
                    }
                ],
            },
        ),
        ScriptEntry(step="ama", attempt=2, response={"kind": "text", "text": "Added Depth-Mean."}),
    ]
    agent = ChatAgent(project, GraphHost(graph), Gateway(ScriptedBackend(entries)), LocalExecService())
    answer = agent.chat(agent.open_session(), "add a mean-depth node under beaks")
    assert "Added" in answer
    titles = {n.title for n in graph.nodes.values()}
    assert "Depth-Mean" in titles
    new_id = next(nid for nid, n in graph.nodes.items() if n.title == "Depth-Mean")
    assert (BEAKS, new_id) in graph.edges


def test_agent_cycle_edit_rejected_atomically():
    from conftest import make_beaks_graph, BEAKS, SELECT_FORTIS
    from flowstudio.build import GraphHost
    from flowstudio.project import Project

    graph = make_beaks_graph()
    project = Project(graph=graph)
    before = graph.to_json()
    entries = [
        ScriptEntry(
            step="ama", attempt=1,
            response={
                "kind": "tool_calls",
                "tool_calls": [
                    {
                        "name": "edit_graph",
                        "arguments": {
                            "edits": [{"op": "add_edge", "src": SELECT_FORTIS, "dst": BEAKS}],
                            "rationale": "would create a cycle",
                        },
                        "id": "c1",
                    }
                ],
            },
        ),
        ScriptEntry(step="ama", attempt=2, response={"kind": "text", "text": "that edit is not possible"}),
    ]
    agent = ChatAgent(project, GraphHost(graph), Gateway(ScriptedBackend(entries)), LocalExecService())
    session = agent.open_session()
    agent.chat(session, "make a loop")
    tool_result = next(m for m in session.messages if m.role == "tool")
    assert "cycle" in tool_result.plain_text()
    assert graph.to_json() == before


def test_every_agent_mutation_is_attributable(session_pool, session_store):
    harness = make_harness(session_pool, session_store, ["beaks_build.jsonl", "ama_colors.jsonl"])
    harness.builder.build()
    agent = agent_for(harness)
    session = agent.open_session()
    agent.chat(session, "Use different colors for different species")
    assistant_calls = [m for m in session.messages if m.role == "assistant" and m.tool_calls]
    edit_calls = [c for m in assistant_calls for c in m.tool_calls if c.name == "edit_graph"]
    assert len(edit_calls) == 1
    assert edit_calls[0].arguments["rationale"]
    assert session.graph_versions[-1] == harness.project.graph.version
