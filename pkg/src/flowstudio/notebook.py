"""Notebook export: one markdown header plus one code cell per node.

Cells are emitted in topological order, each code cell defining the node's
function and immediately calling it with its ancestor values, so running
the notebook top to bottom reproduces the dataflow evaluation.
"""

from __future__ import annotations

from typing import Any

from .graph import DataflowGraph, slug_map
from .project import Project


class ExportBlocked(RuntimeError):
    pass


def _markdown_cell(text: str) -> dict[str, Any]:
    return {"cell_type": "markdown", "metadata": {}, "source": text}


def _code_cell(source: str) -> dict[str, Any]:
    return {"cell_type": "code", "metadata": {}, "execution_count": None, "outputs": [], "source": source}


def node_call_line(graph: DataflowGraph, node_id: str) -> str:
    slugs = slug_map(graph)
    args = ", ".join(slugs[aid] for aid in graph.ancestors(node_id))
    return f"{slugs[node_id]} = {slugs[node_id]}({args})"


def export_notebook(project: Project) -> dict[str, Any]:
    """Render the project as notebook-interchange JSON (nbformat 4)."""
    graph = project.graph
    missing = [n.title for n in graph.nodes.values() if not n.code]
    if missing:
        raise ExportBlocked(f"nodes without code cannot be exported: {', '.join(sorted(missing))}")

    prelude_lines = [f"# {graph.title} — exported dataflow", "from pathlib import Path"]
    for dataset in project.datasets:
        prelude_lines.append(
            f'assert Path("{dataset.path}").exists(), "dataset {dataset.name} must sit next to this notebook"'
        )
    cells: list[dict[str, Any]] = [_code_cell("\n".join(prelude_lines))]

    for nid in graph.topo_order():
        node = graph.nodes[nid]
        md = [f"## {node.title}", "", node.label, ""]
        md += [f"- {req}" for req in node.requirements]
        cells.append(_markdown_cell("\n".join(md).rstrip() + "\n"))
        source = (node.code or "").rstrip("\n") + "\n\n" + node_call_line(graph, nid) + "\n"
        cells.append(_code_cell(source))

    return {
        "nbformat": 4,
        "nbformat_minor": 5,
        "metadata": {
            "kernelspec": {"name": "python3", "display_name": "Python 3", "language": "python"},
            "language_info": {"name": "python"},
        },
        "cells": cells,
    }


def notebook_script(notebook: dict[str, Any]) -> str:
    """Concatenate the notebook's code cells into one linear script."""
    chunks = [cell["source"] for cell in notebook["cells"] if cell["cell_type"] == "code"]
    return "\n\n".join(chunks)
