"""Deterministic function templates handed to code generation.

A template fixes the function signature (one typed parameter per ancestor
output, in creation order) and a docstring carrying the label, the behavior
requirements, per-argument descriptions and preconditions, and the return
contract, with a "# put code here" body placeholder.
"""

from __future__ import annotations

from dataclasses import dataclass

from .extypes import ExtendedType, python_annotation, render_signature
from .graph import Node

PLACEHOLDER = "# put code here"


@dataclass(frozen=True)
class AncestorContract:
    """The published contract of one ancestor: its output and requirements."""

    slug: str
    title: str
    requirements: tuple[str, ...]
    output_type: ExtendedType


def _indent_continuations(text: str, pad: str) -> str:
    lines = text.split("\n")
    return "\n".join([lines[0]] + [pad + line for line in lines[1:]])


def render_template(node: Node, fn_name: str, ancestors: list[AncestorContract]) -> str:
    """Render the code-generation template; byte-deterministic for golden tests."""
    params = []
    for a in ancestors:
        annot = python_annotation(a.output_type)
        params.append(f"{a.slug}: {annot}" if annot else a.slug)
    ret = node.output_type or ExtendedType.none()
    ret_annot = python_annotation(ret)
    arrow = f" -> {ret_annot}" if ret_annot else ""

    lines = ["# put all imports here", f"def {fn_name}({', '.join(params)}){arrow}:"]
    doc = ['  """', f"  {node.label}", "", "  This function has the following behavior:"]
    for req in node.requirements:
        doc.append(f"  - {req}")
    if ancestors:
        doc.append("")
        doc.append("  Args:")
        for a in ancestors:
            sig = _indent_continuations(render_signature(a.output_type), "    ")
            desc = a.output_type.description or f"The output of the `{a.title}` node."
            doc.append(f"    {a.slug} ({sig}): {desc}")
            doc.append("")
            doc.append("      Preconditions:")
            for req in a.requirements:
                doc.append(f"      - {req}")
            doc.append("")
        doc.pop()  # single blank line between the last arg and Returns
    doc.append("")
    doc.append("  Returns:")
    ret_sig = _indent_continuations(render_signature(ret), "    ")
    ret_desc = ret.description or "The output of this node."
    if ret.variant == "figure":
        ret_desc += " The function draws the figure and returns the data underlying the plot so downstream nodes can use it."
    doc.append(f"    {ret_sig}: {ret_desc}")
    doc.append('  """')
    lines.extend(doc)
    lines.append(f"  {PLACEHOLDER}")
    lines.append("  ...")
    return "\n".join(lines) + "\n"
