"""Value summaries: compact, prompt-embeddable descriptions of kernel values."""

from __future__ import annotations

import json
from typing import Any

MAX_SUMMARY_BYTES = 64 * 1024
HEAD_ROWS = 10
CELL_CHARS = 80
REPR_CHARS = 512


def _base_for_dtype(dtype: Any) -> str:
    kind = getattr(dtype, "kind", "O")
    if kind in ("i", "u"):
        return "int"
    if kind == "f":
        return "float"
    if kind == "b":
        return "bool"
    return "string"


def _cell(value: Any) -> str:
    text = str(value)
    return text if len(text) <= CELL_CHARS else text[: CELL_CHARS - 1] + "…"


def summarize(obj: Any, depth: int = 0) -> dict[str, Any]:
    """Describe a value by kind, mirroring the extended-type variants.

    Unsummarizable objects degrade to an opaque kind with a repr excerpt.
    """
    import numpy as np

    if obj is None:
        return {"kind": "none"}
    if isinstance(obj, (bool, np.bool_)):
        return {"kind": "scalar", "base": "bool", "value": bool(obj)}
    if isinstance(obj, (int, np.integer)):
        return {"kind": "scalar", "base": "int", "value": int(obj)}
    if isinstance(obj, (float, np.floating)):
        return {"kind": "scalar", "base": "float", "value": float(obj)}
    if isinstance(obj, str):
        return {"kind": "scalar", "base": "string", "value": _cell(obj)}

    try:
        import pandas as pd
    except ImportError:  # pragma: no cover - pandas is a hard dep in practice
        pd = None

    if pd is not None and isinstance(obj, pd.DataFrame):
        columns = [
            {"name": str(name), "base": _base_for_dtype(dtype)}
            for name, dtype in zip(obj.columns, obj.dtypes)
        ][:100]
        head = [[_cell(v) for v in row] for row in obj.head(HEAD_ROWS).itertuples(index=False)]
        summary = {
            "kind": "dataframe",
            "columns": columns,
            "row_count": int(len(obj)),
            "head": head,
        }
        return _capped(summary)
    if pd is not None and isinstance(obj, pd.Series):
        element = {"kind": "scalar", "base": _base_for_dtype(obj.dtype)}
        return {"kind": "list", "length": int(len(obj)), "element": element}

    if isinstance(obj, np.ndarray):
        if obj.ndim == 0:
            return summarize(obj.item(), depth)
        element: dict[str, Any]
        if obj.ndim == 1:
            element = {"kind": "scalar", "base": _base_for_dtype(obj.dtype)}
        else:
            element = {"kind": "list", "length": int(obj.shape[1]) if obj.ndim > 1 else 0}
        return {"kind": "list", "length": int(obj.shape[0]), "element": element}

    if isinstance(obj, tuple):
        if depth >= 3:
            return {"kind": "opaque", "repr": _repr(obj)}
        return {"kind": "tuple", "elements": [summarize(v, depth + 1) for v in obj[:20]]}
    if isinstance(obj, list):
        element = summarize(obj[0], depth + 1) if obj and depth < 3 else None
        summary = {"kind": "list", "length": len(obj)}
        if element is not None:
            summary["element"] = element
        return summary

    if type(obj).__module__.startswith("matplotlib") and type(obj).__name__ == "Figure":
        return {"kind": "figure"}

    return {"kind": "opaque", "repr": _repr(obj)}


def _repr(obj: Any) -> str:
    try:
        text = repr(obj)
    except Exception as exc:
        text = f"<unrepresentable {type(obj).__name__}: {exc}>"
    return text if len(text) <= REPR_CHARS else text[: REPR_CHARS - 1] + "…"


def _capped(summary: dict[str, Any]) -> dict[str, Any]:
    # Summaries must stay prompt-embeddable; drop head rows before columns.
    if len(json.dumps(summary)) <= MAX_SUMMARY_BYTES:
        return summary
    summary = dict(summary, head=[])
    if len(json.dumps(summary)) <= MAX_SUMMARY_BYTES:
        return summary
    return {"kind": summary["kind"], "columns": summary["columns"][:20],
            "row_count": summary.get("row_count", 0), "head": [], "truncated": True}
