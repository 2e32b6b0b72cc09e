"""Extended output types and validation of kernel value summaries against them.

An extended type is the machine-checkable contract between the synthesis
pipeline and evaluation: it enriches a structural type with per-element
meaning and per-column names, types, and descriptions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Any

import jsonschema

SCHEMA_VERSION = 1

_SCALAR_BASES = ("int", "float", "bool", "string")
_VARIANTS = ("scalar", "list", "tuple", "dataframe", "figure", "none")

_PY_NAMES = {"int": "int", "float": "float", "bool": "bool", "string": "str"}


class SchemaError(ValueError):
    """A structured document does not conform to the canonical type schema."""

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class ColumnSpec:
    """One dataframe column: name, scalar base type, prose description."""

    name: str
    base: str
    description: str = ""

    def __post_init__(self):
        if not self.name:
            raise SchemaError("column name must be non-empty")
        if self.base not in _SCALAR_BASES:
            raise SchemaError(f"unknown base type {self.base!r}")


@dataclass(frozen=True)
class ExtendedType:
    """Structural output type with element/column semantics.

    Exactly one variant is populated; use the class constructors rather
    than instantiating directly.
    """

    variant: str
    description: str = ""
    base: str | None = None
    element: "ExtendedType | None" = None
    meaning: str = ""
    elements: tuple["ExtendedType", ...] = ()
    columns: tuple[ColumnSpec, ...] = ()

    @classmethod
    def scalar(cls, base: str, description: str = "") -> "ExtendedType":
        if base not in _SCALAR_BASES:
            raise SchemaError(f"unknown base type {base!r}")
        return cls(variant="scalar", base=base, description=description)

    @classmethod
    def list_of(cls, element: "ExtendedType", meaning: str = "", description: str = "") -> "ExtendedType":
        return cls(variant="list", element=element, meaning=meaning, description=description)

    @classmethod
    def tuple_of(cls, *elements: "ExtendedType", description: str = "") -> "ExtendedType":
        return cls(variant="tuple", elements=tuple(elements), description=description)

    @classmethod
    def dataframe(cls, columns: list[ColumnSpec] | tuple[ColumnSpec, ...], description: str = "") -> "ExtendedType":
        cols = tuple(columns)
        names = [c.name for c in cols]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate column names {dupes}")
        return cls(variant="dataframe", columns=cols, description=description)

    @classmethod
    def figure(cls, description: str = "") -> "ExtendedType":
        return cls(variant="figure", description=description)

    @classmethod
    def none(cls, description: str = "") -> "ExtendedType":
        return cls(variant="none", description=description)

    def to_canonical(self) -> dict[str, Any]:
        """Render to the canonical structured form (the JSON schema shape)."""
        doc: dict[str, Any] = {"variant": self.variant}
        if self.description:
            doc["description"] = self.description
        if self.variant == "scalar":
            doc["base"] = self.base
        elif self.variant == "list":
            assert self.element is not None
            doc["element"] = self.element.to_canonical()
            if self.meaning:
                doc["meaning"] = self.meaning
        elif self.variant == "tuple":
            doc["elements"] = [e.to_canonical() for e in self.elements]
        elif self.variant == "dataframe":
            doc["columns"] = [
                {"name": c.name, "base": c.base, **({"description": c.description} if c.description else {})}
                for c in self.columns
            ]
        return doc


def extended_type_schema() -> dict[str, Any]:
    """The canonical JSON schema for extended types (also the LLM output schema)."""
    text = resources.files("flowstudio.schemas").joinpath("extended_type.schema.json").read_text()
    return json.loads(text)


_VALIDATOR = None


def _validator() -> jsonschema.Validator:
    global _VALIDATOR
    if _VALIDATOR is None:
        _VALIDATOR = jsonschema.Draft202012Validator(extended_type_schema())
    return _VALIDATOR


def parse_extended_type(doc: Any) -> ExtendedType:
    """Parse a canonical structured document into an ExtendedType.

    Raises SchemaError with the JSON path of the offending field.
    """
    errors = sorted(_validator().iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "$" + "".join(
            f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path
        )
        raise SchemaError(err.message, path=path)
    return _build(doc, "$")


def _build(doc: dict[str, Any], path: str) -> ExtendedType:
    variant = doc["variant"]
    desc = doc.get("description", "")
    if variant == "scalar":
        return ExtendedType.scalar(doc["base"], desc)
    if variant == "list":
        return ExtendedType.list_of(
            _build(doc["element"], path + ".element"), doc.get("meaning", ""), desc
        )
    if variant == "tuple":
        elems = [_build(e, f"{path}.elements[{i}]") for i, e in enumerate(doc["elements"])]
        return ExtendedType.tuple_of(*elems, description=desc)
    if variant == "dataframe":
        cols = [ColumnSpec(c["name"], c["base"], c.get("description", "")) for c in doc["columns"]]
        names = [c.name for c in cols]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate column names {dupes}", path + ".columns")
        return ExtendedType.dataframe(cols, desc)
    if variant == "figure":
        return ExtendedType.figure(desc)
    if variant == "none":
        return ExtendedType.none(desc)
    raise SchemaError(f"unknown variant {variant!r}", path + ".variant")


def render_signature(t: ExtendedType) -> str:
    """Deterministic signature text for code templates and the details panel.

    Dataframes render as a multi-line bracketed column listing with
    per-column comments; lists carry their element meaning as a comment.
    """
    if t.variant == "scalar":
        return _PY_NAMES[t.base or "string"]
    if t.variant == "list":
        assert t.element is not None
        inner = render_signature(t.element)
        sig = f"list[{inner}]"
        if t.meaning:
            sig += f"  # {t.meaning}"
        return sig
    if t.variant == "tuple":
        return "tuple[" + ", ".join(render_signature(e) for e in t.elements) + "]"
    if t.variant == "dataframe":
        lines = ["DataFrame["]
        for c in t.columns:
            comment = f"  # {c.description}" if c.description else ""
            lines.append(f" {c.name!r}: {_PY_NAMES[c.base]}{comment}")
        lines.append("]")
        return "\n".join(lines)
    if t.variant == "figure":
        return "Figure" + (f"  # {t.description}" if t.description else "")
    return "None"


def python_annotation(t: ExtendedType) -> str:
    """Plain Python annotation used in generated function signatures."""
    if t.variant == "scalar":
        return _PY_NAMES[t.base or "string"]
    if t.variant == "list":
        return "list"
    if t.variant == "tuple":
        return "tuple"
    if t.variant == "dataframe":
        return "pd.DataFrame"
    if t.variant == "figure":
        return ""
    return "None"


@dataclass
class ValidationReport:
    """Outcome of checking a value summary against an expected type.

    Mismatches are entries, not exceptions; extra dataframe columns are
    warnings rather than errors.
    """

    ok: bool = True
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def error(self, msg: str) -> None:
        self.ok = False
        self.errors.append(msg)

    def warn(self, msg: str) -> None:
        self.warnings.append(msg)

    def to_json(self) -> dict[str, Any]:
        return {"ok": self.ok, "errors": list(self.errors), "warnings": list(self.warnings)}


def _base_compatible(actual: str | None, expected: str) -> bool:
    # int summaries satisfy float expectations; nothing else coerces.
    if actual == expected:
        return True
    return expected == "float" and actual == "int"


def validate_summary(
    summary: dict[str, Any] | None,
    expected: ExtendedType,
    figures: tuple[str, ...] | list[str] = (),
) -> ValidationReport:
    """Check a kernel value summary against an expected extended type.

    Figure expectations validate by presence of an image artifact only;
    content checks belong to qualitative checks.
    """
    report = ValidationReport()
    if expected.variant == "figure":
        if not figures and (summary is None or summary.get("kind") != "figure"):
            report.error("expected a figure but no image artifact was produced")
        return report
    if summary is None:
        report.error(f"no value summary; expected kind {expected.variant}")
        return report
    _validate(summary, expected, report, "$")
    return report


def _validate(summary: dict[str, Any], expected: ExtendedType, report: ValidationReport, path: str) -> None:
    kind = summary.get("kind")
    if expected.variant == "none":
        if kind != "none":
            report.error(f"{path}: expected no value, got kind {kind!r}")
        return
    if expected.variant == "scalar":
        if kind != "scalar":
            report.error(f"{path}: expected scalar {expected.base}, got kind {kind!r}")
        elif not _base_compatible(summary.get("base"), expected.base or ""):
            report.error(f"{path}: expected {expected.base}, got {summary.get('base')}")
        return
    if expected.variant == "list":
        if kind != "list":
            report.error(f"{path}: expected list, got kind {kind!r}")
            return
        element = summary.get("element")
        # A zero-length list carries no element sample to check.
        if element is not None and expected.element is not None:
            _validate(element, expected.element, report, path + ".element")
        return
    if expected.variant == "tuple":
        if kind != "tuple":
            report.error(f"{path}: expected tuple, got kind {kind!r}")
            return
        elems = summary.get("elements", [])
        if len(elems) != len(expected.elements):
            report.error(f"{path}: expected {len(expected.elements)}-tuple, got {len(elems)} elements")
            return
        for i, (s, e) in enumerate(zip(elems, expected.elements)):
            _validate(s, e, report, f"{path}[{i}]")
        return
    if expected.variant == "dataframe":
        if kind != "dataframe":
            report.error(f"{path}: expected dataframe, got kind {kind!r}")
            return
        actual_cols = {c["name"]: c.get("base") for c in summary.get("columns", [])}
        for col in expected.columns:
            if col.name not in actual_cols:
                report.error(f"{path}: missing column {col.name!r}")
            elif not _base_compatible(actual_cols[col.name], col.base):
                report.error(
                    f"{path}: column {col.name!r} expected {col.base}, got {actual_cols[col.name]}"
                )
        expected_names = {c.name for c in expected.columns}
        for name in actual_cols:
            if name not in expected_names:
                report.warn(f"{path}: extra column {name!r}")
        return
    report.error(f"{path}: unsupported expected variant {expected.variant!r}")
