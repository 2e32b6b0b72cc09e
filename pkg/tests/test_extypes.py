import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowstudio.extypes import (
    ColumnSpec,
    ExtendedType,
    SchemaError,
    parse_extended_type,
    render_signature,
    validate_summary,
)

from conftest import beaks_df_type


def test_beaks_dataframe_spec_parses():
    doc = {
        "variant": "dataframe",
        "columns": [
            {"name": "species", "base": "string", "description": "The species name as a string."},
            {"name": "Beak length, mm", "base": "float"},
            {"name": "Beak depth, mm", "base": "float"},
        ],
    }
    t = parse_extended_type(doc)
    assert t.variant == "dataframe"
    assert [c.name for c in t.columns] == ["species", "Beak length, mm", "Beak depth, mm"]


def test_none_type_parses():
    assert parse_extended_type({"variant": "none"}) == ExtendedType.none()


def test_duplicate_columns_rejected():
    doc = {"variant": "dataframe", "columns": [{"name": "a", "base": "int"}, {"name": "a", "base": "int"}]}
    with pytest.raises(SchemaError):
        parse_extended_type(doc)


def test_schema_error_has_path():
    doc = {"variant": "dataframe", "columns": [{"name": "a", "base": "complex"}]}
    with pytest.raises(SchemaError) as err:
        parse_extended_type(doc)
    assert "columns" in str(err.value)


def test_missing_variant_field():
    with pytest.raises(SchemaError):
        parse_extended_type({"description": "no variant"})


def test_render_scalar_float():
    assert render_signature(ExtendedType.scalar("float")) == "float"


def test_render_list_with_meaning():
    t = ExtendedType.list_of(ExtendedType.scalar("float"), meaning="resampled means")
    assert render_signature(t) == "list[float]  # resampled means"


def test_render_beaks_dataframe_matches_bracketed_style():
    sig = render_signature(beaks_df_type())
    assert sig.splitlines()[0] == "DataFrame["
    assert " 'species': str  # The species name as a string." in sig
    assert " 'Beak length, mm': float  # The length of the beak in millimeters." in sig
    assert sig.splitlines()[-1] == "]"


# -- validation ----------------------------------------------------------------


def beaks_summary(columns=None):
    columns = columns or [
        {"name": "species", "base": "string"},
        {"name": "Beak length, mm", "base": "float"},
        {"name": "Beak depth, mm", "base": "float"},
    ]
    return {"kind": "dataframe", "columns": columns, "row_count": 406, "head": []}


def test_beaks_summary_validates():
    report = validate_summary(beaks_summary(), beaks_df_type())
    assert report.ok
    assert report.errors == []


def test_scalar_vs_dataframe_kind_mismatch():
    report = validate_summary({"kind": "scalar", "base": "float", "value": 1.0}, beaks_df_type())
    assert not report.ok
    assert "expected dataframe" in report.errors[0]


def test_missing_column_reported_exactly():
    summary = beaks_summary(
        [{"name": "species", "base": "string"}, {"name": "Beak length, mm", "base": "float"}]
    )
    report = validate_summary(summary, beaks_df_type())
    assert not report.ok
    assert len(report.errors) == 1
    assert "Beak depth, mm" in report.errors[0]


def test_extra_column_is_warning_not_error():
    summary = beaks_summary(
        [
            {"name": "species", "base": "string"},
            {"name": "Beak length, mm", "base": "float"},
            {"name": "Beak depth, mm", "base": "float"},
            {"name": "extra", "base": "int"},
        ]
    )
    report = validate_summary(summary, beaks_df_type())
    assert report.ok
    assert any("extra" in w for w in report.warnings)


def test_int_satisfies_float_expectation():
    report = validate_summary({"kind": "scalar", "base": "int", "value": 3}, ExtendedType.scalar("float"))
    assert report.ok


def test_float_does_not_satisfy_int():
    report = validate_summary({"kind": "scalar", "base": "float", "value": 3.0}, ExtendedType.scalar("int"))
    assert not report.ok


def test_none_expectation_only_accepts_none():
    assert validate_summary({"kind": "none"}, ExtendedType.none()).ok
    assert not validate_summary({"kind": "scalar", "base": "int", "value": 1}, ExtendedType.none()).ok


def test_figure_requires_artifact():
    assert validate_summary({"kind": "list", "length": 3}, ExtendedType.figure(), figures=["ab" * 32]).ok
    assert not validate_summary({"kind": "list", "length": 3}, ExtendedType.figure()).ok


def test_list_element_kind_checked():
    t = ExtendedType.list_of(ExtendedType.scalar("float"))
    good = {"kind": "list", "length": 5, "element": {"kind": "scalar", "base": "float"}}
    bad = {"kind": "list", "length": 5, "element": {"kind": "scalar", "base": "string"}}
    assert validate_summary(good, t).ok
    assert not validate_summary(bad, t).ok


def test_tuple_arity_checked():
    t = ExtendedType.tuple_of(ExtendedType.scalar("float"), ExtendedType.scalar("float"))
    good = {"kind": "tuple", "elements": [{"kind": "scalar", "base": "float"}] * 2}
    bad = {"kind": "tuple", "elements": [{"kind": "scalar", "base": "float"}]}
    assert validate_summary(good, t).ok
    assert not validate_summary(bad, t).ok


# -- property tests -------------------------------------------------------------

base_types = st.sampled_from(["int", "float", "bool", "string"])
descriptions = st.text(alphabet=st.characters(categories=["L", "N", "Zs"]), max_size=20)


def extended_types(depth: int = 0):
    scalars = st.builds(ExtendedType.scalar, base_types, descriptions)
    leaves = scalars | st.builds(ExtendedType.figure, descriptions) | st.builds(ExtendedType.none, descriptions)
    columns = st.lists(
        st.builds(ColumnSpec, st.text(min_size=1, max_size=8), base_types, descriptions),
        min_size=1,
        max_size=4,
        unique_by=lambda c: c.name,
    )
    frames = st.builds(ExtendedType.dataframe, columns, descriptions)
    if depth >= 3:
        return leaves | frames
    inner = extended_types(depth + 1)
    lists_ = st.builds(ExtendedType.list_of, inner, descriptions, descriptions)
    tuples_ = st.builds(lambda els, d: ExtendedType.tuple_of(*els, description=d),
                        st.lists(inner, min_size=1, max_size=3), descriptions)
    return leaves | frames | lists_ | tuples_


@given(extended_types())
@settings(max_examples=150, deadline=None)
def test_parse_render_roundtrip(t):
    assert parse_extended_type(t.to_canonical()) == t


@given(extended_types())
@settings(max_examples=60, deadline=None)
def test_removing_required_column_fails_validation(t):
    # Monotonicity on the dataframe variant only.
    if t.variant != "dataframe" or len(t.columns) < 2:
        return
    full = {
        "kind": "dataframe",
        "columns": [{"name": c.name, "base": c.base} for c in t.columns],
        "row_count": 1,
        "head": [],
    }
    assert validate_summary(full, t).ok
    reduced = dict(full, columns=full["columns"][1:])
    assert not validate_summary(reduced, t).ok
