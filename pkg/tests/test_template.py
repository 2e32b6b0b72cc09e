from pathlib import Path

from flowstudio.extypes import ColumnSpec, ExtendedType
from flowstudio.graph import Node, NodeKind
from flowstudio.template import PLACEHOLDER, AncestorContract, render_template

from conftest import FIXTURES, beaks_df_type

GOLDEN = FIXTURES / "select_fortis_template.golden.py.txt"


def select_fortis_node() -> Node:
    out_t = ExtendedType.dataframe(
        [
            ColumnSpec("species", "string", "The species of the bird."),
            ColumnSpec("Beak length, mm", "float", "The length of the beak in millimeters."),
            ColumnSpec("Beak depth, mm", "float", "The depth of the beak in millimeters."),
        ],
        description="The output is a filtered DataFrame containing only rows where the species is 'fortis', retaining all original columns and column names.",
    )
    return Node(
        id="x",
        kind=NodeKind.COMPUTE,
        title="Select-Fortis",
        label="select fortis",
        requirements=[
            "The result output is a Pandas DataFrame containing a subset of rows from the `beaks` DataFrame where the species is 'fortis'.",
            "The result DataFrame retains the same columns and column names as the `beaks` DataFrame.",
        ],
        output_type=out_t,
    )


def beaks_ancestor() -> AncestorContract:
    t = ExtendedType.dataframe(
        beaks_df_type().columns,
        description="The structure of the dataset representing bird species and their beak dimensions.",
    )
    return AncestorContract(
        slug="beaks",
        title="beaks",
        requirements=("beaks is the dataframe for the `beaks` dataset.",),
        output_type=t,
    )


def test_select_fortis_template_matches_golden_byte_exact():
    rendered = render_template(select_fortis_node(), "select_fortis", [beaks_ancestor()])
    assert rendered == GOLDEN.read_text()


def test_template_structure():
    rendered = render_template(select_fortis_node(), "select_fortis", [beaks_ancestor()])
    assert rendered.startswith("# put all imports here\n")
    assert "def select_fortis(beaks: pd.DataFrame) -> pd.DataFrame:" in rendered
    assert "Preconditions:" in rendered
    assert PLACEHOLDER in rendered
    assert rendered.count("(DataFrame[") == 1


def test_two_ancestors_in_creation_order():
    node = Node(id="y", kind=NodeKind.COMPUTE, title="Combine", label="combine things",
                requirements=["combine a and b"], output_type=ExtendedType.scalar("float"))
    a = AncestorContract("alpha", "Alpha", ("alpha req",), ExtendedType.scalar("float"))
    b = AncestorContract("beta", "Beta", ("beta req",), ExtendedType.list_of(ExtendedType.scalar("int")))
    rendered = render_template(node, "combine", [a, b])
    assert "def combine(alpha: float, beta: list) -> float:" in rendered
    assert rendered.index("alpha (float)") < rendered.index("beta (list[int])")


def test_plot_node_returns_figure_contract():
    node = Node(
        id="z",
        kind=NodeKind.PLOT,
        title="Plot-Statistics",
        label="histogram of resampled means",
        requirements=["Plot a histogram of the resampled means."],
        output_type=ExtendedType.figure("Histogram of the resampled means."),
    )
    anc = AncestorContract(
        "bootstrap_average",
        "Bootstrap-Average",
        ("list of resampled means",),
        ExtendedType.list_of(ExtendedType.scalar("float"), meaning="resampled means"),
    )
    rendered = render_template(node, "plot_statistics", [anc])
    assert "def plot_statistics(bootstrap_average: list):" in rendered
    assert "Figure" in rendered
    assert "returns the data underlying the plot" in rendered


def test_load_node_has_no_args_section():
    node = Node(id="w", kind=NodeKind.LOAD, title="beaks", label="load beaks.csv",
                requirements=["Load the beaks dataset from beaks.csv."],
                output_type=beaks_df_type())
    rendered = render_template(node, "beaks", [])
    assert "def beaks() -> pd.DataFrame:" in rendered
    assert "Args:" not in rendered
    assert "Returns:" in rendered
