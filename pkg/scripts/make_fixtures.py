#!/usr/bin/env python3
"""Regenerate the shipped fixtures: datasets, project files, and transcripts.

Everything is deterministic (seeded) so regeneration is reproducible:

    python scripts/make_fixtures.py [--out fixtures]
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from flowstudio.checks import CheckSpec
from flowstudio.graph import DataflowGraph
from flowstudio.llm.scripted import ScriptEntry, save_transcript
from flowstudio.project import DatasetRef, Project, file_sha256, save_project

SEED = 20240601

BEAKS = f"{1:032x}"
SELECT_FORTIS = f"{2:032x}"
BOOTSTRAP_AVERAGE = f"{3:032x}"
ESTIMATE_LENGTH = f"{4:032x}"
PLOT_STATISTICS = f"{5:032x}"
HISTOGRAM_LENGTHS = f"{6:032x}"
PLOT_LENGTH_DEPTH = f"{7:032x}"

BOOTSTRAP_CHECK_ID = "check-bootstrap-length"

DF_BEAKS = {
    "variant": "dataframe",
    "description": "The dataset of bird species and their beak dimensions.",
    "columns": [
        {"name": "species", "base": "string", "description": "The species name as a string."},
        {"name": "Beak length, mm", "base": "float", "description": "The length of the beak in millimeters."},
        {"name": "Beak depth, mm", "base": "float", "description": "The depth of the beak in millimeters."},
    ],
}

DF_FORTIS = {
    "variant": "dataframe",
    "description": "Rows of the beaks dataset where the species is 'fortis', with the original columns.",
    "columns": DF_BEAKS["columns"],
}

LIST_MEANS = {
    "variant": "list",
    "description": "Bootstrap resampled means of the Fortis beak lengths.",
    "element": {"variant": "scalar", "base": "float"},
    "meaning": "resampled mean beak lengths in millimeters",
}

TUPLE_CI = {
    "variant": "tuple",
    "description": "The 95% confidence interval for the mean Fortis beak length.",
    "elements": [
        {"variant": "scalar", "base": "float", "description": "Lower bound of the interval."},
        {"variant": "scalar", "base": "float", "description": "Upper bound of the interval."},
    ],
}


def write_beaks_csv(path: Path) -> None:
    rng = np.random.default_rng(SEED)
    n_fortis, n_scandens = 220, 186
    rows = []
    for _ in range(n_fortis):
        rows.append(("fortis", rng.normal(10.56, 0.55), rng.normal(8.9, 0.5)))
    for _ in range(n_scandens):
        rows.append(("scandens", rng.normal(14.1, 0.65), rng.normal(9.4, 0.5)))
    order = rng.permutation(len(rows))
    lines = ["species,\"Beak length, mm\",\"Beak depth, mm\""]
    for i in order:
        species, length, depth = rows[i]
        lines.append(f"{species},{length:.2f},{depth:.2f}")
    path.write_text("\n".join(lines) + "\n")


CODE_BEAKS = """\
import pandas as pd

def beaks() -> pd.DataFrame:
    return pd.read_csv("beaks.csv")
"""

CODE_SELECT_FORTIS = """\
import pandas as pd

def select_fortis(beaks: pd.DataFrame) -> pd.DataFrame:
    return beaks[beaks["species"] == "fortis"].reset_index(drop=True)
"""


def code_bootstrap(resamples: int) -> str:
    return f"""\
import numpy as np
import pandas as pd

def bootstrap_average(beaks: pd.DataFrame, select_fortis: pd.DataFrame) -> list:
    rng = np.random.default_rng({SEED})
    lengths = select_fortis["Beak length, mm"].to_numpy()
    return [float(rng.choice(lengths, size=lengths.size, replace=True).mean()) for _ in range({resamples})]
"""


CODE_ESTIMATE = """\
import numpy as np
import pandas as pd

def estimate_length(beaks: pd.DataFrame, select_fortis: pd.DataFrame, bootstrap_average: list) -> tuple:
    lo, hi = np.percentile(np.asarray(bootstrap_average), [2.5, 97.5])
    return (float(lo), float(hi))
"""

CODE_ESTIMATE_ROUNDED = """\
import numpy as np
import pandas as pd

def estimate_length(beaks: pd.DataFrame, select_fortis: pd.DataFrame, bootstrap_average: list) -> tuple:
    lo, hi = np.percentile(np.asarray(bootstrap_average), [2.5, 97.5])
    return (round(float(lo), 2), round(float(hi), 2))
"""

CODE_PLOT_STATISTICS = """\
import matplotlib.pyplot as plt
import pandas as pd

def plot_statistics(beaks: pd.DataFrame, select_fortis: pd.DataFrame, bootstrap_average: list):
    fig, ax = plt.subplots()
    ax.hist(bootstrap_average, bins=30, color="steelblue")
    sample_mean = float(select_fortis["Beak length, mm"].mean())
    ax.axvline(sample_mean, color="crimson", label="sample mean")
    ax.set_xlabel("resampled mean beak length, mm")
    ax.set_ylabel("count")
    ax.legend()
    return bootstrap_average
"""

CODE_HISTOGRAM_LENGTHS = """\
import matplotlib.pyplot as plt
import pandas as pd

def histogram_lengths(beaks: pd.DataFrame):
    fig, ax = plt.subplots()
    for species, group in beaks.groupby("species"):
        ax.hist(group["Beak length, mm"], bins=20, alpha=0.6, label=str(species))
    ax.set_xlabel("Beak length, mm")
    ax.set_ylabel("count")
    ax.legend()
    return beaks["Beak length, mm"]
"""

CODE_PLOT_LENGTH_DEPTH = """\
import matplotlib.pyplot as plt
import pandas as pd

def plot_length_depth(beaks: pd.DataFrame):
    fig, ax = plt.subplots()
    for species, group in beaks.groupby("species"):
        ax.scatter(group["Beak length, mm"], group["Beak depth, mm"], s=12, label=str(species))
    ax.set_xlabel("Beak length, mm")
    ax.set_ylabel("Beak depth, mm")
    ax.legend()
    return beaks[["Beak length, mm", "Beak depth, mm"]]
"""

REQS = {
    BEAKS: [
        "Load the beaks dataset from the file beaks.csv into a Pandas DataFrame.",
        "Keep the original columns: species, Beak length, mm, and Beak depth, mm.",
    ],
    SELECT_FORTIS: [
        "The result output is a Pandas DataFrame containing a subset of rows from the `beaks` DataFrame where the species is 'fortis'.",
        "The result DataFrame retains the same columns and column names as the `beaks` DataFrame.",
    ],
    BOOTSTRAP_AVERAGE: [
        "Resample the Fortis beak lengths with replacement, recording the mean of each resample.",
        "Return the resampled means as a list of floats.",
    ],
    ESTIMATE_LENGTH: [
        "Compute the 95% confidence interval for the mean Fortis beak length from the bootstrap resampled means using the percentile method.",
    ],
    PLOT_STATISTICS: [
        "Plot a histogram of the bootstrap resampled means.",
        "The plot includes the original sample mean computed from the beaks data.",
        "Return the resampled means so downstream nodes can use them.",
    ],
    HISTOGRAM_LENGTHS: [
        "Plot a histogram of the beak lengths.",
        "Use a color overlay to distinguish between the two species.",
        "Return the plotted beak lengths.",
    ],
    PLOT_LENGTH_DEPTH: [
        "Plot beak length versus beak depth as a scatter plot.",
        "Use different colors for different species.",
        "Return the plotted columns.",
    ],
}

BOOTSTRAP_FIX_REQS = [
    "Resample the Fortis beak lengths with replacement, recording the mean of each resample.",
    "Use at least 5,000 bootstrap resamples.",
    "Return the resampled means as a list of floats.",
]

OUTPUT_TYPES = {
    BEAKS: DF_BEAKS,
    SELECT_FORTIS: DF_FORTIS,
    BOOTSTRAP_AVERAGE: LIST_MEANS,
    ESTIMATE_LENGTH: TUPLE_CI,
    PLOT_STATISTICS: {
        "variant": "figure",
        "description": "Histogram of the bootstrap resampled means with the original sample mean marked.",
    },
    HISTOGRAM_LENGTHS: {
        "variant": "figure",
        "description": "Histogram of beak lengths with a color overlay distinguishing the species.",
    },
    PLOT_LENGTH_DEPTH: {
        "variant": "figure",
        "description": "Scatter plot of beak length versus beak depth, colored by species.",
    },
}

CODES = {
    BEAKS: CODE_BEAKS,
    SELECT_FORTIS: CODE_SELECT_FORTIS,
    BOOTSTRAP_AVERAGE: code_bootstrap(1000),
    ESTIMATE_LENGTH: CODE_ESTIMATE,
    PLOT_STATISTICS: CODE_PLOT_STATISTICS,
    HISTOGRAM_LENGTHS: CODE_HISTOGRAM_LENGTHS,
    PLOT_LENGTH_DEPTH: CODE_PLOT_LENGTH_DEPTH,
}


def make_graph() -> DataflowGraph:
    g = DataflowGraph(title="beaks")
    g.add_node("load", "beaks", "load beaks.csv", node_id=BEAKS)
    g.add_node("compute", "Select-Fortis", "select fortis", node_id=SELECT_FORTIS)
    g.add_node("compute", "Bootstrap-Average", "bootstrap resampled means", node_id=BOOTSTRAP_AVERAGE)
    g.add_node("compute", "Estimate-Length", "95% confidence interval for mean beak length", node_id=ESTIMATE_LENGTH)
    g.add_node("plot", "Plot-Statistics", "histogram of resampled means", node_id=PLOT_STATISTICS)
    g.add_node("plot", "Histogram-Lengths", "histogram of beak lengths", node_id=HISTOGRAM_LENGTHS)
    g.add_node("plot", "Plot-Length-Depth", "scatter of beak length vs depth", node_id=PLOT_LENGTH_DEPTH)
    g.add_edge(BEAKS, SELECT_FORTIS)
    g.add_edge(SELECT_FORTIS, BOOTSTRAP_AVERAGE)
    g.add_edge(BOOTSTRAP_AVERAGE, ESTIMATE_LENGTH)
    g.add_edge(BOOTSTRAP_AVERAGE, PLOT_STATISTICS)
    g.add_edge(BEAKS, HISTOGRAM_LENGTHS)
    g.add_edge(BEAKS, PLOT_LENGTH_DEPTH)
    return g


def requirements_entry(node_id: str) -> ScriptEntry:
    return ScriptEntry(
        step="requirements",
        node=f"^{node_id}$",
        response={
            "kind": "structured",
            "payload": {
                "precondition_issues": [],
                "requirements": REQS[node_id],
                "output_type": OUTPUT_TYPES[node_id],
            },
        },
    )


def code_entry(node_id: str) -> ScriptEntry:
    return ScriptEntry(step="code", node=f"^{node_id}$", response={"kind": "text", "text": CODES[node_id]})


def build_entries() -> list[ScriptEntry]:
    entries = []
    for nid in (BEAKS, SELECT_FORTIS, BOOTSTRAP_AVERAGE, ESTIMATE_LENGTH,
                PLOT_STATISTICS, HISTOGRAM_LENGTHS, PLOT_LENGTH_DEPTH):
        entries.append(requirements_entry(nid))
        entries.append(code_entry(nid))
    # Builds after an upstream fix re-check locked nodes if the user locked any.
    entries.append(ScriptEntry(step="locked_check",
                               response={"kind": "structured", "payload": {"consistent": True, "warnings": []}}))
    return entries


def validation_entries() -> list[ScriptEntry]:
    check_code = (
        "assert len(bootstrap_average) >= 5000, "
        "f\"only {len(bootstrap_average)} resamples were used\""
    )
    entries = [
        # The manual length check compiles to a plain assertion.
        ScriptEntry(
            step="check_compile",
            node=f"^{BOOTSTRAP_AVERAGE}$",
            response={"kind": "structured", "payload": {"code": check_code}},
        ),
        # The Fix button routes the failing check into a local repair.
        ScriptEntry(
            step="repair",
            node=f"^{BOOTSTRAP_AVERAGE}$",
            content="check_failure",
            response={
                "kind": "structured",
                "payload": {"code": code_bootstrap(5000), "requirements": BOOTSTRAP_FIX_REQS},
            },
        ),
        # Suggested checks for the bootstrap node include a length bound.
        ScriptEntry(
            step="check_suggest",
            node=f"^{BOOTSTRAP_AVERAGE}$",
            response={
                "kind": "structured",
                "payload": {
                    "checks": [
                        "Verify that the length of the bootstrap_average list is at least 5,000",
                        "Verify that every resampled mean lies between the minimum and maximum Fortis beak length",
                    ]
                },
            },
        ),
        ScriptEntry(
            step="check_suggest",
            node=f"^{HISTOGRAM_LENGTHS}$",
            response={
                "kind": "structured",
                "payload": {
                    "checks": [
                        "The plot uses a color overlay to distinguish between the two species",
                        "The histogram of beak lengths is bimodal",
                    ]
                },
            },
        ),
        # Qualitative checks do not compile; they are judged visually.
        ScriptEntry(
            step="check_compile",
            node=f"^{HISTOGRAM_LENGTHS}$",
            response={"kind": "structured", "payload": {"code": None}},
        ),
        ScriptEntry(
            step="check_vision",
            node=f"^{HISTOGRAM_LENGTHS}$",
            response={
                "kind": "structured",
                "payload": {
                    "verdict": "pass",
                    "rationale": "The two species are drawn in clearly distinct overlaid colors.",
                },
            },
        ),
        # Unit tests for Select-Fortis.
        ScriptEntry(
            step="test_suggest",
            node=f"^{SELECT_FORTIS}$",
            response={
                "kind": "structured",
                "payload": {
                    "tests": [
                        "Test with a DataFrame containing multiple species, including 'fortis'.",
                        "Test with a DataFrame containing no 'fortis' species.",
                        "Test with an empty DataFrame.",
                    ]
                },
            },
        ),
        ScriptEntry(
            step="test_compile",
            node=f"^{SELECT_FORTIS}$",
            content="empty DataFrame",
            response={
                "kind": "structured",
                "payload": {
                    "code": (
                        "import pandas as pd\n"
                        "empty = pd.DataFrame({'species': pd.Series(dtype=str), "
                        "'Beak length, mm': pd.Series(dtype=float), 'Beak depth, mm': pd.Series(dtype=float)})\n"
                        "out = select_fortis(empty)\n"
                        "assert len(out) == 0, f'expected empty result, got {len(out)} rows'\n"
                        "assert list(out.columns) == list(empty.columns), 'columns must be preserved'\n"
                    )
                },
            },
        ),
        ScriptEntry(
            step="test_compile",
            node=f"^{SELECT_FORTIS}$",
            content="no 'fortis'",
            response={
                "kind": "structured",
                "payload": {
                    "code": (
                        "import pandas as pd\n"
                        "df = pd.DataFrame({'species': ['scandens', 'magnirostris'], "
                        "'Beak length, mm': [14.0, 15.2], 'Beak depth, mm': [9.3, 9.9]})\n"
                        "out = select_fortis(df)\n"
                        "assert len(out) == 0, 'no fortis rows expected'\n"
                        "assert list(out.columns) == list(df.columns), 'columns must be preserved'\n"
                    )
                },
            },
        ),
        ScriptEntry(
            step="test_compile",
            node=f"^{SELECT_FORTIS}$",
            content="multiple species",
            response={
                "kind": "structured",
                "payload": {
                    "code": (
                        "import pandas as pd\n"
                        "df = pd.DataFrame({'species': ['fortis', 'scandens', 'fortis'], "
                        "'Beak length, mm': [10.1, 14.0, 10.9], 'Beak depth, mm': [8.8, 9.3, 9.0]})\n"
                        "out = select_fortis(df)\n"
                        "assert len(out) == 2, f'expected 2 fortis rows, got {len(out)}'\n"
                        "assert set(out['species']) == {'fortis'}\n"
                        "assert list(out.columns) == list(df.columns)\n"
                    )
                },
            },
        ),
    ]
    return entries


def ama_describe_entries() -> list[ScriptEntry]:
    histogram_code = (
        "import matplotlib.pyplot as plt\n"
        "fig, axes = plt.subplots(1, 2, figsize=(10, 4))\n"
        "axes[0].hist(beaks['Beak length, mm'], bins=20, color='steelblue')\n"
        "axes[0].set_title('Beak length, mm')\n"
        "axes[1].hist(beaks['Beak depth, mm'], bins=20, color='seagreen')\n"
        "axes[1].set_title('Beak depth, mm')\n"
        "plt.tight_layout()\n"
    )
    final_text = (
        "The dataset contains 406 rows and 3 columns: species (string), Beak length, mm (float), "
        "and Beak depth, mm (float), with no missing values. Beak lengths are bimodal with peaks "
        "near 10.6 mm and 14.1 mm, suggesting two distinct species groups; beak depths are roughly "
        "unimodal around 9 mm. The species column separates the two groups, so the dataset is well "
        "suited to comparing beak dimensions across species."
    )
    return [
        ScriptEntry(
            step="ama", attempt=1, max_uses=1,
            response={
                "kind": "tool_calls",
                "tool_calls": [
                    {
                        "name": "run_snippet",
                        "arguments": {
                            "code": "print(beaks.shape)\nprint(beaks.dtypes)\nbeaks.isna().sum().sum()",
                            "bindings": ["beaks"],
                            "rationale": "Inspect the structure of the dataset and confirm no values are missing.",
                        },
                        "id": "call-1",
                    }
                ],
            },
        ),
        ScriptEntry(
            step="ama", attempt=2, max_uses=1,
            response={
                "kind": "tool_calls",
                "tool_calls": [
                    {
                        "name": "run_snippet",
                        "arguments": {
                            "code": "beaks.describe()",
                            "bindings": ["beaks"],
                            "rationale": "Generate descriptive statistics for the numerical columns.",
                        },
                        "id": "call-2",
                    }
                ],
            },
        ),
        ScriptEntry(
            step="ama", attempt=3, max_uses=1,
            response={
                "kind": "tool_calls",
                "tool_calls": [
                    {
                        "name": "run_snippet",
                        "arguments": {
                            "code": histogram_code,
                            "bindings": ["beaks"],
                            "rationale": "Plot histograms for beak length and depth to inspect their distributions.",
                        },
                        "id": "call-3",
                    }
                ],
            },
        ),
        ScriptEntry(
            step="ama", attempt=4, max_uses=1,
            response={"kind": "text", "chunks": [final_text[:120], final_text[120:260], final_text[260:]]},
        ),
    ]


def ama_colors_entries() -> list[ScriptEntry]:
    return [
        ScriptEntry(
            step="ama", attempt=1, max_uses=1,
            response={
                "kind": "tool_calls",
                "tool_calls": [
                    {
                        "name": "edit_graph",
                        "arguments": {
                            "edits": [
                                {"op": "set_layer", "node": HISTOGRAM_LENGTHS, "layer": "requirements",
                                 "content": REQS[HISTOGRAM_LENGTHS]},
                                {"op": "set_layer", "node": PLOT_LENGTH_DEPTH, "layer": "requirements",
                                 "content": REQS[PLOT_LENGTH_DEPTH]},
                            ],
                            "rationale": "Both plot nodes should color points and bars by species so the two species are visually distinct.",
                        },
                        "id": "call-1",
                    }
                ],
            },
        ),
        ScriptEntry(
            step="ama", attempt=2, max_uses=1,
            response={
                "kind": "text",
                "text": "I updated both plot nodes to use different colors for the two species. "
                        "The affected nodes are marked stale; press Run to refresh the plots.",
            },
        ),
    ]


def ama_runaway_entries() -> list[ScriptEntry]:
    return [
        ScriptEntry(
            step="ama",
            response={
                "kind": "tool_calls",
                "tool_calls": [
                    {"name": "inspect_graph", "arguments": {"rationale": "looking again"}, "id": "loop"}
                ],
            },
        )
    ]


def node_round_entries() -> list[ScriptEntry]:
    rounded_requirements = REQS[ESTIMATE_LENGTH] + ["Round both interval bounds to two decimal places."]
    return [
        ScriptEntry(
            step="node_ama", attempt=1, max_uses=1,
            response={
                "kind": "tool_calls",
                "tool_calls": [
                    {
                        "name": "edit_graph",
                        "arguments": {
                            "edits": [
                                {"op": "set_layer", "node": ESTIMATE_LENGTH, "layer": "requirements",
                                 "content": rounded_requirements},
                                {"op": "set_layer", "node": ESTIMATE_LENGTH, "layer": "code",
                                 "content": CODE_ESTIMATE_ROUNDED},
                            ],
                            "rationale": "Round the interval bounds to two decimal places as requested, keeping requirements and code aligned.",
                        },
                        "id": "call-1",
                    }
                ],
            },
        ),
        ScriptEntry(
            step="consistency", node=f"^{ESTIMATE_LENGTH}$",
            response={"kind": "structured", "payload": {"consistent": True, "warnings": []}},
        ),
        ScriptEntry(
            step="node_ama", attempt=2, max_uses=1,
            response={
                "kind": "text",
                "text": "The estimate is now rounded to two decimal places; requirements and code were updated together.",
            },
        ),
    ]


def ui_entries() -> list[ScriptEntry]:
    """Entries for the web UI integration flow: edit, propagate, save."""
    new_requirements = REQS[PLOT_STATISTICS] + ["The plot highlights the interval bounds."]
    new_code = CODE_PLOT_STATISTICS.replace(
        'ax.legend()',
        'ax.axvline(sorted(bootstrap_average)[len(bootstrap_average) // 40], color="gray")\n    ax.legend()',
    )
    return [
        ScriptEntry(
            step="propagate", node=f"^{PLOT_STATISTICS}$",
            response={
                "kind": "structured",
                "payload": {
                    "title": "Plot-Statistics",
                    "label": "histogram of resampled means with interval bounds",
                    "requirements": new_requirements,
                    "code": new_code,
                },
            },
        ),
        ScriptEntry(
            step="consistency", node=f"^{PLOT_STATISTICS}$",
            response={"kind": "structured", "payload": {"consistent": True, "warnings": []}},
        ),
    ]


def example_graph(title: str, nodes: list[tuple[str, str, str]], edges: list[tuple[int, int]]) -> Project:
    g = DataflowGraph(title=title)
    ids = []
    for kind, node_title, label in nodes:
        ids.append(g.add_node(kind, node_title, label, node_id=f"{title}-{len(ids):02d}".encode().hex()[:32].ljust(32, "0")))
    for src, dst in edges:
        g.add_edge(ids[src], ids[dst])
    return Project(graph=g)


def write_example_graphs(out: Path) -> None:
    geyser = example_graph(
        "geyser",
        [
            ("load", "geyser", "load old_faithful.csv"),
            ("plot", "Duration-vs-Wait", "scatter of eruption duration vs waiting time"),
            ("compute", "K-Means-Clusters", "cluster eruptions into two groups by duration and waiting time"),
            ("compute", "Linear-Regression", "fit a linear model to each cluster"),
            ("plot", "Plot-Regressions", "clustered scatter with regression lines overlaid"),
        ],
        [(0, 1), (0, 2), (2, 3), (3, 4)],
    )
    multiverse = example_graph(
        "multiverse",
        [
            ("load", "mortgage", "load mortgage.csv"),
            ("compute", "Scale-Column", "scale the accept column by 100"),
            ("compute", "Non-Empty-Subsets", "all non-empty subsets of control variables that include female"),
            ("compute", "Linear-Regression", "fit a regression model for each subset"),
            ("compute", "Compute-Influence", "influence of each control variable on the female coefficient"),
            ("plot", "Female-Coefficients", "histogram of female coefficient values"),
        ],
        [(0, 1), (0, 2), (1, 3), (2, 3), (3, 4), (3, 5)],
    )
    logistic = example_graph(
        "logistic",
        [
            ("load", "mortgage", "load mortgage.csv"),
            ("compute", "Drop-Deny", "remove the deny column"),
            ("compute", "Split-Train-Test", "split into 80% training and 20% testing sets"),
            ("compute", "Cross-Validation", "10-fold cross validation on the training data"),
            ("plot", "Accuracies", "box plot of accuracy scores across folds"),
            ("compute", "Logistic-Regression", "train a logistic model on the accept label"),
            ("compute", "Predict", "add predictions to the test data"),
            ("compute", "Test-Accuracy", "accuracy on the test data"),
            ("compute", "Confusion-Matrix", "confusion matrix for the test data"),
            ("compute", "Accuracy-Consistency", "cross-validation accuracy is consistent with test accuracy"),
        ],
        [(0, 1), (1, 2), (2, 3), (3, 4), (2, 5), (5, 6), (6, 7), (6, 8), (3, 9), (7, 9)],
    )
    for project, name in ((geyser, "geyser"), (multiverse, "multiverse"), (logistic, "logistic")):
        save_project(project, out / f"{name}.flowco.json")


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "fixtures"))
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    write_beaks_csv(out / "beaks.csv")

    graph = make_graph()
    project = Project(
        graph=graph,
        datasets=[DatasetRef(name="beaks", path="beaks.csv", sha256=file_sha256(out / "beaks.csv"))],
    )
    project.checks_for(BOOTSTRAP_AVERAGE).append(
        CheckSpec(
            id=BOOTSTRAP_CHECK_ID,
            node_id=BOOTSTRAP_AVERAGE,
            text="Verify that the length of the bootstrap_average list is at least 5,000",
            kind="quantitative",
        )
    )
    save_project(project, out / "beaks.flowco.json")

    save_transcript(out / "beaks_build.jsonl", build_entries())
    save_transcript(out / "beaks_validation.jsonl", build_entries() + validation_entries())
    save_transcript(
        out / "ui_session.jsonl",
        build_entries() + validation_entries() + ui_entries() + ama_describe_entries(),
    )
    save_transcript(out / "ama_describe.jsonl", ama_describe_entries())
    save_transcript(out / "ama_colors.jsonl", ama_colors_entries())
    save_transcript(out / "ama_runaway.jsonl", ama_runaway_entries())
    save_transcript(out / "node_round.jsonl", node_round_entries())
    write_example_graphs(out)
    print(f"fixtures written to {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
