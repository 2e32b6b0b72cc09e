"""Project persistence: the graph, its checks/tests, and dataset manifest.

Project files are canonical JSON (sorted keys, stable formatting) so that
save/load round-trips are byte-stable and scripted builds reproduce
identical files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .checks import CheckSpec, TestSpec
from .graph import DataflowGraph, Phase

SCHEMA_VERSION = 1

PROJECT_SUFFIX = ".flowco.json"


class ProjectVersionError(ValueError):
    pass


def canonical_dumps(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, indent=1, ensure_ascii=False) + "\n"


def file_sha256(path: Path) -> str:
    hasher = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            hasher.update(chunk)
    return hasher.hexdigest()


@dataclass
class DatasetRef:
    name: str
    path: str  # relative to the project file
    sha256: str

    def to_json(self) -> dict[str, str]:
        return {"name": self.name, "path": self.path, "sha256": self.sha256}

    @classmethod
    def from_json(cls, doc: dict[str, str]) -> "DatasetRef":
        return cls(doc["name"], doc["path"], doc["sha256"])


@dataclass
class Project:
    graph: DataflowGraph
    checks: dict[str, list[CheckSpec]] = field(default_factory=dict)
    tests: dict[str, list[TestSpec]] = field(default_factory=dict)
    datasets: list[DatasetRef] = field(default_factory=list)
    transcript: str | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "graph": self.graph.to_json(),
            "checks": {nid: [c.to_json() for c in specs] for nid, specs in self.checks.items() if specs},
            "tests": {nid: [t.to_json() for t in specs] for nid, specs in self.tests.items() if specs},
            "datasets": [d.to_json() for d in self.datasets],
            "transcript": self.transcript,
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "Project":
        found = int(doc.get("schema_version", 0))
        if found > SCHEMA_VERSION:
            raise ProjectVersionError(
                f"project schema version {found} is newer than supported {SCHEMA_VERSION}"
            )
        return cls(
            graph=DataflowGraph.from_json(doc["graph"]),
            checks={nid: [CheckSpec.from_json(c) for c in specs] for nid, specs in doc.get("checks", {}).items()},
            tests={nid: [TestSpec.from_json(t) for t in specs] for nid, specs in doc.get("tests", {}).items()},
            datasets=[DatasetRef.from_json(d) for d in doc.get("datasets", [])],
            transcript=doc.get("transcript"),
        )

    def checks_for(self, node_id: str) -> list[CheckSpec]:
        return self.checks.setdefault(node_id, [])

    def tests_for(self, node_id: str) -> list[TestSpec]:
        return self.tests.setdefault(node_id, [])


def save_project(project: Project, path: str | Path) -> None:
    Path(path).write_text(canonical_dumps(project.to_json()))


def load_project(path: str | Path, verify_datasets: bool = True) -> tuple[Project, list[str]]:
    """Load a project file; dataset hash mismatches warn and dirty dependents."""
    path = Path(path)
    project = Project.from_json(json.loads(path.read_text()))
    warnings: list[str] = []
    if verify_datasets:
        for dataset in project.datasets:
            data_path = path.parent / dataset.path
            if not data_path.is_file():
                warnings.append(f"dataset {dataset.name} missing at {dataset.path}")
            elif file_sha256(data_path) != dataset.sha256:
                warnings.append(f"dataset {dataset.name} changed on disk; data-dependent nodes marked stale")
            else:
                continue
            for node in project.graph.nodes.values():
                if node.kind.value == "load" and node.phase is Phase.EVALUATED:
                    project.graph.invalidate(node.id, "code")
    return project, warnings
