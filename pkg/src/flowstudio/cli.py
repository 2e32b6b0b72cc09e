"""Command-line interface: run, check, test, fix, export-notebook, replay, serve.

Exit codes: 0 all green, 1 failures, 2 usage errors.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .build import Builder, GraphHost
from .checks import ValidationEngine
from .config import EngineConfig, load_llm_config
from .graph import Phase, slug_map
from .kernel import KernelPool
from .llm import Gateway, ScriptedBackend
from .llm.live import LiveBackend
from .project import canonical_dumps, load_project, save_project
from .store import ValueStore


def _make_backend(llm: str, store: ValueStore, verify_hash: bool = False):
    if llm.startswith("scripted:"):
        return ScriptedBackend.from_file(llm.split(":", 1)[1], verify_hash=verify_hash)
    if llm == "live":
        cfg = load_llm_config()
        if not cfg.endpoint:
            raise click.UsageError(
                "no live endpoint configured; set FLOWSTUDIO_LLM_ENDPOINT or pass --llm scripted:<transcript>"
            )
        return LiveBackend(cfg.endpoint, cfg.model, cfg.api_key or None, store=store)
    raise click.UsageError(f"unknown --llm value {llm!r}; use 'live' or 'scripted:<path>'")


class Session:
    """Everything a CLI command needs around one project file."""

    def __init__(self, project_path: Path, llm: str, store: str | None, pool_size: int,
                 max_repairs: int, timeout: float, verify_hash: bool = False):
        self.path = project_path
        self.project, self.warnings = load_project(project_path)
        store_root = Path(store) if store else project_path.parent / ".store"
        self.store = ValueStore(store_root)
        self.config = EngineConfig(pool_size=pool_size, max_repairs=max_repairs, exec_timeout_s=timeout)
        self.backend = _make_backend(llm, self.store, verify_hash=verify_hash)
        self.gateway = Gateway(self.backend, concurrency=self.config.llm_concurrency)
        self.pool = KernelPool(
            self.store.root, size=pool_size, workdir=project_path.parent, default_timeout_s=timeout
        )
        self.host = GraphHost(self.project.graph)
        self.builder = Builder(self.host, self.gateway, self.pool, self.config)
        self.validation = ValidationEngine(self.project, self.gateway, self.pool, self.config)

    def __enter__(self):
        for warning in self.warnings:
            click.echo(f"warning: {warning}", err=True)
        self.pool.start()
        return self

    def __exit__(self, *exc):
        self.pool.close()

    def save(self):
        save_project(self.project, self.path)

    def resolve_node(self, selector: str) -> str:
        graph = self.project.graph
        if selector in graph.nodes:
            return selector
        for nid, slug in slug_map(graph).items():
            if slug == selector or graph.nodes[nid].title == selector:
                return nid
        raise click.UsageError(f"no node named {selector!r}")


def _project_options(fn):
    fn = click.argument("project_path", metavar="PROJECT", type=click.Path(exists=True, path_type=Path))(fn)
    fn = click.option("--llm", default="live", show_default=True,
                      help="'live' or 'scripted:<transcript.jsonl>'")(fn)
    fn = click.option("--store", default=None, help="value store root (default: <project dir>/.store)")(fn)
    fn = click.option("--pool-size", default=4, show_default=True, type=int)(fn)
    fn = click.option("--max-repairs", default=3, show_default=True, type=int,
                      help="local repair attempts per node per build")(fn)
    fn = click.option("--timeout", default=60.0, show_default=True, type=float,
                      help="kernel execution timeout in seconds")(fn)
    return fn


@click.group()
def main():
    """Author, build, validate, and serve dataflow analyses."""


@main.command()
@_project_options
@click.option("--target", "targets", multiple=True, help="build only these nodes (and needed ancestors)")
def run(project_path, llm, store, pool_size, max_repairs, timeout, targets):
    """Build the graph: synthesize requirements and code, evaluate every node."""
    with Session(project_path, llm, store, pool_size, max_repairs, timeout) as session:
        target_ids = {session.resolve_node(t) for t in targets} or None
        report = session.builder.build(target_ids)
        if llm.startswith("scripted:"):
            session.project.transcript = llm.split(":", 1)[1]
        session.save()
        for nid, outcome in sorted(report.nodes.items(), key=lambda kv: kv[0]):
            node = session.project.graph.nodes.get(nid)
            title = node.title if node else nid
            line = f"{title}: {outcome.phase.lower()}"
            if outcome.failure:
                line += f" ({outcome.failure['stage']}: {outcome.failure['message']})"
            if outcome.global_repair_offered:
                line += " [global repair available]"
            click.echo(line)
            for warning in outcome.warnings:
                click.echo(f"  warning: {warning}")
        for attempt in report.repair_log:
            node = session.project.graph.nodes.get(attempt.node_id)
            title = node.title if node else attempt.node_id
            click.echo(f"repair: {title} {attempt.trigger} attempt {attempt.attempt} -> {attempt.outcome}")
        click.echo(json.dumps({"ok": report.ok, "wall_time_s": round(report.wall_time_s, 3)}))
        sys.exit(0 if report.ok else 1)


def _ensure_evaluated(session: Session, node_ids: list[str] | None) -> None:
    graph = session.project.graph
    stale = [nid for nid in (node_ids or graph.nodes) if graph.nodes[nid].phase is not Phase.EVALUATED]
    if stale:
        session.builder.build(set(stale))


@main.command()
@_project_options
@click.option("--node", "nodes", multiple=True, help="check only these nodes")
def check(project_path, llm, store, pool_size, max_repairs, timeout, nodes):
    """Run the stored assertion checks against node outputs."""
    with Session(project_path, llm, store, pool_size, max_repairs, timeout) as session:
        node_ids = [session.resolve_node(n) for n in nodes] or None
        _ensure_evaluated(session, node_ids or list(session.project.checks))
        results = session.validation.run_checks(node_ids)
        session.save()
        failures = 0
        report = []
        for spec, outcome in results:
            title = session.project.graph.nodes[spec.node_id].title
            click.echo(f"{title}: {outcome.status} — {spec.text}" + (f" ({outcome.message})" if outcome.message else ""))
            report.append({"node": spec.node_id, "check": spec.text, **outcome.to_json()})
            failures += outcome.status != "pass"
        click.echo(json.dumps({"checks": len(results), "failures": failures}))
        sys.exit(1 if failures else 0)


@main.command()
@_project_options
@click.option("--node", "nodes", multiple=True, help="test only these nodes")
def test(project_path, llm, store, pool_size, max_repairs, timeout, nodes):
    """Run the stored unit tests against node functions."""
    with Session(project_path, llm, store, pool_size, max_repairs, timeout) as session:
        node_ids = [session.resolve_node(n) for n in nodes] or None
        results = session.validation.run_tests(node_ids)
        session.save()
        failures = 0
        for spec, outcome in results:
            title = session.project.graph.nodes[spec.node_id].title
            click.echo(f"{title}: {outcome.status} — {spec.text}" + (f" ({outcome.message})" if outcome.message else ""))
            failures += outcome.status != "pass"
        click.echo(json.dumps({"tests": len(results), "failures": failures}))
        sys.exit(1 if failures else 0)


@main.command()
@_project_options
@click.option("--node", "node", required=True, help="the failing node to fix")
def fix(project_path, llm, store, pool_size, max_repairs, timeout, node):
    """Repair a node with failing checks or tests, then re-run them."""
    with Session(project_path, llm, store, pool_size, max_repairs, timeout) as session:
        nid = session.resolve_node(node)
        _ensure_evaluated(session, [nid])
        checks, tests = session.validation.failing_specs(nid)
        if not checks and not tests:
            session.validation.run_checks([nid])
            session.validation.run_tests([nid])
        outcome = session.validation.fix_failures(nid, session.builder)
        session.save()
        click.echo(json.dumps(outcome))
        sys.exit(0 if outcome["fixed"] else 1)


@main.command("export-notebook")
@click.argument("project_path", metavar="PROJECT", type=click.Path(exists=True, path_type=Path))
@click.option("-o", "--out", "out_path", type=click.Path(path_type=Path), default=None)
def export_notebook_cmd(project_path, out_path):
    """Export the graph as a notebook that runs top to bottom."""
    from .notebook import ExportBlocked, export_notebook

    project, _ = load_project(project_path, verify_datasets=False)
    try:
        doc = export_notebook(project)
    except ExportBlocked as exc:
        click.echo(f"export blocked: {exc}", err=True)
        sys.exit(1)
    out_path = out_path or project_path.with_suffix(".ipynb")
    out_path.write_text(canonical_dumps(doc))
    click.echo(str(out_path))


@main.command()
@click.argument("transcript", type=click.Path(exists=True, path_type=Path))
@click.argument("project_path", metavar="PROJECT", type=click.Path(exists=True, path_type=Path))
@click.option("--store", default=None)
@click.option("--pool-size", default=4, type=int)
@click.option("--timeout", default=60.0, type=float)
def replay(transcript, project_path, store, pool_size, timeout):
    """Re-run a recorded build transcript and verify it reproduces exactly."""
    with Session(project_path, f"scripted:{transcript}", store, pool_size, 3, timeout, verify_hash=True) as session:
        report = session.builder.build()
        session.save()
        click.echo(json.dumps({"ok": report.ok, "llm_calls": session.backend.calls}))
        sys.exit(0 if report.ok else 1)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8321, show_default=True, type=int)
@click.option("--workdir", type=click.Path(path_type=Path), default=Path("."), show_default=True)
@click.option("--llm", default="live", show_default=True)
@click.option("--pool-size", default=4, show_default=True, type=int)
@click.option("--ui", "ui_dir", type=click.Path(path_type=Path), default=None,
              help="static web UI directory (default: ./frontend when present)")
def serve(host, port, workdir, llm, pool_size, ui_dir):
    """Serve the HTTP API (and the web UI, when built) for this workspace."""
    import uvicorn

    from .server import create_app

    if ui_dir is None and (Path("frontend") / "index.html").is_file():
        ui_dir = Path("frontend")
    app = create_app(workdir=workdir, llm=llm, pool_size=pool_size, frontend_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
