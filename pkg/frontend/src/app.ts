/**
 * Application shell: wires the canvas, panels, dialogs, and chat to the API
 * and keeps them reconciled with graph-version events.
 */

import { Api } from "./api.js";
import { ChatPanel } from "./ama.js";
import { renderGraph } from "./canvas.js";
import { failingNodes, renderResultsList, SpecDialog } from "./checks_view.js";
import { NodeEditDialog } from "./dialog.js";
import { renderDetailsPanel, renderProjectPanel, PanelCallbacks } from "./panels.js";
import type { Abstraction, ProjectDoc, View } from "./types.js";

export class App {
  api: Api;
  project: ProjectDoc | null = null;
  projectId = "";
  view: View = "edit";
  abstraction: Abstraction = "label";
  selected: string | null = null;
  busyLabel: string | null = null;
  busyNodes = new Set<string>();
  chat: ChatPanel | null = null;

  constructor(
    private root: HTMLElement,
    base = "",
  ) {
    this.api = new Api(base);
    this.root.innerHTML = `
      <div class="layout">
        <aside class="project-panel"></aside>
        <main class="canvas-host"></main>
        <aside class="details-panel"></aside>
      </div>
      <div class="results-host"></div>
      <div class="dialog-host"></div>
    `;
  }

  async openProject(path: string): Promise<void> {
    const imported = await this.api.importProject(path);
    this.projectId = imported.project_id;
    await this.refresh();
    this.chat = new ChatPanel(this.api, this.projectId, () => void this.refresh());
    this.root.querySelector(".ama-slot")?.appendChild(this.chat.root);
    this.subscribe();
  }

  private subscribe(): void {
    // Long-lived version-event subscription; re-arm if the stream drops.
    void this.api
      .events(this.projectId, (event) => {
        if (event.type === "graph_version_changed" || event.type === "job_finished") {
          void this.refresh();
        }
      })
      .catch(() => setTimeout(() => this.subscribe(), 2_000));
  }

  async refresh(): Promise<void> {
    this.project = await this.api.getProject(this.projectId);
    this.render();
  }

  private callbacks(): PanelCallbacks {
    return {
      onRun: () => void this.runBuild(),
      onCheck: () => void this.runSpecs("checks"),
      onTest: () => void this.runSpecs("tests"),
      onViewChange: (view) => {
        this.view = view;
        this.render();
      },
      onAbstractionChange: (level) => {
        this.abstraction = level;
        this.render();
      },
      onFix: (nodeId) => void this.fixNode(nodeId),
      onGlobalRepair: (nodeId) => void this.globalRepair(nodeId),
      onLockToggle: (nodeId, locked) => {
        void this.api.setLock(this.projectId, nodeId, locked).then(() => this.refresh());
      },
    };
  }

  render(): void {
    if (!this.project) return;
    const callbacks = this.callbacks();
    renderProjectPanel(
      this.root.querySelector(".project-panel")!,
      this.view,
      this.abstraction,
      this.busyLabel,
      callbacks,
    );
    if (this.chat) this.root.querySelector(".ama-slot")?.appendChild(this.chat.root);
    renderGraph(
      this.root.querySelector(".canvas-host")!,
      this.project.graph,
      {
        view: this.view,
        selected: this.selected,
        failingChecks: failingNodes(this.project, this.view === "tests" ? "tests" : "checks"),
        busy: this.busyNodes,
        artifactUrl: (sha) => this.api.artifactUrl(sha),
      },
      {
        onSelect: (nodeId) => {
          this.selected = nodeId;
          this.render();
        },
        onEdit: (nodeId) => void this.openEditor(nodeId),
        onFix: (nodeId) => void this.fixNode(nodeId),
      },
    );
    renderDetailsPanel(
      this.root.querySelector(".details-panel")!,
      this.api,
      this.project,
      this.selected,
      this.abstraction,
      callbacks,
    );
    if (this.view !== "edit") {
      renderResultsList(
        this.root.querySelector(".results-host")!,
        this.project,
        this.view,
        (nodeId) => void this.fixNode(nodeId),
      );
    } else {
      this.root.querySelector(".results-host")!.replaceChildren();
    }
  }

  async openEditor(nodeId: string): Promise<void> {
    const host = this.root.querySelector<HTMLElement>(".dialog-host")!;
    if (this.view === "edit") {
      const dialog = new NodeEditDialog(this.api, this.projectId, nodeId, {
        abstraction: this.abstraction,
        onSaved: () => void this.refresh(),
      });
      await dialog.open(host);
    } else {
      const dialog = new SpecDialog(
        this.api,
        this.projectId,
        nodeId,
        this.view,
        () => void this.refresh(),
      );
      await dialog.open(host, this.project!);
    }
  }

  private async withBusy(label: string, work: () => Promise<void>): Promise<void> {
    this.busyLabel = label;
    this.render();
    try {
      await work();
    } finally {
      this.busyLabel = null;
      await this.refresh();
    }
  }

  async runBuild(): Promise<void> {
    await this.withBusy("building", async () => {
      const snapshot = await this.canvasSnapshot();
      let canvasImage: string | undefined;
      if (snapshot) {
        canvasImage = (await this.api.uploadArtifact(snapshot)).sha256;
      }
      const job = await this.api.run(this.projectId, undefined, canvasImage);
      await this.api.waitJob(job.job_id);
    });
  }

  /** Optional multi-modal input: a PNG snapshot of the rendered canvas. */
  private async canvasSnapshot(): Promise<Blob | null> {
    const svg = this.root.querySelector<SVGSVGElement>(".canvas-host svg");
    if (!svg || typeof (window as { createImageBitmap?: unknown }).createImageBitmap !== "function") {
      return null; // headless or unsupported: snapshots are optional
    }
    try {
      const xml = new XMLSerializer().serializeToString(svg);
      const blob = new Blob([xml], { type: "image/svg+xml" });
      const bitmap = await createImageBitmap(blob);
      const canvas = document.createElement("canvas");
      canvas.width = bitmap.width;
      canvas.height = bitmap.height;
      canvas.getContext("2d")?.drawImage(bitmap, 0, 0);
      return await new Promise((resolve) => canvas.toBlob(resolve, "image/png"));
    } catch {
      return null;
    }
  }

  async runSpecs(kind: "checks" | "tests"): Promise<void> {
    await this.withBusy(kind === "checks" ? "checking" : "testing", async () => {
      const job = kind === "checks" ? await this.api.runChecks(this.projectId) : await this.api.runTests(this.projectId);
      await this.api.waitJob(job.job_id);
    });
    this.view = kind;
    this.render();
  }

  async fixNode(nodeId: string): Promise<void> {
    this.busyNodes.add(nodeId);
    this.render();
    try {
      const job = await this.api.fixNode(this.projectId, nodeId);
      await this.api.waitJob(job.job_id);
      await this.runSpecs(this.view === "tests" ? "tests" : "checks");
    } finally {
      this.busyNodes.delete(nodeId);
      await this.refresh();
    }
  }

  async globalRepair(nodeId: string): Promise<void> {
    const proposal = await fetch(
      `${this.api.base}/api/projects/${this.projectId}/nodes/${nodeId}/global-repair`,
      { method: "POST" },
    ).then((response) => response.json());
    const ok = window.confirm(`Apply global repair?\n\n${proposal.rationale}`);
    if (!ok) return;
    await fetch(`${this.api.base}/api/projects/${this.projectId}/nodes/${nodeId}/global-repair/apply`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(proposal),
    });
    await this.refresh();
  }
}

export function mount(selector = "#app", base = ""): App {
  const root = document.querySelector<HTMLElement>(selector);
  if (!root) throw new Error(`no element matches ${selector}`);
  return new App(root, base);
}
