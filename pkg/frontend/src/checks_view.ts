/**
 * Checks and Tests views: prose specs per node, suggestion flow, run
 * results, and the Fix affordance on failures.
 *
 * Specs live out of the way of graph editing; they only run when the user
 * asks. Suggestions are listed for explicit approval before anything is
 * saved to the project.
 */

import { Api } from "./api.js";
import type { CheckDoc, ProjectDoc, TestDoc } from "./types.js";

type SpecKind = "checks" | "tests";

export class SpecDialog {
  root: HTMLElement;
  suggestions: string[] = [];

  constructor(
    private api: Api,
    private projectId: string,
    private nodeId: string,
    private specKind: SpecKind,
    private onChanged: () => void,
  ) {
    this.root = document.createElement("div");
    this.root.className = `dialog spec-dialog spec-${specKind}`;
    this.root.dataset.nodeId = nodeId;
  }

  async open(parent: HTMLElement, project: ProjectDoc): Promise<void> {
    parent.appendChild(this.root);
    this.render(project);
  }

  render(project: ProjectDoc): void {
    const specs: (CheckDoc | TestDoc)[] =
      this.specKind === "checks" ? project.checks[this.nodeId] ?? [] : project.tests[this.nodeId] ?? [];
    this.root.innerHTML = `
      <div class="dialog-header">
        <span class="dialog-title">${this.specKind === "checks" ? "Checks" : "Tests"}</span>
        <button class="btn-suggest">Suggest</button>
        <button class="btn-close">Close</button>
      </div>
      <ul class="spec-list">
        ${specs
          .map(
            (spec) => `
          <li class="spec status-${spec.last_result?.status ?? "unknown"}">
            <span class="spec-text">${escapeHtml(spec.text)}</span>
            ${spec.last_result ? `<span class="spec-status">${spec.last_result.status}</span>` : ""}
          </li>`,
          )
          .join("")}
      </ul>
      <form class="add-spec">
        <input class="new-spec-text" placeholder="Add a ${this.specKind === "checks" ? "check" : "test"}…">
        <button type="submit">Add</button>
      </form>
      <ul class="suggestions">
        ${this.suggestions
          .map(
            (text, index) => `
          <li><button class="btn-approve" data-index="${index}">Add</button> ${escapeHtml(text)}</li>`,
          )
          .join("")}
      </ul>
    `;
    this.wire();
  }

  private wire(): void {
    this.root.querySelector(".btn-close")?.addEventListener("click", () => this.root.remove());
    this.root.querySelector(".btn-suggest")?.addEventListener("click", () => void this.suggest());
    this.root.querySelector(".add-spec")?.addEventListener("submit", (event) => {
      event.preventDefault();
      const input = this.root.querySelector<HTMLInputElement>(".new-spec-text")!;
      if (input.value.trim()) void this.add(input.value.trim());
    });
    this.root.querySelectorAll<HTMLButtonElement>(".btn-approve").forEach((button) => {
      button.addEventListener("click", () => {
        const text = this.suggestions[Number(button.dataset.index)];
        if (text) void this.add(text);
      });
    });
  }

  async suggest(): Promise<void> {
    const response =
      this.specKind === "checks"
        ? await this.api.suggestChecks(this.projectId, this.nodeId)
        : await this.api.suggestTests(this.projectId, this.nodeId);
    this.suggestions = response.suggestions;
    this.render(await this.api.getProject(this.projectId));
  }

  async add(text: string): Promise<void> {
    if (this.specKind === "checks") await this.api.addCheck(this.projectId, this.nodeId, text);
    else await this.api.addTest(this.projectId, this.nodeId, text);
    this.suggestions = this.suggestions.filter((s) => s !== text);
    this.onChanged();
    this.render(await this.api.getProject(this.projectId));
  }
}

/** Per-node spec results for the canvas overlay and the details panel. */
export function failingNodes(project: ProjectDoc, specKind: SpecKind): Set<string> {
  const table = specKind === "checks" ? project.checks : project.tests;
  const failing = new Set<string>();
  for (const [nodeId, specs] of Object.entries(table)) {
    for (const spec of specs) {
      const status = spec.last_result?.status;
      if (status === "fail" || status === "error") failing.add(nodeId);
    }
  }
  return failing;
}

export function renderResultsList(
  container: HTMLElement,
  project: ProjectDoc,
  specKind: SpecKind,
  onFix: (nodeId: string) => void,
): void {
  const table = specKind === "checks" ? project.checks : project.tests;
  const titles = new Map(project.graph.nodes.map((node) => [node.id, node.title]));
  const list = document.createElement("ul");
  list.className = `results-list results-${specKind}`;
  for (const [nodeId, specs] of Object.entries(table)) {
    for (const spec of specs) {
      const item = document.createElement("li");
      const status = spec.last_result?.status ?? "unknown";
      item.className = `result status-${status}`;
      item.dataset.nodeId = nodeId;
      const message = spec.last_result?.message ? ` — ${spec.last_result.message}` : "";
      item.textContent = `${titles.get(nodeId) ?? nodeId}: ${spec.text} [${status}]${message}`;
      if (status === "fail" || status === "error") {
        const fix = document.createElement("button");
        fix.className = "btn-fix";
        fix.textContent = "Fix";
        fix.addEventListener("click", () => onFix(nodeId));
        item.appendChild(fix);
      }
      list.appendChild(item);
    }
  }
  container.replaceChildren(list);
}

function escapeHtml(text: string): string {
  return text.replace(/[&<>]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;" })[c]!);
}
