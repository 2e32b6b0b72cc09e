/**
 * The project panel (global actions, view and abstraction switches, chat)
 * and the details panel (selected node's output, type, layers, lock toggle,
 * repair affordances).
 */

import { Api } from "./api.js";
import type { Abstraction, NodeDoc, ProjectDoc, View } from "./types.js";

export interface PanelCallbacks {
  onRun: () => void;
  onCheck: () => void;
  onTest: () => void;
  onViewChange: (view: View) => void;
  onAbstractionChange: (level: Abstraction) => void;
  onFix: (nodeId: string) => void;
  onGlobalRepair: (nodeId: string) => void;
  onLockToggle: (nodeId: string, locked: boolean) => void;
}

export function renderProjectPanel(
  container: HTMLElement,
  view: View,
  abstraction: Abstraction,
  busyLabel: string | null,
  callbacks: PanelCallbacks,
): void {
  container.innerHTML = `
    <div class="actions">
      <button class="btn-run">Run</button>
      <button class="btn-check">Check</button>
      <button class="btn-test">Test</button>
      <span class="busy-indicator ${busyLabel ? "" : "hidden"}">⏳ ${busyLabel ?? ""}</span>
    </div>
    <div class="view-switch">
      ${(["edit", "checks", "tests"] as View[])
        .map(
          (v) =>
            `<label><input type="radio" name="view" value="${v}" ${v === view ? "checked" : ""}>${v}</label>`,
        )
        .join("")}
    </div>
    <div class="abstraction-switch">
      ${(["label", "requirements", "code"] as Abstraction[])
        .map(
          (level) =>
            `<label><input type="radio" name="abstraction" value="${level}" ${
              level === abstraction ? "checked" : ""
            }>${level}</label>`,
        )
        .join("")}
    </div>
    <div class="ama-slot"></div>
  `;
  container.querySelector(".btn-run")!.addEventListener("click", callbacks.onRun);
  container.querySelector(".btn-check")!.addEventListener("click", callbacks.onCheck);
  container.querySelector(".btn-test")!.addEventListener("click", callbacks.onTest);
  container.querySelectorAll<HTMLInputElement>("input[name=view]").forEach((input) => {
    input.addEventListener("change", () => callbacks.onViewChange(input.value as View));
  });
  container.querySelectorAll<HTMLInputElement>("input[name=abstraction]").forEach((input) => {
    input.addEventListener("change", () => callbacks.onAbstractionChange(input.value as Abstraction));
  });
}

export function renderDetailsPanel(
  container: HTMLElement,
  api: Api,
  project: ProjectDoc,
  nodeId: string | null,
  abstraction: Abstraction,
  callbacks: PanelCallbacks,
): void {
  const node: NodeDoc | undefined = project.graph.nodes.find((n) => n.id === nodeId);
  if (!node) {
    container.innerHTML = `<div class="details-empty">Select a node to see its output and layers.</div>`;
    return;
  }
  const checks = project.checks[node.id] ?? [];
  const failedChecks = checks.filter((c) => c.last_result && c.last_result.status !== "pass");
  const showFix = node.phase === "FAILED" || failedChecks.length > 0;
  const summary = node.result?.summary;

  container.innerHTML = `
    <h2 class="details-title">${escapeHtml(node.title)}</h2>
    <div class="details-phase phase-${node.phase}">${node.phase.toLowerCase()}</div>
    ${node.failure ? `<div class="details-failure">⚠ ${escapeHtml(node.failure.stage)}: ${escapeHtml(node.failure.message)}</div>` : ""}
    ${failedChecks.map((c) => `<div class="details-failure check">⚠ check: ${escapeHtml(c.text)}${c.last_result?.message ? ` — ${escapeHtml(c.last_result.message)}` : ""}</div>`).join("")}
    <div class="details-actions">
      <label class="lock-toggle"><input type="checkbox" class="lock-box" ${node.locked ? "checked" : ""}> locked</label>
      ${showFix ? '<button class="btn-fix">Fix</button>' : ""}
      ${node.phase === "FAILED" && node.repair_attempts >= 3 ? '<button class="btn-global-repair">Global repair…</button>' : ""}
    </div>
    <div class="details-output">
      ${node.figures.map((sha) => `<img class="figure" src="${api.artifactUrl(sha)}">`).join("")}
      ${summary ? `<pre class="summary">${escapeHtml(JSON.stringify(summary, null, 2))}</pre>` : ""}
    </div>
    <div class="details-type">${node.output_type ? `<pre>${escapeHtml(JSON.stringify(node.output_type, null, 2))}</pre>` : ""}</div>
    <div class="details-requirements ${abstraction === "label" ? "hidden" : ""}">
      <h3>Requirements</h3>
      <ul>${node.requirements.map((req) => `<li>${escapeHtml(req)}</li>`).join("")}</ul>
    </div>
    <div class="details-code ${abstraction === "code" ? "" : "hidden"}">
      <h3>Code</h3>
      <pre>${escapeHtml(node.code ?? "(not synthesized yet)")}</pre>
    </div>
  `;
  container.querySelector(".lock-box")?.addEventListener("change", (event) => {
    callbacks.onLockToggle(node.id, (event.target as HTMLInputElement).checked);
  });
  container.querySelector(".btn-fix")?.addEventListener("click", () => callbacks.onFix(node.id));
  container.querySelector(".btn-global-repair")?.addEventListener("click", () => callbacks.onGlobalRepair(node.id));
}

function escapeHtml(text: string): string {
  return text.replace(/[&<>]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;" })[c]!);
}
