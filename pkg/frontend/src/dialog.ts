/**
 * The node editor dialog: direct edits to title, summary label, requirements,
 * and code, with layer-consistency tracking.
 *
 * Editing any layer marks the draft inconsistent and surfaces a warning with
 * per-layer propagation buttons; Save stays disabled until the draft returns
 * to a consistent state (via propagation, a consistency check, or
 * regeneration). The code editor is hidden below the Code abstraction level.
 */

import { Api } from "./api.js";
import type { Abstraction, DraftDoc } from "./types.js";

export interface DialogOptions {
  abstraction: Abstraction;
  onSaved?: (invalidated: string[]) => void;
  onClosed?: () => void;
}

export class NodeEditDialog {
  root: HTMLElement;
  draft: DraftDoc | null = null;
  private busy = false;
  private errorMessage = "";

  constructor(
    private api: Api,
    private projectId: string,
    private nodeId: string,
    private options: DialogOptions,
  ) {
    this.root = document.createElement("div");
    this.root.className = "dialog node-edit-dialog";
    this.root.dataset.nodeId = nodeId;
  }

  async open(parent: HTMLElement): Promise<void> {
    this.draft = await this.api.getDraft(this.projectId, this.nodeId, true);
    parent.appendChild(this.root);
    this.render();
  }

  private setBusy(flag: boolean) {
    this.busy = flag;
    this.root.classList.toggle("busy", flag);
    this.render();
  }

  private async mutate(action: () => Promise<DraftDoc | void>): Promise<void> {
    this.setBusy(true);
    this.errorMessage = "";
    try {
      const draft = await action();
      if (draft) this.draft = draft;
    } catch (error) {
      this.errorMessage = error instanceof Error ? error.message : String(error);
    } finally {
      this.setBusy(false);
    }
  }

  async editLayer(layer: string, content: unknown): Promise<void> {
    await this.mutate(() => this.api.editDraft(this.projectId, this.nodeId, layer, content));
  }

  async propagate(fromLayer: string): Promise<void> {
    await this.mutate(() => this.api.propagateDraft(this.projectId, this.nodeId, fromLayer));
  }

  async checkConsistency(): Promise<void> {
    await this.mutate(async () => {
      await this.api.checkDraft(this.projectId, this.nodeId);
      return this.api.getDraft(this.projectId, this.nodeId);
    });
  }

  async regenerate(): Promise<void> {
    await this.mutate(() => this.api.regenerateDraft(this.projectId, this.nodeId));
  }

  async save(): Promise<void> {
    if (!this.canSave()) return;
    this.setBusy(true);
    try {
      const result = await this.api.saveDraft(this.projectId, this.nodeId);
      this.options.onSaved?.(result.invalidated);
      this.close();
    } catch (error) {
      this.errorMessage = error instanceof Error ? error.message : String(error);
      this.setBusy(false);
    }
  }

  close(): void {
    this.root.remove();
    this.options.onClosed?.();
  }

  canSave(): boolean {
    return !this.busy && this.draft?.status === "consistent";
  }

  render(): void {
    const draft = this.draft;
    if (!draft) return;
    const showCode = this.options.abstraction === "code";
    this.root.innerHTML = `
      <div class="dialog-header">
        <span class="dialog-title">Edit node</span>
        <button class="btn-check-consistency">Check Consistency</button>
        <button class="btn-regenerate">Regenerate</button>
        <button class="btn-save" ${this.canSave() ? "" : "disabled"}>Save</button>
        <button class="btn-cancel">Cancel</button>
      </div>
      <div class="dialog-warnings ${draft.status === "consistent" ? "hidden" : ""}">
        ${draft.status === "consistent" ? "" : draft.warnings.map((w) => `<div class="warning">⚠ ${escapeHtml(w)}</div>`).join("") || '<div class="warning">⚠ layers may not be consistent</div>'}
      </div>
      <div class="dialog-error">${escapeHtml(this.errorMessage)}</div>
      <label>Title
        <input class="field-title" value="${escapeAttr(draft.title)}">
        <button class="btn-propagate" data-layer="title" title="propagate this change">⇄</button>
      </label>
      <label>Summary label
        <input class="field-label" value="${escapeAttr(draft.label)}">
        <button class="btn-propagate" data-layer="label" title="propagate this change">⇄</button>
      </label>
      <label>Requirements
        <textarea class="field-requirements" rows="6">${escapeHtml(draft.requirements.join("\n"))}</textarea>
        <button class="btn-propagate" data-layer="requirements" title="propagate this change">⇄</button>
      </label>
      <label class="${showCode ? "" : "hidden"}">Code
        <textarea class="field-code" rows="12">${escapeHtml(draft.code ?? "")}</textarea>
        <button class="btn-propagate" data-layer="code" title="propagate this change">⇄</button>
      </label>
    `;
    this.wire();
  }

  private wire(): void {
    const q = <T extends Element>(sel: string) => this.root.querySelector(sel) as T | null;
    q<HTMLButtonElement>(".btn-save")?.addEventListener("click", () => void this.save());
    q<HTMLButtonElement>(".btn-cancel")?.addEventListener("click", () => this.close());
    q<HTMLButtonElement>(".btn-check-consistency")?.addEventListener("click", () => void this.checkConsistency());
    q<HTMLButtonElement>(".btn-regenerate")?.addEventListener("click", () => void this.regenerate());
    q<HTMLInputElement>(".field-title")?.addEventListener("change", (event) => {
      void this.editLayer("title", (event.target as HTMLInputElement).value);
    });
    q<HTMLInputElement>(".field-label")?.addEventListener("change", (event) => {
      void this.editLayer("label", (event.target as HTMLInputElement).value);
    });
    q<HTMLTextAreaElement>(".field-requirements")?.addEventListener("change", (event) => {
      const lines = (event.target as HTMLTextAreaElement).value.split("\n").filter((l) => l.trim());
      void this.editLayer("requirements", lines);
    });
    q<HTMLTextAreaElement>(".field-code")?.addEventListener("change", (event) => {
      void this.editLayer("code", (event.target as HTMLTextAreaElement).value);
    });
    this.root.querySelectorAll<HTMLButtonElement>(".btn-propagate").forEach((button) => {
      button.addEventListener("click", () => void this.propagate(button.dataset.layer!));
    });
  }
}

function escapeHtml(text: string): string {
  return text.replace(/[&<>]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;" })[c]!);
}

function escapeAttr(text: string): string {
  return escapeHtml(text).replace(/"/g, "&quot;");
}
