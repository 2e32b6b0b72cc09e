// @vitest-environment happy-dom
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { Api } from "../src/api.js";
import { NodeEditDialog } from "../src/dialog.js";
import { startServer, TestServer } from "./server.js";

let server: TestServer;
let api: Api;
let pid: string;
let plotStatistics: string;

beforeAll(async () => {
  server = await startServer();
  api = new Api(server.base);
  const imported = await api.importProject("beaks.flowco.json");
  pid = imported.project_id;
  const job = await api.run(pid);
  const done = await api.waitJob(job.job_id);
  expect(done.status).toBe("done");
  const project = await api.getProject(pid);
  plotStatistics = project.graph.nodes.find((n) => n.title === "Plot-Statistics")!.id;
}, 120_000);

afterAll(() => server?.stop());

describe("node edit dialog", () => {
  it("disables Save while inconsistent and enables it after propagation", async () => {
    const dialog = new NodeEditDialog(api, pid, plotStatistics, { abstraction: "requirements" });
    await dialog.open(document.body);

    // Unedited drafts are consistent; Save is available.
    expect(dialog.draft!.status).toBe("consistent");
    expect(dialog.root.querySelector<HTMLButtonElement>(".btn-save")!.disabled).toBe(false);

    // Editing a layer makes consistency unknown: Save must disable and a warning appear.
    const requirements = dialog.draft!.requirements.concat(["The plot highlights the interval bounds."]);
    const textarea = dialog.root.querySelector<HTMLTextAreaElement>(".field-requirements")!;
    textarea.value = requirements.join("\n");
    textarea.dispatchEvent(new Event("change", { bubbles: true }));
    await waitFor(() => dialog.draft!.status === "unknown");
    expect(dialog.root.querySelector<HTMLButtonElement>(".btn-save")!.disabled).toBe(true);
    expect(dialog.root.querySelector(".dialog-warnings")!.classList.contains("hidden")).toBe(false);
    expect(dialog.root.querySelector(".dialog-warnings")!.textContent).toContain("consistent");

    // Propagating the requirements change updates the other layers and re-enables Save.
    dialog.root
      .querySelector<HTMLButtonElement>('.btn-propagate[data-layer="requirements"]')!
      .dispatchEvent(new MouseEvent("click", { bubbles: true }));
    await waitFor(() => dialog.draft!.status === "consistent");
    expect(dialog.root.querySelector<HTMLButtonElement>(".btn-save")!.disabled).toBe(false);
    expect(dialog.draft!.requirements).toContain("The plot highlights the interval bounds.");
    expect(dialog.draft!.code).toContain("axvline");

    // Saving commits the layers and stages the node for re-evaluation.
    const before = (await api.getProject(pid)).graph.version;
    dialog.root.querySelector<HTMLButtonElement>(".btn-save")!
      .dispatchEvent(new MouseEvent("click", { bubbles: true }));
    await waitFor(() => !document.body.contains(dialog.root));
    const project = await api.getProject(pid);
    expect(project.graph.version).toBeGreaterThan(before);
    const node = project.graph.nodes.find((n) => n.id === plotStatistics)!;
    expect(node.requirements).toContain("The plot highlights the interval bounds.");
    expect(node.phase).toBe("CODE_READY");
  });

  it("hides the code editor below the Code abstraction level", async () => {
    const dialog = new NodeEditDialog(api, pid, plotStatistics, { abstraction: "requirements" });
    await dialog.open(document.body);
    const codeField = dialog.root.querySelector(".field-code")!.closest("label")!;
    expect(codeField.classList.contains("hidden")).toBe(true);
    dialog.close();

    const codeDialog = new NodeEditDialog(api, pid, plotStatistics, { abstraction: "code" });
    await codeDialog.open(document.body);
    const visible = codeDialog.root.querySelector(".field-code")!.closest("label")!;
    expect(visible.classList.contains("hidden")).toBe(false);
    codeDialog.close();
  });

  it("rejects code edits that do not parse", async () => {
    const dialog = new NodeEditDialog(api, pid, plotStatistics, { abstraction: "code" });
    await dialog.open(document.body);
    await dialog.editLayer("code", "def broken(:");
    expect(dialog.root.querySelector(".dialog-error")!.textContent).toContain("parse");
    dialog.close();
  });
});

async function waitFor(predicate: () => boolean, timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (!predicate()) {
    if (Date.now() > deadline) throw new Error("condition not reached in time");
    await new Promise((resolve) => setTimeout(resolve, 50));
  }
}
